#pragma once

#include <optional>
#include <vector>

#include "stylecond/layers.hpp"
#include "stylecond/synth_data.hpp"

namespace stylecond {

inline constexpr int kArticleChannels = 3 * kNumSlots;             // 18
inline constexpr int kConditionChannels = kArticleChannels + kNumJoints;  // 34
inline constexpr int kEmbeddingDim = 512;

/// Heatmap width in pixels at 64 rows; scaled proportionally with height.
inline constexpr double kHeatmapSigma64 = 1.5;
double default_heatmap_sigma(int h);

/// 16 x h x w; channel j is exp(-d^2 / (2 sigma^2)) with d the pixel distance
/// to the pixel holding keypoint j, so each channel peaks at exactly 1.0.
ImageTensor keypoints_to_heatmap(const PoseSpec& pose, int h, int w, double sigma);

/// 18 x h x w; channels 3i..3i+2 are render_article_image(slot i, h, w).
ImageTensor stack_articles(const OutfitSpec& outfit, int h, int w);

/// Article stack followed by the pose heatmap as one [34, h, w] tensor.
torch::Tensor condition_tensor(const OutfitSpec& outfit, const PoseSpec& pose, int h, int w);

/// Convolutional trunk over the 34-channel condition: stride-2 3x3 convs with
/// leaky rectifiers, global average pooling, affine to 512.
class EmbeddingNetImpl : public torch::nn::Module {
 public:
  EmbeddingNetImpl(const std::vector<int>& widths, Rng& rng, int out_dim = kEmbeddingDim);

  /// [N, 34, H, W] -> [N, out_dim].
  torch::Tensor forward(const torch::Tensor& condition);

  int out_dim() const { return out_dim_; }

 private:
  std::vector<EqualizedConv2d> convs_;
  EqualizedLinear head_{nullptr};
  int out_dim_;
};
TORCH_MODULE(EmbeddingNet);

inline const std::vector<int> kDefaultEmbeddingWidths = {32, 64, 128, 256, 512};

/// Forward pass on one (stack, heatmap) pair; throws ValidationError when the
/// spatial sizes disagree.
std::vector<float> embed_condition(const ImageTensor& stack, const ImageTensor& heatmap, EmbeddingNet& net);

/// Unconditional: z. Conditional: concat(z, e). Throws ValidationError when
/// `conditional` is set and `e` is missing, or when z has the wrong size.
torch::Tensor make_style_input(const torch::Tensor& z, const std::optional<torch::Tensor>& e, bool conditional,
                               int latent_dim = 512);

}  // namespace stylecond
