#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include "stylecond/conditioning.hpp"
#include "stylecond/json_io.hpp"

namespace stylecond {

struct SynthesisConfig {
  int num_levels = 5;          // output (4, 3) * 2^(num_levels - 1)
  int latent_dim = 512;
  int style_dim = 512;
  int mapping_depth = 8;       // 0: identity (debug)
  double mapping_lr_mul = 0.01;
  int max_channels = 256;      // width at 4x3, halved per level
  int min_channels = 32;
  bool noise = false;
  bool conditional = false;
  std::vector<int> embed_widths = kDefaultEmbeddingWidths;

  int total_layers() const { return 2 * num_levels; }
  int height(int level = 0) const;  // level 0 means num_levels
  int width(int level = 0) const;
  int channels(int level) const;
  int style_input_dim() const;

  /// Throws ValidationError naming the offending field.
  void validate() const;

  friend bool operator==(const SynthesisConfig&, const SynthesisConfig&) = default;
};

json config_to_json(const SynthesisConfig& c);
SynthesisConfig config_from_json(const json& j);

/// Per-channel instance normalization over the spatial axes followed by the
/// style scale and bias: y_scale * (x - mu) / sqrt(var + eps) + y_bias.
/// x is [N, C, H, W]; y_scale and y_bias are [N, C].
torch::Tensor adain(const torch::Tensor& x, const torch::Tensor& y_scale, const torch::Tensor& y_bias,
                    double epsilon = 1e-8);

class GeneratorImpl : public torch::nn::Module {
 public:
  GeneratorImpl(const SynthesisConfig& config, Rng& rng);

  const SynthesisConfig& config() const { return config_; }

  /// Mapping network: [N, style_input_dim] -> [N, style_dim]. In conditional
  /// mode the latent and embedding halves are pixel-normalized separately.
  torch::Tensor map(const torch::Tensor& style_input);

  /// Condition embedding [N, 34, H, W] -> [N, 512] (conditional only).
  torch::Tensor embed(const torch::Tensor& condition);

  /// z (and the condition, in conditional mode) through embedding and mapping.
  torch::Tensor style(const torch::Tensor& z, const std::optional<torch::Tensor>& condition = std::nullopt);

  /// Raw (unclamped) synthesis from one style per layer. `level` selects the
  /// output pyramid level (0 means the last); `alpha` < 1 blends in the
  /// upsampled previous level's RGB output. Noise layers, when configured,
  /// draw from `noise_rng`.
  torch::Tensor synthesize(const std::vector<torch::Tensor>& styles, int level = 0, double alpha = 1.0,
                           Rng* noise_rng = nullptr, bool check_finite = false);

  /// Floating-point type of the parameters.
  torch::ScalarType dtype();

 private:
  struct Layer {
    EqualizedConv2d conv{nullptr};
    EqualizedLinear affine{nullptr};
    torch::Tensor noise_weight;
  };
  torch::Tensor apply_layer(int index, const torch::Tensor& x, const torch::Tensor& w, Rng* noise_rng);

  SynthesisConfig config_;
  std::vector<EqualizedLinear> mapping_;
  EmbeddingNet embedding_{nullptr};
  torch::Tensor const_input_;
  std::vector<Layer> layers_;
  std::vector<EqualizedConv2d> to_rgb_;
};
TORCH_MODULE(Generator);

/// [n, dim] standard normal latents drawn from `rng`.
torch::Tensor sample_latents(Rng& rng, int n, int dim);

/// Clamped synthesis of the first batch element as an ImageTensor.
ImageTensor synthesize(Generator& g, const std::vector<torch::Tensor>& styles);

// ---------------------------------------------------------------------------
// Style mixing
// ---------------------------------------------------------------------------

enum class StyleSource { Source, Target };

struct LayerStyleAssignment {
  std::vector<StyleSource> layers;  // index 0 is layer 1

  int total_layers() const { return static_cast<int>(layers.size()); }
  friend bool operator==(const LayerStyleAssignment&, const LayerStyleAssignment&) = default;
};

/// Inclusive 1-based layer range.
struct LayerRange {
  int lo = 1, hi = 1;
  friend bool operator==(const LayerRange&, const LayerRange&) = default;
};

inline constexpr int kCanonicalLayers = 18;

/// Maps a range in 18-layer indexing to a config with `total_layers` layers:
/// [ceil(lo * L / 18), ceil(hi * L / 18)].
LayerRange remap_layer_range(LayerRange range, int total_layers);

enum class MixPreset { ColorTransfer, PoseTransfer };
std::string_view preset_name(MixPreset p);
MixPreset parse_preset(std::string_view name);

/// Source layers of a preset in 18-layer indexing (color 13-18, pose 1-3).
LayerRange preset_source_range(MixPreset p);

/// Source on the remapped preset range, Target elsewhere.
LayerStyleAssignment preset_assignment(MixPreset p, int total_layers);

/// Builds an assignment from explicit canonical ranges; throws
/// ValidationError unless the remapped ranges partition 1..total_layers.
LayerStyleAssignment assignment_from_ranges(const std::vector<LayerRange>& source,
                                            const std::vector<LayerRange>& target, int total_layers);

/// Layer i receives w_source when assigned Source, otherwise w_target.
std::vector<torch::Tensor> style_mix(const torch::Tensor& w_source, const torch::Tensor& w_target,
                                     const LayerStyleAssignment& assignment);

std::vector<torch::Tensor> broadcast_style(const torch::Tensor& w, int total_layers);

}  // namespace stylecond
