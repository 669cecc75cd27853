#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "stylecond/generator.hpp"

namespace stylecond {

struct DiscriminatorConfig {
  int num_levels = 5;
  int max_channels = 256;
  int min_channels = 32;
  int feature_dim = 512;        // dimension of phi(x)
  int mbstd_group = 4;
  bool conditional = false;
  /// Ablation: feed the condition as extra input channels instead of the
  /// projection term.
  bool concat_condition = false;
  std::vector<int> embed_widths = kDefaultEmbeddingWidths;

  int channels(int level) const { return std::max(min_channels, max_channels >> (level - 1)); }
  void validate() const;

  friend bool operator==(const DiscriminatorConfig&, const DiscriminatorConfig&) = default;
};

/// Critic geometry mirroring a generator config.
DiscriminatorConfig discriminator_config_for(const SynthesisConfig& g);

json discriminator_config_to_json(const DiscriminatorConfig& c);
DiscriminatorConfig discriminator_config_from_json(const json& j);

/// Appends the per-group standard deviation of the features (averaged over
/// channels and pixels) as one extra channel. Groups are min(group, N) samples;
/// when N is not divisible the group size falls back to 1.
torch::Tensor minibatch_stddev(const torch::Tensor& x, int group);

class DiscriminatorImpl : public torch::nn::Module {
 public:
  DiscriminatorImpl(const DiscriminatorConfig& config, Rng& rng);

  const DiscriminatorConfig& config() const { return config_; }

  /// Image trunk: [N, 3, H, W] (plus condition channels in concat mode) ->
  /// phi(x) [N, feature_dim].
  torch::Tensor features(const torch::Tensor& image, const std::optional<torch::Tensor>& condition = std::nullopt,
                         int level = 0, double alpha = 1.0);

  /// Logits [N]. Unconditional: b(phi). Projection: b(phi) + <phi, P psi(c)>.
  torch::Tensor forward(const torch::Tensor& image, const std::optional<torch::Tensor>& condition = std::nullopt,
                        int level = 0, double alpha = 1.0);

  /// Unconditional head b(phi) alone.
  torch::Tensor head(const torch::Tensor& phi);

  /// psi(c) [N, 512] from the critic's own embedding network.
  torch::Tensor condition_embedding(const torch::Tensor& condition);

  EqualizedLinear& head_layer() { return head_; }
  EqualizedLinear& projection() { return projection_; }

 private:
  struct Block {
    EqualizedConv2d conv0{nullptr}, conv1{nullptr};
  };

  DiscriminatorConfig config_;
  std::vector<EqualizedConv2d> from_rgb_;  // index level - 1
  std::vector<Block> blocks_;               // index level - 1 (level >= 2)
  EqualizedConv2d final_conv_{nullptr};
  EqualizedLinear final_fc_{nullptr};
  EqualizedLinear head_{nullptr};
  EmbeddingNet embedding_{nullptr};
  EqualizedLinear projection_{nullptr};
};
TORCH_MODULE(Discriminator);

/// R1 from logits already computed on `x` (which must require grad).
torch::Tensor r1_from_logits(const torch::Tensor& logits, const torch::Tensor& x, double gamma);

/// R1 = gamma / 2 * mean_n ||d(sum D) / d x_n||^2 over the batch, built with a
/// differentiable graph so it can be minimized. Throws NumericError when the
/// input gradient is not finite.
torch::Tensor r1_penalty(const std::function<torch::Tensor(const torch::Tensor&)>& critic, const torch::Tensor& real,
                         double gamma);
torch::Tensor r1_penalty(Discriminator& d, const torch::Tensor& real, const std::optional<torch::Tensor>& condition,
                         double gamma, int level = 0, double alpha = 1.0);

}  // namespace stylecond
