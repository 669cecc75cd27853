#include "stylecond/discriminator.hpp"

#include <cmath>
#include <string>

#include "stylecond/errors.hpp"

namespace stylecond {

void DiscriminatorConfig::validate() const {
  if (num_levels < 1 || num_levels > 9) throw ValidationError("num_levels", "must be in [1, 9]");
  if (min_channels < 1 || max_channels < min_channels) {
    throw ValidationError("max_channels", "need 1 <= min_channels <= max_channels");
  }
  if (feature_dim < 1) throw ValidationError("feature_dim", "must be positive");
  if (mbstd_group < 1) throw ValidationError("mbstd_group", "must be positive");
  if (conditional && embed_widths.empty()) throw ValidationError("embed_widths", "needs at least one stage");
}

DiscriminatorConfig discriminator_config_for(const SynthesisConfig& g) {
  DiscriminatorConfig d;
  d.num_levels = g.num_levels;
  d.max_channels = g.max_channels;
  d.min_channels = g.min_channels;
  d.feature_dim = g.style_dim;
  d.conditional = g.conditional;
  d.embed_widths = g.embed_widths;
  return d;
}

json discriminator_config_to_json(const DiscriminatorConfig& c) {
  return {{"num_levels", c.num_levels},     {"max_channels", c.max_channels},
          {"min_channels", c.min_channels}, {"feature_dim", c.feature_dim},
          {"mbstd_group", c.mbstd_group},   {"conditional", c.conditional},
          {"concat_condition", c.concat_condition}, {"embed_widths", c.embed_widths}};
}

DiscriminatorConfig discriminator_config_from_json(const json& j) {
  DiscriminatorConfig c;
  try {
    c.num_levels = j.value("num_levels", c.num_levels);
    c.max_channels = j.value("max_channels", c.max_channels);
    c.min_channels = j.value("min_channels", c.min_channels);
    c.feature_dim = j.value("feature_dim", c.feature_dim);
    c.mbstd_group = j.value("mbstd_group", c.mbstd_group);
    c.conditional = j.value("conditional", c.conditional);
    c.concat_condition = j.value("concat_condition", c.concat_condition);
    c.embed_widths = j.value("embed_widths", c.embed_widths);
  } catch (const json::exception& e) {
    throw ValidationError("discriminator", e.what());
  }
  c.validate();
  return c;
}

torch::Tensor minibatch_stddev(const torch::Tensor& x, int group) {
  const int64_t n = x.size(0), c = x.size(1), h = x.size(2), w = x.size(3);
  int64_t g = std::min<int64_t>(group, n);
  if (n % g != 0) g = 1;
  auto y = x.view({g, n / g, c, h, w});
  y = y - y.mean(0, true);
  auto sd = torch::sqrt((y * y).mean(0) + 1e-8);     // [n/g, c, h, w]
  auto s = sd.mean({1, 2, 3}).view({n / g, 1, 1, 1});  // [n/g, 1, 1, 1]
  s = s.repeat({g, 1, h, w});
  return torch::cat({x, s}, 1);
}

DiscriminatorImpl::DiscriminatorImpl(const DiscriminatorConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  const int in_ch = 3 + (config_.conditional && config_.concat_condition ? kConditionChannels : 0);
  for (int level = 1; level <= config_.num_levels; ++level) {
    from_rgb_.push_back(register_module("from_rgb" + std::to_string(level - 1),
                                        EqualizedConv2d(in_ch, config_.channels(level), 1, rng)));
  }
  blocks_.resize(config_.num_levels);
  for (int level = 2; level <= config_.num_levels; ++level) {
    const std::string name = "block" + std::to_string(level - 1);
    blocks_[level - 1].conv0 = register_module(
        name + "_conv0", EqualizedConv2d(config_.channels(level), config_.channels(level), 3, rng));
    blocks_[level - 1].conv1 = register_module(
        name + "_conv1", EqualizedConv2d(config_.channels(level), config_.channels(level - 1), 3, rng));
  }
  const int c1 = config_.channels(1);
  final_conv_ = register_module("final_conv", EqualizedConv2d(c1 + 1, c1, 3, rng));
  final_fc_ = register_module("final_fc", EqualizedLinear(c1 * 12, config_.feature_dim, rng));
  head_ = register_module("head", EqualizedLinear(config_.feature_dim, 1, rng));
  if (config_.conditional && !config_.concat_condition) {
    embedding_ = register_module("embedding", EmbeddingNet(config_.embed_widths, rng));
    projection_ = register_module("projection", EqualizedLinear(kEmbeddingDim, config_.feature_dim, rng, 1.0, 0.0, false));
  }
}

torch::Tensor DiscriminatorImpl::features(const torch::Tensor& image, const std::optional<torch::Tensor>& condition,
                                          int level, double alpha) {
  if (level <= 0) level = config_.num_levels;
  if (level > config_.num_levels) throw ValidationError("level", "exceeds num_levels");
  const int64_t h = 4 << (level - 1), w = 3 << (level - 1);
  if (image.dim() != 4 || image.size(1) != 3 || image.size(2) != h || image.size(3) != w) {
    throw ValidationError("image", "expected [N, 3, " + std::to_string(h) + ", " + std::to_string(w) + "]");
  }
  torch::Tensor x = image;
  if (config_.conditional && config_.concat_condition) {
    if (!condition) throw ValidationError("condition", "conditional critic needs a condition");
    auto c = *condition;
    while (c.size(2) > h) c = downsample2x(c);
    if (c.size(2) != h || c.size(3) != w) throw ValidationError("condition", "spatial size does not match image");
    x = torch::cat({x, c}, 1);
  }
  auto y = lrelu_gain(from_rgb_[level - 1]->forward(x));
  for (int l = level; l >= 2; --l) {
    auto& b = blocks_[l - 1];
    y = lrelu_gain(b.conv0->forward(y));
    y = downsample2x(lrelu_gain(b.conv1->forward(y)));
    if (l == level && alpha < 1.0) {
      auto low = lrelu_gain(from_rgb_[level - 2]->forward(downsample2x(x)));
      y = alpha * y + (1.0 - alpha) * low;
    }
  }
  y = minibatch_stddev(y, config_.mbstd_group);
  y = lrelu_gain(final_conv_->forward(y));
  return lrelu_gain(final_fc_->forward(y.flatten(1)));
}

torch::Tensor DiscriminatorImpl::head(const torch::Tensor& phi) { return head_->forward(phi).squeeze(1); }

torch::Tensor DiscriminatorImpl::condition_embedding(const torch::Tensor& condition) {
  if (!embedding_) throw ValidationError("condition", "critic has no condition embedding network");
  return embedding_->forward(condition);
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& image, const std::optional<torch::Tensor>& condition,
                                         int level, double alpha) {
  auto phi = features(image, condition, level, alpha);
  auto logit = head(phi);
  if (config_.conditional && !config_.concat_condition) {
    if (!condition) throw ValidationError("condition", "conditional critic needs a condition");
    auto c = *condition;
    if (c.size(2) != image.size(2) || c.size(3) != image.size(3)) {
      throw ValidationError("condition", "spatial size does not match image");
    }
    // P carries a 1/sqrt(feature_dim) runtime scale so the projection term
    // starts at unit scale like the head.
    const double scale = 1.0 / std::sqrt(static_cast<double>(config_.feature_dim));
    logit = logit + (phi * projection_->forward(condition_embedding(c))).sum(1) * scale;
  }
  return logit;
}

torch::Tensor r1_from_logits(const torch::Tensor& logits, const torch::Tensor& x, double gamma) {
  if (!(gamma >= 0)) throw ValidationError("gamma", "must be non-negative");
  if (gamma == 0) return torch::zeros({}, x.options().requires_grad(false));
  auto grad = torch::autograd::grad({logits.sum()}, {x}, {}, true, true)[0];
  if (!torch::isfinite(grad).all().item<bool>()) throw NumericError("R1: non-finite input gradient");
  return grad.pow(2).flatten(1).sum(1).mean() * (0.5 * gamma);
}

torch::Tensor r1_penalty(const std::function<torch::Tensor(const torch::Tensor&)>& critic, const torch::Tensor& real,
                         double gamma) {
  if (!(gamma >= 0)) throw ValidationError("gamma", "must be non-negative");
  if (real.size(0) < 1) throw ValidationError("real", "batch is empty");
  if (gamma == 0) return torch::zeros({}, real.options());
  auto x = real.detach().requires_grad_(true);
  return r1_from_logits(critic(x), x, gamma);
}

torch::Tensor r1_penalty(Discriminator& d, const torch::Tensor& real, const std::optional<torch::Tensor>& condition,
                         double gamma, int level, double alpha) {
  return r1_penalty([&](const torch::Tensor& x) { return d->forward(x, condition, level, alpha); }, real, gamma);
}

}  // namespace stylecond
