#include "stylecond/generator.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "stylecond/errors.hpp"

namespace stylecond {

int SynthesisConfig::height(int level) const { return 4 << ((level > 0 ? level : num_levels) - 1); }
int SynthesisConfig::width(int level) const { return 3 << ((level > 0 ? level : num_levels) - 1); }

int SynthesisConfig::channels(int level) const {
  return std::max(min_channels, max_channels >> (level - 1));
}

int SynthesisConfig::style_input_dim() const { return latent_dim + (conditional ? kEmbeddingDim : 0); }

void SynthesisConfig::validate() const {
  if (num_levels < 1 || num_levels > 9) throw ValidationError("num_levels", "must be in [1, 9]");
  if (latent_dim < 1) throw ValidationError("latent_dim", "must be positive");
  if (style_dim < 1) throw ValidationError("style_dim", "must be positive");
  if (mapping_depth < 0) throw ValidationError("mapping_depth", "must be non-negative");
  if (mapping_depth == 0 && style_input_dim() != style_dim) {
    throw ValidationError("mapping_depth", "identity mapping needs style input width == style_dim");
  }
  if (!(mapping_lr_mul > 0)) throw ValidationError("mapping_lr_mul", "must be positive");
  if (min_channels < 1 || max_channels < min_channels) {
    throw ValidationError("max_channels", "need 1 <= min_channels <= max_channels");
  }
  if (conditional && embed_widths.empty()) throw ValidationError("embed_widths", "needs at least one stage");
}

json config_to_json(const SynthesisConfig& c) {
  return {{"num_levels", c.num_levels},       {"latent_dim", c.latent_dim},
          {"style_dim", c.style_dim},         {"mapping_depth", c.mapping_depth},
          {"mapping_lr_mul", c.mapping_lr_mul}, {"max_channels", c.max_channels},
          {"min_channels", c.min_channels},   {"noise", c.noise},
          {"conditional", c.conditional},     {"embed_widths", c.embed_widths}};
}

SynthesisConfig config_from_json(const json& j) {
  SynthesisConfig c;
  try {
    c.num_levels = j.value("num_levels", c.num_levels);
    c.latent_dim = j.value("latent_dim", c.latent_dim);
    c.style_dim = j.value("style_dim", c.style_dim);
    c.mapping_depth = j.value("mapping_depth", c.mapping_depth);
    c.mapping_lr_mul = j.value("mapping_lr_mul", c.mapping_lr_mul);
    c.max_channels = j.value("max_channels", c.max_channels);
    c.min_channels = j.value("min_channels", c.min_channels);
    c.noise = j.value("noise", c.noise);
    c.conditional = j.value("conditional", c.conditional);
    c.embed_widths = j.value("embed_widths", c.embed_widths);
  } catch (const json::exception& e) {
    throw ValidationError("config", e.what());
  }
  c.validate();
  return c;
}

torch::Tensor adain(const torch::Tensor& x, const torch::Tensor& y_scale, const torch::Tensor& y_bias,
                    double epsilon) {
  auto mu = x.mean({2, 3}, true);
  auto centered = x - mu;
  auto var = (centered * centered).mean({2, 3}, true);
  auto normed = centered / torch::sqrt(var + epsilon);
  return y_scale.unsqueeze(-1).unsqueeze(-1) * normed + y_bias.unsqueeze(-1).unsqueeze(-1);
}

namespace {

torch::Tensor pixel_norm(const torch::Tensor& x) {
  return x * torch::rsqrt((x * x).mean(-1, true) + 1e-8);
}

}  // namespace

GeneratorImpl::GeneratorImpl(const SynthesisConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  int in = config_.style_input_dim();
  for (int i = 0; i < config_.mapping_depth; ++i) {
    mapping_.push_back(register_module("mapping" + std::to_string(i),
                                       EqualizedLinear(in, config_.style_dim, rng, config_.mapping_lr_mul)));
    in = config_.style_dim;
  }
  if (config_.conditional) {
    embedding_ = register_module("embedding", EmbeddingNet(config_.embed_widths, rng));
  }
  const_input_ = register_parameter("const", torch::ones({1, config_.channels(1), 4, 3}));
  for (int level = 1; level <= config_.num_levels; ++level) {
    for (int k = 0; k < 2; ++k) {
      const int index = static_cast<int>(layers_.size());
      const int c_in = (k == 0 && level > 1) ? config_.channels(level - 1) : config_.channels(level);
      const int c_out = config_.channels(level);
      const std::string name = "layer" + std::to_string(index);
      Layer layer;
      layer.conv = register_module(name + "_conv", EqualizedConv2d(c_in, c_out, 3, rng));
      layer.affine = register_module(name + "_affine", EqualizedLinear(config_.style_dim, 2 * c_out, rng));
      {
        torch::NoGradGuard guard;
        layer.affine->bias.slice(0, 0, c_out).fill_(1.0);
      }
      if (config_.noise) {
        layer.noise_weight = register_parameter(name + "_noise", torch::zeros({c_out}));
      }
      layers_.push_back(layer);
    }
    to_rgb_.push_back(register_module("to_rgb" + std::to_string(level - 1),
                                      EqualizedConv2d(config_.channels(level), 3, 1, rng)));
  }
}

torch::ScalarType GeneratorImpl::dtype() { return const_input_.scalar_type(); }

torch::Tensor GeneratorImpl::map(const torch::Tensor& style_input) {
  if (style_input.dim() != 2 || style_input.size(1) != config_.style_input_dim()) {
    throw ValidationError("style_input", "expected [N, " + std::to_string(config_.style_input_dim()) + "]");
  }
  if (mapping_.empty()) return style_input;
  torch::Tensor x;
  if (config_.conditional) {
    auto parts = style_input.split_with_sizes({config_.latent_dim, kEmbeddingDim}, 1);
    x = torch::cat({pixel_norm(parts[0]), pixel_norm(parts[1])}, 1);
  } else {
    x = pixel_norm(style_input);
  }
  for (auto& fc : mapping_) x = lrelu_gain(fc->forward(x));
  return x;
}

torch::Tensor GeneratorImpl::embed(const torch::Tensor& condition) {
  if (!config_.conditional) throw ValidationError("condition", "unconditional generator has no embedding network");
  return embedding_->forward(condition);
}

torch::Tensor GeneratorImpl::style(const torch::Tensor& z, const std::optional<torch::Tensor>& condition) {
  std::optional<torch::Tensor> e;
  if (config_.conditional) {
    if (!condition) throw ValidationError("condition", "conditional generator needs a condition");
    e = embed(*condition);
  }
  return map(make_style_input(z, e, config_.conditional, config_.latent_dim));
}

torch::Tensor GeneratorImpl::apply_layer(int index, const torch::Tensor& x, const torch::Tensor& w,
                                         Rng* noise_rng) {
  Layer& layer = layers_[index];
  auto y = layer.conv->forward(x);
  if (config_.noise) {
    if (noise_rng == nullptr) throw ValidationError("noise_rng", "noise is enabled but no generator was given");
    auto noise = torch::empty({y.size(0), 1, y.size(2), y.size(3)}, y.options());
    fill_normal(noise, *noise_rng);
    y = y + layer.noise_weight.view({1, -1, 1, 1}) * noise;
  }
  y = lrelu_gain(y);
  auto s = layer.affine->forward(w);
  const int64_t c = y.size(1);
  return adain(y, s.slice(1, 0, c), s.slice(1, c, 2 * c));
}

torch::Tensor GeneratorImpl::synthesize(const std::vector<torch::Tensor>& styles, int level, double alpha,
                                        Rng* noise_rng, bool check_finite) {
  if (static_cast<int>(styles.size()) != config_.total_layers()) {
    throw ValidationError("styles", "expected " + std::to_string(config_.total_layers()) + " per-layer styles, got " +
                                        std::to_string(styles.size()));
  }
  if (level <= 0) level = config_.num_levels;
  if (level > config_.num_levels) throw ValidationError("level", "exceeds num_levels");
  const int64_t n = styles[0].size(0);
  auto x = const_input_.expand({n, -1, -1, -1});
  torch::Tensor prev;
  for (int l = 1; l <= level; ++l) {
    if (l > 1) x = upsample2x(x);
    for (int k = 0; k < 2; ++k) {
      const int index = 2 * (l - 1) + k;
      x = apply_layer(index, x, styles[index], noise_rng);
      if (check_finite && !torch::isfinite(x).all().item<bool>()) {
        throw NumericError("non-finite activation at generator layer " + std::to_string(index + 1));
      }
    }
    if (l == level - 1) prev = x;
  }
  auto out = to_rgb_[level - 1]->forward(x) + 0.5;
  if (alpha < 1.0 && level > 1) {
    auto low = upsample2x(to_rgb_[level - 2]->forward(prev) + 0.5);
    out = alpha * out + (1.0 - alpha) * low;
  }
  return out;
}

torch::Tensor sample_latents(Rng& rng, int n, int dim) {
  auto z = torch::empty({n, dim});
  fill_normal(z, rng);
  return z;
}

ImageTensor synthesize(Generator& g, const std::vector<torch::Tensor>& styles) {
  torch::NoGradGuard guard;
  auto out = g->synthesize(styles, 0, 1.0, nullptr, true).clamp(0.0, 1.0);
  return from_tensor(out[0]);
}

LayerRange remap_layer_range(LayerRange range, int total_layers) {
  if (range.lo < 1 || range.lo > range.hi || range.hi > kCanonicalLayers) {
    throw ValidationError("range", "need 1 <= lo <= hi <= 18");
  }
  if (total_layers < 2 || total_layers % 2 != 0) throw ValidationError("total_layers", "must be even and >= 2");
  auto ceil_div = [](int a, int b) { return (a + b - 1) / b; };
  return {ceil_div(range.lo * total_layers, kCanonicalLayers), ceil_div(range.hi * total_layers, kCanonicalLayers)};
}

std::string_view preset_name(MixPreset p) {
  return p == MixPreset::ColorTransfer ? "color_transfer" : "pose_transfer";
}

MixPreset parse_preset(std::string_view name) {
  if (name == "color_transfer") return MixPreset::ColorTransfer;
  if (name == "pose_transfer") return MixPreset::PoseTransfer;
  throw ValidationError("preset", "expected color_transfer or pose_transfer");
}

LayerRange preset_source_range(MixPreset p) {
  return p == MixPreset::ColorTransfer ? LayerRange{13, 18} : LayerRange{1, 3};
}

LayerStyleAssignment preset_assignment(MixPreset p, int total_layers) {
  const LayerRange r = remap_layer_range(preset_source_range(p), total_layers);
  LayerStyleAssignment a;
  a.layers.assign(total_layers, StyleSource::Target);
  for (int i = r.lo; i <= r.hi; ++i) a.layers[i - 1] = StyleSource::Source;
  return a;
}

LayerStyleAssignment assignment_from_ranges(const std::vector<LayerRange>& source,
                                            const std::vector<LayerRange>& target, int total_layers) {
  std::vector<int> owner(total_layers, -1);
  auto mark = [&](const std::vector<LayerRange>& ranges, int who, const char* field) {
    for (std::size_t k = 0; k < ranges.size(); ++k) {
      const LayerRange r = remap_layer_range(ranges[k], total_layers);
      for (int i = r.lo; i <= r.hi; ++i) {
        if (owner[i - 1] != -1) {
          throw ValidationError(std::string(field) + "[" + std::to_string(k) + "]",
                                "layer " + std::to_string(i) + " assigned twice after remapping");
        }
        owner[i - 1] = who;
      }
    }
  };
  mark(source, 0, "source");
  mark(target, 1, "target");
  LayerStyleAssignment a;
  for (int i = 0; i < total_layers; ++i) {
    if (owner[i] == -1) {
      throw ValidationError("layers", "layer " + std::to_string(i + 1) + " not assigned after remapping");
    }
    a.layers.push_back(owner[i] == 0 ? StyleSource::Source : StyleSource::Target);
  }
  return a;
}

std::vector<torch::Tensor> style_mix(const torch::Tensor& w_source, const torch::Tensor& w_target,
                                     const LayerStyleAssignment& assignment) {
  std::vector<torch::Tensor> out;
  out.reserve(assignment.layers.size());
  for (StyleSource s : assignment.layers) out.push_back(s == StyleSource::Source ? w_source : w_target);
  return out;
}

std::vector<torch::Tensor> broadcast_style(const torch::Tensor& w, int total_layers) {
  return std::vector<torch::Tensor>(total_layers, w);
}

}  // namespace stylecond
