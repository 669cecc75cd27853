#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include <torch/torch.h>

#include "stylecond/discriminator.hpp"
#include "stylecond/generator.hpp"
#include "stylecond/rng.hpp"

namespace stylecond::testing {

/// 4x3 single-level generator with small widths.
inline SynthesisConfig tiny_generator_config(bool conditional = false, int mapping_depth = 2) {
  SynthesisConfig c;
  c.num_levels = 1;
  c.latent_dim = 16;
  c.style_dim = 16;
  c.mapping_depth = mapping_depth;
  c.max_channels = 8;
  c.min_channels = 4;
  c.conditional = conditional;
  c.embed_widths = {4, 8};
  return c;
}

/// 8x6 two-level generator, for checks that need upsampling or several levels.
inline SynthesisConfig small_generator_config(bool conditional = false) {
  SynthesisConfig c = tiny_generator_config(conditional);
  c.num_levels = 2;
  return c;
}

inline DiscriminatorConfig tiny_discriminator_config(const SynthesisConfig& g) {
  DiscriminatorConfig d = discriminator_config_for(g);
  d.feature_dim = 16;
  return d;
}

inline torch::Tensor random_tensor(Rng& rng, std::vector<int64_t> shape, torch::ScalarType dtype = torch::kFloat) {
  auto t = torch::empty(shape, torch::kDouble);
  fill_normal(t, rng);
  return t.to(dtype);
}

/// Relative error between the autograd gradient of f() with respect to `param`
/// and central finite differences, over up to `max_entries` evenly spaced
/// entries: ||g_a - g_fd|| / max(||g_a||, ||g_fd||, floor).
inline double fd_gradient_error(const std::function<torch::Tensor()>& f, torch::Tensor param, int max_entries = 24,
                                double h = 1e-6, double floor = 1e-10) {
  auto out = f();
  auto grad = torch::autograd::grad({out}, {param}, {}, false, false, true)[0];
  if (!grad.defined()) grad = torch::zeros_like(param);
  grad = grad.flatten();
  const int64_t n = param.numel();
  const int64_t stride = std::max<int64_t>(1, n / max_entries);
  double diff = 0, na = 0, nf = 0;
  auto flat = param.data().view({-1});
  for (int64_t i = 0; i < n; i += stride) {
    const double orig = flat[i].item<double>();
    auto set = [&](double v) {
      torch::NoGradGuard guard;
      flat[i] = v;
    };
    set(orig + h);
    const double up = f().item<double>();
    set(orig - h);
    const double down = f().item<double>();
    set(orig);
    const double fd = (up - down) / (2 * h);
    const double an = grad[i].item<double>();
    diff += (an - fd) * (an - fd);
    na += an * an;
    nf += fd * fd;
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nf), floor});
}

}  // namespace stylecond::testing
