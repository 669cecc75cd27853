#include "stylecond/layers.hpp"

#include <cmath>
#include <cstring>

#include "stylecond/errors.hpp"

namespace stylecond {

void fill_normal(torch::Tensor& t, Rng& rng, double std) {
  torch::NoGradGuard guard;
  auto cpu = torch::empty(t.sizes(), torch::kDouble);
  double* p = cpu.data_ptr<double>();
  for (int64_t i = 0; i < cpu.numel(); ++i) p[i] = rng.normal() * std;
  t.copy_(cpu);
}

torch::Tensor lrelu_gain(const torch::Tensor& x) {
  return torch::leaky_relu(x, 0.2) * std::sqrt(2.0);
}

EqualizedLinearImpl::EqualizedLinearImpl(int in, int out, Rng& rng, double lr_mul_, double bias_init, bool with_bias)
    : in_features(in), out_features(out), lr_mul(lr_mul_), weight_scale(lr_mul_ / std::sqrt(static_cast<double>(in))) {
  weight = register_parameter("weight", torch::empty({out, in}));
  fill_normal(weight, rng, 1.0 / lr_mul);
  if (with_bias) {
    bias = register_parameter("bias", torch::full({out}, bias_init / lr_mul));
  }
}

torch::Tensor EqualizedLinearImpl::forward(const torch::Tensor& x) {
  auto out = torch::matmul(x, (weight * weight_scale).t());
  if (bias.defined()) out = out + bias * lr_mul;
  return out;
}

EqualizedConv2dImpl::EqualizedConv2dImpl(int in, int out, int kernel_, Rng& rng, int stride_, bool with_bias)
    : in_channels(in), out_channels(out), kernel(kernel_), stride(stride_),
      weight_scale(1.0 / std::sqrt(static_cast<double>(in) * kernel_ * kernel_)) {
  weight = register_parameter("weight", torch::empty({out, in, kernel, kernel}));
  fill_normal(weight, rng);
  if (with_bias) {
    bias = register_parameter("bias", torch::zeros({out}));
  }
}

torch::Tensor EqualizedConv2dImpl::forward(const torch::Tensor& x) {
  namespace F = torch::nn::functional;
  auto opts = F::Conv2dFuncOptions().stride(stride).padding(kernel / 2);
  if (bias.defined()) opts = opts.bias(bias);
  return F::conv2d(x, weight * weight_scale, opts);
}

torch::Tensor to_tensor(const ImageTensor& img) {
  return torch::from_blob(const_cast<float*>(img.data.data()), {img.channels, img.height, img.width}, torch::kFloat)
      .clone();
}

ImageTensor from_tensor(const torch::Tensor& t) {
  if (t.dim() != 3) throw ValidationError("tensor", "expected a [C, H, W] tensor");
  auto c = t.detach().to(torch::kFloat).contiguous();
  ImageTensor img(static_cast<int>(c.size(0)), static_cast<int>(c.size(1)), static_cast<int>(c.size(2)));
  std::memcpy(img.data.data(), c.data_ptr<float>(), img.data.size() * sizeof(float));
  return img;
}

torch::Tensor upsample2x(const torch::Tensor& x) {
  return x.repeat_interleave(2, 2).repeat_interleave(2, 3);
}

torch::Tensor downsample2x(const torch::Tensor& x) {
  return torch::avg_pool2d(x, 2);
}

std::uint64_t parameter_checksum(const torch::nn::Module& module) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (const auto& p : module.parameters()) {
    auto c = p.detach().contiguous();
    const auto* bytes = static_cast<const unsigned char*>(c.data_ptr());
    const auto n = static_cast<std::size_t>(c.numel()) * c.element_size();
    for (std::size_t i = 0; i < n; ++i) {
      hash ^= bytes[i];
      hash *= 0x100000001b3ULL;
    }
  }
  return hash;
}

}  // namespace stylecond
