#pragma once

#include <torch/torch.h>

#include "stylecond/image.hpp"
#include "stylecond/rng.hpp"

namespace stylecond {

/// Fills `t` in place with N(0, std^2) draws from `rng`, in row-major order.
void fill_normal(torch::Tensor& t, Rng& rng, double std = 1.0);

/// Leaky ReLU (slope 0.2) followed by the sqrt(2) gain that keeps activations
/// at unit scale under equalized learning rate.
torch::Tensor lrelu_gain(const torch::Tensor& x);

/// Fully connected layer with runtime weight scaling (equalized learning
/// rate). Weights are stored N(0, 1/lr_mul^2) and scaled by lr_mul/sqrt(in).
class EqualizedLinearImpl : public torch::nn::Module {
 public:
  EqualizedLinearImpl(int in, int out, Rng& rng, double lr_mul = 1.0, double bias_init = 0.0, bool bias = true);

  torch::Tensor forward(const torch::Tensor& x);

  torch::Tensor weight, bias;
  int in_features, out_features;
  double lr_mul, weight_scale;
};
TORCH_MODULE(EqualizedLinear);

/// 2-D convolution with equalized learning rate; padding keeps "same" size at
/// stride 1 and halves (rounding up) at stride 2.
class EqualizedConv2dImpl : public torch::nn::Module {
 public:
  EqualizedConv2dImpl(int in, int out, int kernel, Rng& rng, int stride = 1, bool bias = true);

  torch::Tensor forward(const torch::Tensor& x);

  torch::Tensor weight, bias;
  int in_channels, out_channels, kernel, stride;
  double weight_scale;
};
TORCH_MODULE(EqualizedConv2d);

/// Converts between ImageTensor (C x H x W) and float tensors. `to_tensor`
/// returns a [C, H, W] tensor; stack several with torch::stack for a batch.
torch::Tensor to_tensor(const ImageTensor& img);
ImageTensor from_tensor(const torch::Tensor& t);

/// Nearest-neighbour 2x upsampling and 2x2 average pooling on NCHW tensors.
torch::Tensor upsample2x(const torch::Tensor& x);
torch::Tensor downsample2x(const torch::Tensor& x);

/// Order-sensitive FNV-1a checksum over every parameter's bytes.
std::uint64_t parameter_checksum(const torch::nn::Module& module);

}  // namespace stylecond
