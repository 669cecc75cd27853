#include "stylecond/conditioning.hpp"

#include <cmath>
#include <string>

#include "stylecond/errors.hpp"

namespace stylecond {

double default_heatmap_sigma(int h) { return kHeatmapSigma64 * h / 64.0; }

ImageTensor keypoints_to_heatmap(const PoseSpec& pose, int h, int w, double sigma) {
  if (!(sigma > 0)) throw ValidationError("sigma", "must be positive");
  if (h < 1 || w < 1) throw ValidationError("resolution", "must be positive");
  ImageTensor out(kNumJoints, h, w);
  const double inv = 1.0 / (2 * sigma * sigma);
  for (int j = 0; j < kNumJoints; ++j) {
    const PixelLoc c = keypoint_pixel(pose.keypoints[j], h, w);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double dy = y - c.row, dx = x - c.col;
        out.at(j, y, x) = static_cast<float>(std::exp(-(dx * dx + dy * dy) * inv));
      }
    }
  }
  return out;
}

ImageTensor stack_articles(const OutfitSpec& outfit, int h, int w) {
  validate(outfit);
  ImageTensor out(kArticleChannels, h, w);
  for (int i = 0; i < kNumSlots; ++i) {
    const ImageTensor a = render_article_image(outfit.slots[i], h, w);
    std::copy(a.data.begin(), a.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(3 * i * a.plane_size()));
  }
  return out;
}

torch::Tensor condition_tensor(const OutfitSpec& outfit, const PoseSpec& pose, int h, int w) {
  return torch::cat({to_tensor(stack_articles(outfit, h, w)),
                     to_tensor(keypoints_to_heatmap(pose, h, w, default_heatmap_sigma(h)))},
                    0);
}

EmbeddingNetImpl::EmbeddingNetImpl(const std::vector<int>& widths, Rng& rng, int out_dim) : out_dim_(out_dim) {
  if (widths.empty()) throw ValidationError("embed_widths", "needs at least one stage");
  int in = kConditionChannels;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    convs_.push_back(register_module("conv" + std::to_string(i), EqualizedConv2d(in, widths[i], 3, rng, 2)));
    in = widths[i];
  }
  head_ = register_module("head", EqualizedLinear(in, out_dim, rng));
}

torch::Tensor EmbeddingNetImpl::forward(const torch::Tensor& condition) {
  if (condition.dim() != 4 || condition.size(1) != kConditionChannels) {
    throw ValidationError("condition", "expected [N, 34, H, W]");
  }
  auto x = condition;
  for (auto& conv : convs_) x = lrelu_gain(conv->forward(x));
  return head_->forward(x.mean({2, 3}));
}

std::vector<float> embed_condition(const ImageTensor& stack, const ImageTensor& heatmap, EmbeddingNet& net) {
  if (stack.channels != kArticleChannels) throw ValidationError("stack", "expected 18 channels");
  if (heatmap.channels != kNumJoints) throw ValidationError("heatmap", "expected 16 channels");
  if (stack.height != heatmap.height || stack.width != heatmap.width) {
    throw ValidationError("heatmap", "spatial size differs from the article stack");
  }
  torch::NoGradGuard guard;
  auto param = net->parameters().front();
  auto c = torch::cat({to_tensor(stack), to_tensor(heatmap)}, 0).unsqueeze(0).to(param.dtype());
  auto e = net->forward(c).squeeze(0).to(torch::kFloat).contiguous();
  return {e.data_ptr<float>(), e.data_ptr<float>() + e.numel()};
}

torch::Tensor make_style_input(const torch::Tensor& z, const std::optional<torch::Tensor>& e, bool conditional,
                               int latent_dim) {
  if (z.size(-1) != latent_dim) {
    throw ValidationError("z", "expected dimension " + std::to_string(latent_dim));
  }
  if (!conditional) return z;
  if (!e || !e->defined()) throw ValidationError("e", "conditional mode requires a condition embedding");
  return torch::cat({z, *e}, -1);
}

}  // namespace stylecond
