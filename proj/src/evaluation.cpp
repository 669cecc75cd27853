#include "stylecond/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include "stylecond/errors.hpp"

namespace stylecond {

FeatureStats feature_stats(const Eigen::MatrixXd& features) {
  const Eigen::Index n = features.rows();
  if (n < 2) throw ValidationError("features", "need at least 2 samples");
  const Eigen::RowVectorXd ref = features.row(0);
  Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(features.cols());
  Eigen::MatrixXd outer = Eigen::MatrixXd::Zero(features.cols(), features.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::RowVectorXd d = features.row(i) - ref;
    sum += d;
    outer.noalias() += d.transpose() * d;
  }
  const Eigen::RowVectorXd mean_shift = sum / static_cast<double>(n);
  FeatureStats s;
  s.count = n;
  s.mean = (ref + mean_shift).transpose();
  s.covariance = (outer - static_cast<double>(n) * mean_shift.transpose() * mean_shift) / static_cast<double>(n - 1);
  s.covariance = (0.5 * (s.covariance + s.covariance.transpose())).eval();
  return s;
}

namespace {

Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(const Eigen::MatrixXd& a, const char* what) {
  if (a.rows() != a.cols()) throw ValidationError(what, "matrix must be square");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (a + a.transpose()));
  if (es.info() != Eigen::Success) throw NumericError(std::string(what) + ": eigendecomposition did not converge");
  return es;
}

Eigen::MatrixXd apply_spectral(const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>& es, double (*f)(double)) {
  Eigen::VectorXd v = es.eigenvalues().unaryExpr(f);
  return es.eigenvectors() * v.asDiagonal() * es.eigenvectors().transpose();
}

double clamped_sqrt(double x) { return std::sqrt(std::max(x, 0.0)); }

double trace_sqrt_one_order(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const Eigen::MatrixXd ra = apply_spectral(eig(a, "sigma1"), clamped_sqrt);
  const Eigen::MatrixXd m = ra * b * ra;
  const auto es = eig(m, "sqrt(sigma1) sigma2 sqrt(sigma1)");
  return es.eigenvalues().unaryExpr(&clamped_sqrt).sum();
}

}  // namespace

Eigen::MatrixXd sqrtm_psd(const Eigen::MatrixXd& a) { return apply_spectral(eig(a, "matrix"), clamped_sqrt); }

Eigen::MatrixXd sqrtm_product(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const auto ea = eig(a, "sigma1");
  const double tol = std::max(ea.eigenvalues().cwiseAbs().maxCoeff(), 1.0) * 1e-12;
  Eigen::VectorXd root = ea.eigenvalues().unaryExpr(&clamped_sqrt);
  Eigen::VectorXd inv_root = ea.eigenvalues().unaryExpr([tol](double x) { return x > tol ? 1.0 / std::sqrt(x) : 0.0; });
  const Eigen::MatrixXd& v = ea.eigenvectors();
  const Eigen::MatrixXd ra = v * root.asDiagonal() * v.transpose();
  const Eigen::MatrixXd ra_inv = v * inv_root.asDiagonal() * v.transpose();
  const Eigen::MatrixXd m_root = apply_spectral(eig(ra * b * ra, "sqrt(sigma1) sigma2 sqrt(sigma1)"), clamped_sqrt);
  return ra * m_root * ra_inv;
}

double trace_sqrtm_product(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) { return trace_sqrt_one_order(a, b); }

double frechet_distance(const FeatureStats& a, const FeatureStats& b) {
  if (a.dim() != b.dim()) {
    throw ValidationError("stats", "dimension mismatch (" + std::to_string(a.dim()) + " vs " + std::to_string(b.dim()) + ")");
  }
  const double mean_term = (a.mean - b.mean).squaredNorm();
  const double tr = 0.5 * (trace_sqrt_one_order(a.covariance, b.covariance) +
                           trace_sqrt_one_order(b.covariance, a.covariance));
  double d = mean_term + (a.covariance.trace() + b.covariance.trace()) - 2.0 * tr;
  if (d < 0 && d > -1e-6) d = 0;
  return d;
}

namespace {

class RandomFeatureNetImpl : public torch::nn::Module {
 public:
  explicit RandomFeatureNetImpl(Rng& rng) {
    const int widths[3] = {16, 32, kRandomFeatureDim};
    int in = 3;
    for (int i = 0; i < 3; ++i) {
      convs_.push_back(register_module("conv" + std::to_string(i), EqualizedConv2d(in, widths[i], 3, rng, 2)));
      in = widths[i];
    }
  }
  torch::Tensor forward(torch::Tensor x) {
    for (auto& c : convs_) x = lrelu_gain(c->forward(x));
    return x.mean({2, 3});
  }

 private:
  std::vector<EqualizedConv2d> convs_;
};
TORCH_MODULE(RandomFeatureNet);

}  // namespace

FeatureExtractor random_feature_extractor(std::uint64_t seed) {
  Rng rng(seed);
  auto net = std::make_shared<RandomFeatureNet>(rng);
  (*net)->to(torch::kDouble);
  return [net](const torch::Tensor& images) {
    torch::NoGradGuard guard;
    auto f = (*net)->forward(images.to(torch::kDouble)).contiguous();
    return Eigen::MatrixXd(Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        f.data_ptr<double>(), f.size(0), f.size(1)));
  };
}

FeatureStats extract_features(const torch::Tensor& images, const FeatureExtractor& extractor, int chunk) {
  const int64_t n = images.size(0);
  if (n < 2) throw ValidationError("images", "need at least 2 images");
  std::vector<Eigen::MatrixXd> parts;
  Eigen::Index rows = 0, cols = 0;
  for (int64_t i = 0; i < n; i += chunk) {
    parts.push_back(extractor(images.slice(0, i, std::min<int64_t>(n, i + chunk))));
    rows += parts.back().rows();
    cols = parts.back().cols();
  }
  Eigen::MatrixXd all(rows, cols);
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    all.middleRows(r, p.rows()) = p;
    r += p.rows();
  }
  return feature_stats(all);
}

double fid(const torch::Tensor& real_images, const torch::Tensor& generated_images, const FeatureExtractor& extractor) {
  return frechet_distance(extract_features(real_images, extractor), extract_features(generated_images, extractor));
}

torch::Tensor dataset_images(const Dataset& data, int first, int count) {
  if (first < 0 || count < 1 || first + count > static_cast<int>(data.entries.size())) {
    throw ValidationError("range", "outside the dataset");
  }
  std::vector<torch::Tensor> imgs;
  for (int i = first; i < first + count; ++i) imgs.push_back(to_tensor(data.entries[i].model_image));
  return torch::stack(imgs);
}

torch::Tensor generate_images(Generator& g, int n, std::uint64_t seed, const std::vector<const DatasetEntry*>& entries,
                              int batch) {
  torch::NoGradGuard guard;
  const SynthesisConfig& c = g->config();
  if (c.conditional && entries.empty()) throw ValidationError("entries", "conditional generation needs conditions");
  Rng rng(seed);
  std::vector<torch::Tensor> out;
  for (int i = 0; i < n; i += batch) {
    const int m = std::min(batch, n - i);
    auto z = sample_latents(rng, m, c.latent_dim).to(g->dtype());
    std::optional<torch::Tensor> cond;
    if (c.conditional) {
      std::vector<torch::Tensor> cs;
      for (int k = 0; k < m; ++k) {
        const DatasetEntry* e = entries[(i + k) % entries.size()];
        cs.push_back(condition_tensor(e->outfit, e->pose, c.height(), c.width()));
      }
      cond = torch::stack(cs).to(g->dtype());
    }
    auto w = g->style(z, cond);
    out.push_back(g->synthesize(broadcast_style(w, c.total_layers()), 0, 1.0, &rng, true).clamp(0.0, 1.0).to(torch::kFloat));
  }
  return torch::cat(out);
}

ImageTensor generate_conditional(Generator& g, const OutfitSpec& outfit, const PoseSpec& pose, std::uint64_t seed) {
  torch::NoGradGuard guard;
  const SynthesisConfig& c = g->config();
  if (!c.conditional) throw ValidationError("checkpoint", "generator is unconditional");
  Rng rng(seed);
  auto z = sample_latents(rng, 1, c.latent_dim).to(g->dtype());
  auto cond = condition_tensor(outfit, pose, c.height(), c.width()).unsqueeze(0).to(g->dtype());
  auto w = g->style(z, cond);
  auto img = g->synthesize(broadcast_style(w, c.total_layers()), 0, 1.0, &rng, true).clamp(0.0, 1.0);
  return from_tensor(img[0]);
}

ImageSource oracle_source(int h, int w) {
  return [h, w](const OutfitSpec& o, const PoseSpec& p, std::uint64_t) { return render_reference(o, p, h, w); };
}

ImageSource generator_source(Generator& g, std::uint64_t seed) {
  return [g, seed](const OutfitSpec& o, const PoseSpec& p, std::uint64_t index) mutable {
    return generate_conditional(g, o, p, splitmix64(seed ^ splitmix64(index)));
  };
}

FidelityReport evaluate_conditional_fidelity(const ImageSource& source, int n, std::uint64_t seed,
                                             const DatasetConfig& sampling) {
  if (n < 1) throw ValidationError("n", "must be positive");
  DatasetConfig cfg = sampling;
  cfg.seed = seed;
  FidelityReport r;
  double err_sum = 0, det_sum = 0;
  int det_count = 0;
  std::array<double, kNumSlots> color_sum{};
  for (int i = 0; i < n; ++i) {
    const auto [outfit, pose] = sample_pair(cfg, i);
    const ImageTensor img = source(outfit, pose, static_cast<std::uint64_t>(i));
    const int h = img.height, w = img.width;
    const PoseMeasurement m = measure_pose(img);
    for (int j = 0; j < kNumJoints; ++j) {
      const double d = pixel_distance(m.peak[j], pose.keypoints[j], h, w);
      err_sum += d;
      ++r.total_joints;
      if (m.detected[j]) {
        det_sum += d;
        ++det_count;
      } else {
        ++r.undetected_joints;
      }
    }
    for (int s = 0; s < kNumSlots; ++s) {
      if (!outfit.slots[s]) continue;
      const RegionMask region = garment_region(outfit, pose, static_cast<Category>(s), h, w);
      if (std::find(region.begin(), region.end(), 1) == region.end()) continue;
      color_sum[s] += color_distance(measure_dominant_color(img, region), outfit.slots[s]->base_color);
      ++r.color_count[s];
    }
    ++r.sample_count;
  }
  r.mean_pose_error_px = err_sum / r.total_joints;
  r.detected_pose_error_px = det_count > 0 ? det_sum / det_count : 0.0;
  for (int s = 0; s < kNumSlots; ++s) r.color_error[s] = r.color_count[s] > 0 ? color_sum[s] / r.color_count[s] : 0.0;
  return r;
}

double random_pose_baseline(int n, std::uint64_t seed, const DatasetConfig& sampling) {
  DatasetConfig a = sampling, b = sampling;
  a.seed = seed;
  b.seed = splitmix64(seed + 1);
  double sum = 0;
  for (int i = 0; i < n; ++i) {
    const PoseSpec p = sample_pair(a, i).second;
    const PoseSpec q = sample_pair(b, i).second;
    for (int j = 0; j < kNumJoints; ++j) {
      sum += pixel_distance(p.keypoints[j], q.keypoints[j], sampling.model_height, sampling.model_width);
    }
  }
  return sum / (static_cast<double>(n) * kNumJoints);
}

BodyTypeReport body_type_consistency(const ImageSource& source, const OutfitSpec& outfit, int trials,
                                     std::uint64_t seed, int h, int w) {
  if (trials < 1) throw ValidationError("trials", "must be positive");
  validate(outfit);
  BodyTypeReport r;
  std::array<double, 3> sums{};
  int increasing = 0;
  for (int t = 0; t < trials; ++t) {
    const Rng base = Rng::derive(seed, static_cast<std::uint64_t>(t));
    std::array<double, 3> dist{};
    for (int k = 0; k < 3; ++k) {
      Rng rng = base;
      const PoseSpec pose = sample_pose(rng, kBodyScales[k], 1.0);
      const ImageTensor img = source(outfit, pose, static_cast<std::uint64_t>(t));
      if (img.height != h || img.width != w) throw ValidationError("source", "image resolution mismatch");
      const PoseMeasurement m = measure_pose(img);
      dist[k] = pixel_distance(m.peak[kThorax], m.peak[kPelvis], h, w);
      sums[k] += dist[k];
    }
    r.trials.push_back(dist);
    if (dist[0] < dist[1] && dist[1] < dist[2]) ++increasing;
  }
  for (int k = 0; k < 3; ++k) r.table.push_back({kBodyScales[k], sums[k] / trials});
  r.increasing_fraction = static_cast<double>(increasing) / trials;
  return r;
}

json fidelity_to_json(const FidelityReport& r) {
  return {{"pose_error_px", r.mean_pose_error_px},
          {"detected_pose_error_px", r.detected_pose_error_px},
          {"undetected_joints", r.undetected_joints},
          {"total_joints", r.total_joints},
          {"color_errors", r.color_error},
          {"color_counts", r.color_count},
          {"sample_count", r.sample_count}};
}

json body_type_to_json(const BodyTypeReport& r) {
  json rows = json::array();
  for (const auto& row : r.table) rows.push_back({{"body_scale", row.body_scale}, {"thorax_pelvis_px", row.mean_thorax_pelvis_px}});
  return {{"rows", rows}, {"increasing_fraction", r.increasing_fraction}, {"trials", r.trials.size()}};
}

}  // namespace stylecond
