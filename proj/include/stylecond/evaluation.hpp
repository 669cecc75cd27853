#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "stylecond/dataset.hpp"
#include "stylecond/generator.hpp"

namespace stylecond {

// ---------------------------------------------------------------------------
// Frechet distance
// ---------------------------------------------------------------------------

struct FeatureStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;  // unbiased (n - 1)
  std::int64_t count = 0;

  int dim() const { return static_cast<int>(mean.size()); }
};

/// Mean and covariance of the rows of `features` (n x d, n >= 2). Rows are
/// centred on the first row before accumulation, so identical rows give an
/// exactly zero covariance.
FeatureStats feature_stats(const Eigen::MatrixXd& features);

/// Symmetric positive semi-definite square root via eigendecomposition with
/// eigenvalues clamped at zero.
Eigen::MatrixXd sqrtm_psd(const Eigen::MatrixXd& a);

/// (A B)^{1/2} for symmetric PSD A, B, computed as A^{1/2} (A^{1/2} B A^{1/2})^{1/2} A^{-1/2}
/// (pseudo-inverse on A's null space).
Eigen::MatrixXd sqrtm_product(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

/// Tr((A B)^{1/2}) = sum of sqrt(eig(A^{1/2} B A^{1/2})).
double trace_sqrtm_product(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

/// ||mu1 - mu2||^2 + Tr(S1 + S2 - 2 (S1 S2)^{1/2}). The trace term is averaged
/// over both argument orders so the result is exactly symmetric; residues in
/// (-1e-6, 0) are clamped to 0.
double frechet_distance(const FeatureStats& a, const FeatureStats& b);

// ---------------------------------------------------------------------------
// Feature extraction
// ---------------------------------------------------------------------------

/// Maps an image batch [N, 3, H, W] to an N x d feature matrix.
using FeatureExtractor = std::function<Eigen::MatrixXd(const torch::Tensor& images)>;

inline constexpr int kRandomFeatureDim = 64;

/// Fixed-seed random convolutional projection: three stride-2 3x3 convs with
/// leaky rectifiers, global average pooling, 64 features.
FeatureExtractor random_feature_extractor(std::uint64_t seed = 2024);

/// Runs the extractor in chunks of `chunk` images and accumulates stats in
/// input order. Needs at least 2 images.
FeatureStats extract_features(const torch::Tensor& images, const FeatureExtractor& extractor, int chunk = 256);

double fid(const torch::Tensor& real_images, const torch::Tensor& generated_images, const FeatureExtractor& extractor);

/// Stacks model images of dataset entries [first, first + count) into [N, 3, H, W].
torch::Tensor dataset_images(const Dataset& data, int first, int count);

// ---------------------------------------------------------------------------
// Generation helpers
// ---------------------------------------------------------------------------

/// n images from the generator with latents drawn from `seed`; conditional
/// generators take their conditions from `entries` (cycled). Clamped to [0, 1].
torch::Tensor generate_images(Generator& g, int n, std::uint64_t seed, const std::vector<const DatasetEntry*>& entries = {},
                              int batch = 32);

/// One image for (outfit, pose) with the latent drawn from `seed`.
ImageTensor generate_conditional(Generator& g, const OutfitSpec& outfit, const PoseSpec& pose, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Conditional fidelity
// ---------------------------------------------------------------------------

/// Produces an image for a requested (outfit, pose); `index` distinguishes
/// samples so latents can be seeded per sample.
using ImageSource = std::function<ImageTensor(const OutfitSpec&, const PoseSpec&, std::uint64_t index)>;

ImageSource oracle_source(int h, int w);
ImageSource generator_source(Generator& g, std::uint64_t seed);

struct FidelityReport {
  /// Mean pixel distance between true keypoints and the measured peak of each
  /// joint, over all joints of all samples (undetected joints included).
  double mean_pose_error_px = 0;
  /// Same, restricted to joints that passed the detection threshold.
  double detected_pose_error_px = 0;
  int undetected_joints = 0;
  int total_joints = 0;
  /// Mean distance between each present slot's base colour and the dominant
  /// colour measured in its garment region; 0 where the slot never appeared.
  std::array<double, kNumSlots> color_error{};
  std::array<int, kNumSlots> color_count{};
  int sample_count = 0;
};

/// Samples n (outfit, pose) pairs exactly as the dataset does (seeded by
/// `seed`), renders them through `source`, and measures pose and colours.
FidelityReport evaluate_conditional_fidelity(const ImageSource& source, int n, std::uint64_t seed,
                                             const DatasetConfig& sampling = {});

/// Mean joint distance (pixels) between independent pairs of sampled poses:
/// the error of a guess that ignores the requested pose.
double random_pose_baseline(int n, std::uint64_t seed, const DatasetConfig& sampling = {});

struct BodyTypeRow {
  double body_scale = 1.0;
  double mean_thorax_pelvis_px = 0;
};

struct BodyTypeReport {
  std::vector<BodyTypeRow> table;           // per scale, averaged over trials
  std::vector<std::array<double, 3>> trials;  // per trial distance at each scale
  double increasing_fraction = 0;           // trials strictly increasing in scale
};

inline constexpr std::array<double, 3> kBodyScales = {0.8, 1.0, 1.2};

/// For each trial draws joint angles once and renders the fixed outfit at
/// body scales 0.8, 1.0, 1.2 through `source` (same sample index per trial),
/// measuring the thorax-pelvis distance.
BodyTypeReport body_type_consistency(const ImageSource& source, const OutfitSpec& outfit, int trials,
                                     std::uint64_t seed, int h = 64, int w = 48);

json fidelity_to_json(const FidelityReport& r);
json body_type_to_json(const BodyTypeReport& r);

}  // namespace stylecond
