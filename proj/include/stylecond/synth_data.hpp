#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "stylecond/image.hpp"
#include "stylecond/rng.hpp"

namespace stylecond {

// ---------------------------------------------------------------------------
// Outfits
// ---------------------------------------------------------------------------

/// Canonical slot order. Article stacks, outfit JSON and dataset records all
/// index slots in this order.
enum class Category : int { Top = 0, Outerwear, Bottom, Footwear, Accessory1, Accessory2 };

inline constexpr int kNumSlots = 6;
inline constexpr std::array<std::string_view, kNumSlots> kCategoryNames = {
    "Top", "Outerwear", "Bottom", "Footwear", "Accessory1", "Accessory2"};

enum class Texture : int { Solid = 0, Stripes, Checker };
inline constexpr int kNumTextures = 3;

struct Rgb {
  double r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// Number of procedural silhouettes registered per category.
inline constexpr std::array<int, kNumSlots> kShapeCounts = {3, 3, 3, 2, 2, 2};

/// Garment color catalog. Every component is a multiple of 1/7 so the 8-level
/// color quantizer reproduces catalog colors exactly.
const std::vector<Rgb>& color_catalog();

struct ArticleSpec {
  Category category = Category::Top;
  Rgb base_color;
  int shape_id = 0;
  int texture_id = 0;

  friend bool operator==(const ArticleSpec&, const ArticleSpec&) = default;
};

struct OutfitSpec {
  std::array<std::optional<ArticleSpec>, kNumSlots> slots;

  friend bool operator==(const OutfitSpec&, const OutfitSpec&) = default;
};

/// Throws ValidationError naming the field if an invariant does not hold.
void validate(const ArticleSpec& article, std::string_view field = "article");
void validate(const OutfitSpec& outfit);

// ---------------------------------------------------------------------------
// Poses
// ---------------------------------------------------------------------------

inline constexpr int kNumJoints = 16;
enum Joint : int {
  kHeadTop = 0, kNeck, kThorax, kPelvis,
  kLShoulder, kRShoulder, kLElbow, kRElbow, kLWrist, kRWrist,
  kLHip, kRHip, kLKnee, kRKnee, kLAnkle, kRAnkle,
};
inline constexpr std::array<std::string_view, kNumJoints> kJointNames = {
    "head_top", "neck", "thorax", "pelvis", "l_shoulder", "r_shoulder",
    "l_elbow", "r_elbow", "l_wrist", "r_wrist", "l_hip", "r_hip",
    "l_knee", "r_knee", "l_ankle", "r_ankle"};
/// Parent of each joint in the kinematic tree (pelvis is the root).
inline constexpr std::array<int, kNumJoints> kJointParent = {
    kNeck, kThorax, kPelvis, -1, kNeck, kNeck, kLShoulder, kRShoulder,
    kLElbow, kRElbow, kPelvis, kPelvis, kLHip, kRHip, kLKnee, kRKnee};

struct Keypoint {
  double x = 0, y = 0;  // normalized: x by width, y by height
  friend bool operator==(const Keypoint&, const Keypoint&) = default;
};

struct PoseSpec {
  std::array<Keypoint, kNumJoints> keypoints{};
  double body_scale = 1.0;
  double build_width = 1.0;

  friend bool operator==(const PoseSpec&, const PoseSpec&) = default;
};

struct PoseLimits {
  double min_scale = 0.8, max_scale = 1.2;
  double box_lo = 0.05, box_hi = 0.95;
  /// Maximum joint-to-parent distance, in image-height units.
  double max_bone_length = 0.3;
  /// Minimum distance between any two joints, in image-height units.
  double min_joint_separation = 0.03;
  int max_retries = 1000;
};

void validate(const PoseSpec& pose, const PoseLimits& limits = {});

/// Pixel (row, col) holding keypoint j at resolution h x w.
struct PixelLoc {
  int row = 0, col = 0;
  friend bool operator==(const PixelLoc&, const PixelLoc&) = default;
};
PixelLoc keypoint_pixel(const Keypoint& kp, int h, int w);

/// Euclidean distance in pixels between two keypoints at resolution h x w.
double pixel_distance(const Keypoint& a, const Keypoint& b, int h, int w);

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

OutfitSpec sample_outfit(Rng& rng, double occupancy_prob);

/// Samples a front-facing pose. Limb lengths scale with body_scale, shoulder
/// and hip spans with body_scale * build_width. Poses leaving the containment
/// box or with colliding joints are resampled; throws std::runtime_error after
/// `limits.max_retries` rejections.
PoseSpec sample_pose(Rng& rng, double body_scale, double build_width,
                     const PoseLimits& limits = {});

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

inline constexpr float kGrayFill = 0.5f;
inline constexpr Rgb kSkinTone = {0.88, 0.70, 0.56};
inline constexpr Rgb kBackground = {0.92, 0.92, 0.92};
inline constexpr Rgb kArticleBackground = {1.0, 1.0, 1.0};

/// Reserved marker color for joint j: (0, 1, (j+1)/32).
Rgb joint_marker_color(int joint);

/// Flat-lay article image on a white background; absent article gives a
/// constant gray image. Requires h, w >= 4 and 4*w == 3*h.
ImageTensor render_article_image(const std::optional<ArticleSpec>& article, int h, int w);

/// Per-pixel owner labels for a reference render.
enum Label : std::uint8_t {
  kLabelBackground = 0,
  kLabelSkin = 1,
  kLabelGarment0 = 2,  // + slot index
  kLabelMarker = 8,
};

struct Rendering {
  ImageTensor image;
  std::vector<std::uint8_t> labels;  // h * w, row-major
};

/// Layered ground-truth "model photo": background, body, garments in draw
/// order (Bottom, Top, Outerwear, Footwear, Accessory1, Accessory2), then one
/// marker pixel per joint.
Rendering render_reference_with_labels(const OutfitSpec& outfit, const PoseSpec& pose, int h, int w);
ImageTensor render_reference(const OutfitSpec& outfit, const PoseSpec& pose, int h, int w);

// ---------------------------------------------------------------------------
// Measurement
// ---------------------------------------------------------------------------

struct PoseMeasurement {
  PoseSpec pose;  // undetected joints keep (0, 0)
  /// Highest-scoring pixel centre per joint, whether or not it passed the
  /// threshold.
  std::array<Keypoint, kNumJoints> peak{};
  std::array<double, kNumJoints> confidence{};
  std::array<bool, kNumJoints> detected{};

  int detected_count() const;
};

inline constexpr double kMarkerDetectionThreshold = 0.2;

/// Locates every joint marker. Each pixel is unmixed as
/// `alpha * marker + (1 - alpha) * under`, where `under` ranges over colours of
/// the surrounding 5x5 palette and their two- and three-way means; the blue
/// channel then decodes the joint. The score is alpha damped by the unmixing
/// residual. The best pixel per joint is reported; joints scoring below the
/// threshold are flagged undetected.
PoseMeasurement measure_pose(const ImageTensor& image,
                             double threshold = kMarkerDetectionThreshold);

/// Row-major h*w region mask.
using RegionMask = std::vector<std::uint8_t>;

enum class BodyPart { Torso, Legs, Arms, Head };
RegionMask body_region(const PoseSpec& pose, BodyPart part, int h, int w);

/// Visible pixels of the slot's garment in the reference render.
RegionMask garment_region(const OutfitSpec& outfit, const PoseSpec& pose, Category slot, int h, int w);

inline constexpr int kColorLevels = 8;

/// Modal 8-level quantized color within the region; returns the mean of the
/// pixels falling into the modal bin. Throws ValidationError on empty region.
Rgb measure_dominant_color(const ImageTensor& image, const RegionMask& region);

double color_distance(const Rgb& a, const Rgb& b);

}  // namespace stylecond
