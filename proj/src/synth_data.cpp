#include "stylecond/synth_data.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>

#include "stylecond/errors.hpp"

namespace stylecond {

namespace {

constexpr double kAspect = 0.75;  // width / height at every resolution

struct Vec2 {
  double x = 0, y = 0;
};
Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
Vec2 operator*(Vec2 a, double s) { return {a.x * s, a.y * s}; }
double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
double norm(Vec2 a) { return std::sqrt(dot(a, a)); }
Vec2 unit(Vec2 a) {
  const double n = norm(a);
  return n > 0 ? a * (1.0 / n) : Vec2{0, 1};
}
Vec2 lerp(Vec2 a, Vec2 b, double t) { return a + (b - a) * t; }

double segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = dot(ab, ab);
  const double t = len2 > 0 ? std::clamp(dot(p - a, ab) / len2, 0.0, 1.0) : 0.0;
  return norm(p - (a + ab * t));
}

/// Even-odd point-in-polygon.
bool inside_polygon(Vec2 p, const std::vector<Vec2>& poly) {
  bool inside = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const Vec2 a = poly[i], b = poly[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double xc = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (p.x < xc) inside = !inside;
    }
  }
  return inside;
}

using Shape = std::function<bool(Vec2)>;

Shape capsule(Vec2 a, Vec2 b, double r) {
  return [=](Vec2 p) { return segment_distance(p, a, b) <= r; };
}
Shape circle(Vec2 c, double r) {
  return [=](Vec2 p) { return norm(p - c) <= r; };
}
Shape polygon(std::vector<Vec2> pts) {
  return [pts = std::move(pts)](Vec2 p) { return inside_polygon(p, pts); };
}
Shape any_of(std::vector<Shape> parts) {
  return [parts = std::move(parts)](Vec2 p) {
    return std::any_of(parts.begin(), parts.end(), [&](const Shape& s) { return s(p); });
  };
}

Rgb shade_of(const Rgb& c) {
  const double lum = 0.299 * c.r + 0.587 * c.g + 0.114 * c.b;
  if (lum > 0.35) return {c.r * 0.6, c.g * 0.6, c.b * 0.6};
  return {c.r + (1 - c.r) * 0.4, c.g + (1 - c.g) * 0.4, c.b + (1 - c.b) * 0.4};
}

Rgb texture_color(const ArticleSpec& a, int row, int col) {
  switch (static_cast<Texture>(a.texture_id)) {
    case Texture::Stripes:
      return (row / 4) % 3 == 2 ? shade_of(a.base_color) : a.base_color;
    case Texture::Checker:
      return ((row / 4) % 2 == 0 && (col / 4) % 2 == 0) ? shade_of(a.base_color) : a.base_color;
    case Texture::Solid:
    default:
      return a.base_color;
  }
}

void put(ImageTensor& img, int row, int col, const Rgb& c) {
  img.at(0, row, col) = static_cast<float>(c.r);
  img.at(1, row, col) = static_cast<float>(c.g);
  img.at(2, row, col) = static_cast<float>(c.b);
}

void check_aspect(int h, int w, const char* what) {
  if (h < 4 || w < 4 || 4 * w != 3 * h) {
    throw ValidationError(what, "resolution " + std::to_string(h) + "x" + std::to_string(w) +
                                    " must be at least 4x4 with width/height = 3/4");
  }
}

// ----- body geometry (pixel space) -----------------------------------------

struct Skeleton {
  std::array<Vec2, kNumJoints> p{};
  double unit = 1;   // body_scale * image height, in pixels
  double build = 1;  // build_width
  Vec2 up{0, -1};    // torso axis, pelvis -> neck
  Vec2 lateral{1, 0};  // towards the subject's left joints
  Vec2 down() const { return up * -1.0; }

  Vec2 head_center() const { return lerp(p[kNeck], p[kHeadTop], 0.55); }
  double head_radius() const { return 0.45 * norm(p[kHeadTop] - p[kNeck]); }
};

Skeleton make_skeleton(const PoseSpec& pose, int h, int w) {
  Skeleton s;
  for (int j = 0; j < kNumJoints; ++j) {
    s.p[j] = {pose.keypoints[j].x * w, pose.keypoints[j].y * h};
  }
  s.unit = pose.body_scale * h;
  s.build = pose.build_width;
  s.up = unit(s.p[kNeck] - s.p[kPelvis]);
  s.lateral = unit(s.p[kLHip] - s.p[kRHip]);
  return s;
}

Shape torso_shape(const Skeleton& s) {
  const double u = s.unit;
  return any_of({
      polygon({s.p[kLShoulder], s.p[kRShoulder], s.p[kRHip], s.p[kLHip]}),
      capsule(s.p[kLShoulder], s.p[kRShoulder], 0.03 * u),
      capsule(s.p[kLHip], s.p[kRHip], 0.035 * u),
  });
}

Shape arms_shape(const Skeleton& s) {
  const double u = s.unit;
  return any_of({
      capsule(s.p[kLShoulder], s.p[kLElbow], 0.03 * u),
      capsule(s.p[kRShoulder], s.p[kRElbow], 0.03 * u),
      capsule(s.p[kLElbow], s.p[kLWrist], 0.025 * u),
      capsule(s.p[kRElbow], s.p[kRWrist], 0.025 * u),
      circle(s.p[kLWrist], 0.025 * u),
      circle(s.p[kRWrist], 0.025 * u),
  });
}

Shape legs_shape(const Skeleton& s) {
  const double u = s.unit;
  return any_of({
      capsule(s.p[kLHip], s.p[kLKnee], 0.042 * u),
      capsule(s.p[kRHip], s.p[kRKnee], 0.042 * u),
      capsule(s.p[kLKnee], s.p[kLAnkle], 0.033 * u),
      capsule(s.p[kRKnee], s.p[kRAnkle], 0.033 * u),
  });
}

Shape head_shape(const Skeleton& s) {
  return any_of({
      circle(s.head_center(), s.head_radius()),
      capsule(s.p[kNeck], s.head_center(), 0.022 * s.unit * s.build),
  });
}

std::vector<Vec2> scaled_about(const std::vector<Vec2>& pts, Vec2 c, double k) {
  std::vector<Vec2> out;
  out.reserve(pts.size());
  for (const auto& p : pts) out.push_back(c + (p - c) * k);
  return out;
}

Shape garment_shape(const ArticleSpec& a, const Skeleton& s) {
  const double u = s.unit;
  const auto& p = s.p;
  const Vec2 torso_c = (p[kLShoulder] + p[kRShoulder] + p[kLHip] + p[kRHip]) * 0.25;
  switch (a.category) {
    case Category::Bottom: {
      const Shape waist = capsule(p[kLHip], p[kRHip], 0.045 * u);
      if (a.shape_id == 0) {  // trousers
        return any_of({waist,
                       capsule(p[kLHip], p[kLKnee], 0.05 * u),
                       capsule(p[kRHip], p[kRKnee], 0.05 * u),
                       capsule(p[kLKnee], lerp(p[kLKnee], p[kLAnkle], 0.85), 0.041 * u),
                       capsule(p[kRKnee], lerp(p[kRKnee], p[kRAnkle], 0.85), 0.041 * u)});
      }
      if (a.shape_id == 1) {  // shorts
        return any_of({waist,
                       capsule(p[kLHip], lerp(p[kLHip], p[kLKnee], 0.45), 0.052 * u),
                       capsule(p[kRHip], lerp(p[kRHip], p[kRKnee], 0.45), 0.052 * u)});
      }
      // skirt
      const Vec2 lat = s.lateral;
      return any_of({waist, polygon({p[kLHip] + lat * (0.02 * u), p[kRHip] - lat * (0.02 * u),
                                     lerp(p[kRHip], p[kRKnee], 0.75) - lat * (0.06 * u),
                                     lerp(p[kLHip], p[kLKnee], 0.75) + lat * (0.06 * u)})});
    }
    case Category::Top: {
      std::vector<Shape> parts = {polygon(scaled_about(
          {p[kLShoulder], p[kRShoulder], p[kRHip], p[kLHip]}, torso_c, 1.06))};
      parts.push_back(capsule(p[kLShoulder], p[kRShoulder], 0.035 * u));
      if (a.shape_id == 0) {  // tee
        parts.push_back(capsule(p[kLShoulder], lerp(p[kLShoulder], p[kLElbow], 0.5), 0.038 * u));
        parts.push_back(capsule(p[kRShoulder], lerp(p[kRShoulder], p[kRElbow], 0.5), 0.038 * u));
      } else if (a.shape_id == 2) {  // long sleeve
        parts.push_back(capsule(p[kLShoulder], p[kLElbow], 0.038 * u));
        parts.push_back(capsule(p[kRShoulder], p[kRElbow], 0.038 * u));
        parts.push_back(capsule(p[kLElbow], lerp(p[kLElbow], p[kLWrist], 0.9), 0.033 * u));
        parts.push_back(capsule(p[kRElbow], lerp(p[kRElbow], p[kRWrist], 0.9), 0.033 * u));
      }
      return any_of(std::move(parts));
    }
    case Category::Outerwear: {
      // Open front: two panels leave the central strip of the torso visible.
      const bool coat = a.shape_id == 2;
      const Vec2 lh = coat ? lerp(p[kLHip], p[kLKnee], 0.6) : p[kLHip];
      const Vec2 rh = coat ? lerp(p[kRHip], p[kRKnee], 0.6) : p[kRHip];
      const Vec2 lat = s.lateral * (0.03 * u);
      std::vector<Shape> parts = {
          polygon({p[kLShoulder] + lat, lerp(p[kLShoulder], p[kRShoulder], 0.32),
                   lerp(lh, rh, 0.32), lh + lat}),
          polygon({lerp(p[kRShoulder], p[kLShoulder], 0.32), p[kRShoulder] - lat, rh - lat,
                   lerp(rh, lh, 0.32)}),
          circle(p[kLShoulder], 0.042 * u),
          circle(p[kRShoulder], 0.042 * u),
      };
      if (a.shape_id != 1) {  // jacket and coat have sleeves
        parts.push_back(capsule(p[kLShoulder], p[kLElbow], 0.045 * u));
        parts.push_back(capsule(p[kRShoulder], p[kRElbow], 0.045 * u));
        parts.push_back(capsule(p[kLElbow], lerp(p[kLElbow], p[kLWrist], 0.95), 0.038 * u));
        parts.push_back(capsule(p[kRElbow], lerp(p[kRElbow], p[kRWrist], 0.95), 0.038 * u));
      }
      return any_of(std::move(parts));
    }
    case Category::Footwear: {
      const Vec2 d = s.down() * (0.015 * u);
      if (a.shape_id == 0) {  // shoes
        const Vec2 out = s.lateral * (0.03 * u);
        return any_of({capsule(p[kLAnkle] + d, p[kLAnkle] + d + out, 0.03 * u),
                       capsule(p[kRAnkle] + d, p[kRAnkle] + d - out, 0.03 * u)});
      }
      return any_of({capsule(lerp(p[kLAnkle], p[kLKnee], 0.35), p[kLAnkle] + d, 0.042 * u),
                     capsule(lerp(p[kRAnkle], p[kRKnee], 0.35), p[kRAnkle] + d, 0.042 * u)});
    }
    case Category::Accessory1: {
      const Vec2 c = s.head_center();
      const double r = s.head_radius();
      const Vec2 axis = unit(p[kHeadTop] - p[kNeck]);
      const Vec2 side{-axis.y, axis.x};
      if (a.shape_id == 0) {  // cap: upper part of the head plus a short visor
        return any_of({[=](Vec2 q) { return norm(q - c) <= 1.08 * r && dot(q - c, axis) >= 0.15 * r; },
                       capsule(c + axis * (0.2 * r), c + axis * (0.2 * r) + side * (1.3 * r), 0.14 * r)});
      }
      // wide-brimmed hat
      return any_of({circle(c + axis * (0.6 * r), 0.7 * r),
                     capsule(c + axis * (0.35 * r) - side * (1.5 * r),
                             c + axis * (0.35 * r) + side * (1.5 * r), 0.14 * r)});
    }
    case Category::Accessory2: {
      if (a.shape_id == 0) {  // bag held in the right hand
        const Vec2 c = p[kRWrist] + s.down() * (0.065 * u);
        const Vec2 ax{0.045 * u, 0}, ay{0, 0.04 * u};
        return any_of({polygon({c - ax - ay, c + ax - ay, c + ax + ay, c - ax + ay}),
                       capsule(p[kRWrist], c - ay, 0.01 * u)});
      }
      return any_of({circle(p[kLWrist], 0.032 * u), circle(p[kRWrist], 0.032 * u)});
    }
  }
  throw std::logic_error("unknown category");
}

// ----- flat-lay article geometry (canvas units: x in [0,w], y in [0,h]) -----

Shape article_flat_shape(const ArticleSpec& a, int h, int w) {
  const auto P = [&](double fx, double fy) { return Vec2{fx * w, fy * h}; };
  const auto rect = [&](double x0, double y0, double x1, double y1) {
    return polygon({P(x0, y0), P(x1, y0), P(x1, y1), P(x0, y1)});
  };
  const double r = 0.07 * w;
  switch (a.category) {
    case Category::Top: {
      std::vector<Shape> parts = {rect(0.28, 0.18, 0.72, 0.88)};
      if (a.shape_id == 0) {
        parts.push_back(capsule(P(0.3, 0.24), P(0.12, 0.42), r));
        parts.push_back(capsule(P(0.7, 0.24), P(0.88, 0.42), r));
      } else if (a.shape_id == 2) {
        parts.push_back(capsule(P(0.3, 0.24), P(0.1, 0.82), r));
        parts.push_back(capsule(P(0.7, 0.24), P(0.9, 0.82), r));
      }
      return any_of(std::move(parts));
    }
    case Category::Outerwear: {
      const double bottom = a.shape_id == 2 ? 0.96 : 0.84;
      std::vector<Shape> parts = {rect(0.24, 0.14, 0.46, bottom), rect(0.54, 0.14, 0.76, bottom)};
      if (a.shape_id != 1) {
        parts.push_back(capsule(P(0.27, 0.2), P(0.08, 0.86), r * 1.2));
        parts.push_back(capsule(P(0.73, 0.2), P(0.92, 0.86), r * 1.2));
      }
      return any_of(std::move(parts));
    }
    case Category::Bottom: {
      if (a.shape_id == 0) return any_of({rect(0.25, 0.08, 0.75, 0.2), rect(0.25, 0.08, 0.47, 0.94),
                                          rect(0.53, 0.08, 0.75, 0.94)});
      if (a.shape_id == 1) return any_of({rect(0.25, 0.25, 0.75, 0.38), rect(0.25, 0.25, 0.47, 0.62),
                                          rect(0.53, 0.25, 0.75, 0.62)});
      return polygon({P(0.32, 0.2), P(0.68, 0.2), P(0.84, 0.8), P(0.16, 0.8)});
    }
    case Category::Footwear: {
      if (a.shape_id == 0) return any_of({capsule(P(0.22, 0.6), P(0.42, 0.6), 0.09 * w),
                                          capsule(P(0.58, 0.6), P(0.78, 0.6), 0.09 * w)});
      return any_of({rect(0.2, 0.25, 0.38, 0.7), capsule(P(0.22, 0.68), P(0.44, 0.68), 0.08 * w),
                     rect(0.62, 0.25, 0.8, 0.7), capsule(P(0.64, 0.68), P(0.86, 0.68), 0.08 * w)});
    }
    case Category::Accessory1: {
      if (a.shape_id == 0) return any_of({[=](Vec2 q) { return norm(q - P(0.5, 0.55)) <= 0.3 * w && q.y <= 0.55 * h; },
                                          capsule(P(0.5, 0.55), P(0.85, 0.58), 0.04 * w)});
      return any_of({circle(P(0.5, 0.45), 0.22 * w), capsule(P(0.1, 0.58), P(0.9, 0.58), 0.06 * w)});
    }
    case Category::Accessory2: {
      if (a.shape_id == 0) return any_of({rect(0.2, 0.42, 0.8, 0.82),
                                          [=](Vec2 q) {
                                            const double d = norm(q - P(0.5, 0.42));
                                            return d <= 0.22 * w && d >= 0.14 * w && q.y <= 0.42 * h;
                                          }});
      return any_of({[=](Vec2 q) { const double d = norm(q - P(0.3, 0.5)); return d <= 0.18 * w && d >= 0.1 * w; },
                     [=](Vec2 q) { const double d = norm(q - P(0.7, 0.5)); return d <= 0.18 * w && d >= 0.1 * w; }});
    }
  }
  throw std::logic_error("unknown category");
}

Vec2 pixel_center(int row, int col) { return {col + 0.5, row + 0.5}; }

bool in_unit_box(double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; }

}  // namespace

// ---------------------------------------------------------------------------

const std::vector<Rgb>& color_catalog() {
  static const std::vector<Rgb> catalog = {
      {1, 0, 0},                   // red
      {0, 0, 3.0 / 7},             // navy
      {0, 0, 1},                   // blue
      {1, 1, 0},                   // yellow
      {1, 1, 1},                   // white
      {0, 0, 0},                   // black
      {1, 4.0 / 7, 0},             // orange
      {4.0 / 7, 0, 4.0 / 7},       // purple
      {1, 4.0 / 7, 5.0 / 7},       // pink
      {4.0 / 7, 2.0 / 7, 0},       // brown
      {2.0 / 7, 2.0 / 7, 2.0 / 7}, // charcoal
      {2.0 / 7, 3.0 / 7, 5.0 / 7}, // denim
  };
  return catalog;
}

void validate(const ArticleSpec& a, std::string_view field) {
  const std::string f(field);
  const int cat = static_cast<int>(a.category);
  if (cat < 0 || cat >= kNumSlots) throw ValidationError(f + ".category", "unknown category");
  for (double c : {a.base_color.r, a.base_color.g, a.base_color.b}) {
    if (!in_unit_box(c)) throw ValidationError(f + ".color", "components must lie in [0,1]");
  }
  if (a.shape_id < 0 || a.shape_id >= kShapeCounts[cat]) {
    throw ValidationError(f + ".shape_id", "must be in [0," + std::to_string(kShapeCounts[cat]) + ")");
  }
  if (a.texture_id < 0 || a.texture_id >= kNumTextures) {
    throw ValidationError(f + ".texture_id", "must be in [0," + std::to_string(kNumTextures) + ")");
  }
}

void validate(const OutfitSpec& outfit) {
  for (int i = 0; i < kNumSlots; ++i) {
    if (!outfit.slots[i]) continue;
    const std::string f = "slots[" + std::to_string(i) + "]";
    validate(*outfit.slots[i], f);
    if (static_cast<int>(outfit.slots[i]->category) != i) {
      throw ValidationError(f + ".category", "slot " + std::to_string(i) + " must hold a " +
                                                 std::string(kCategoryNames[i]));
    }
  }
}

void validate(const PoseSpec& pose, const PoseLimits& limits) {
  if (!std::isfinite(pose.body_scale) || pose.body_scale <= 0) {
    throw ValidationError("body_scale", "must be positive");
  }
  if (!std::isfinite(pose.build_width) || pose.build_width <= 0) {
    throw ValidationError("build_width", "must be positive");
  }
  for (int j = 0; j < kNumJoints; ++j) {
    const auto& kp = pose.keypoints[j];
    if (!in_unit_box(kp.x) || !in_unit_box(kp.y)) {
      throw ValidationError("keypoints[" + std::to_string(j) + "]", "coordinates must lie in [0,1]");
    }
  }
  for (int j = 0; j < kNumJoints; ++j) {
    const int parent = kJointParent[j];
    if (parent < 0) continue;
    const auto& a = pose.keypoints[j];
    const auto& b = pose.keypoints[parent];
    const double d = std::hypot((a.x - b.x) * kAspect, a.y - b.y);
    if (d > limits.max_bone_length) {
      throw ValidationError("keypoints[" + std::to_string(j) + "]",
                            std::string(kJointNames[j]) + " is disconnected from " +
                                std::string(kJointNames[parent]));
    }
  }
}

PixelLoc keypoint_pixel(const Keypoint& kp, int h, int w) {
  return {std::clamp(static_cast<int>(std::floor(kp.y * h)), 0, h - 1),
          std::clamp(static_cast<int>(std::floor(kp.x * w)), 0, w - 1)};
}

double pixel_distance(const Keypoint& a, const Keypoint& b, int h, int w) {
  return std::hypot((a.x - b.x) * w, (a.y - b.y) * h);
}

OutfitSpec sample_outfit(Rng& rng, double occupancy_prob) {
  if (!(occupancy_prob >= 0.0 && occupancy_prob <= 1.0)) {
    throw ValidationError("occupancy_prob", "must lie in [0,1]");
  }
  const auto& colors = color_catalog();
  OutfitSpec outfit;
  for (int i = 0; i < kNumSlots; ++i) {
    if (!rng.bernoulli(occupancy_prob)) continue;
    ArticleSpec a;
    a.category = static_cast<Category>(i);
    a.shape_id = static_cast<int>(rng.uniform_int(0, kShapeCounts[i] - 1));
    a.texture_id = static_cast<int>(rng.uniform_int(0, kNumTextures - 1));
    a.base_color = colors[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(colors.size()) - 1))];
    outfit.slots[i] = a;
  }
  return outfit;
}

namespace {

// Pose proposal in height units: u = x * aspect, v = y.
PoseSpec propose_pose(Rng& rng, double s, double bw) {
  std::array<Vec2, kNumJoints> q{};
  const double lean = rng.uniform(-0.12, 0.12);
  const Vec2 up{std::sin(lean), -std::cos(lean)};
  const Vec2 down = up * -1.0;
  const Vec2 lateral{std::cos(lean), std::sin(lean)};
  const auto limb_dir = [&](double angle, double side) {
    return down * std::cos(angle) + lateral * (side * std::sin(angle));
  };

  q[kPelvis] = {0.375 + rng.uniform(-0.05, 0.05), 0.5 + rng.uniform(-0.03, 0.03)};
  q[kThorax] = q[kPelvis] + up * (0.15 * s);
  q[kNeck] = q[kThorax] + up * (0.07 * s);
  const double tilt = rng.uniform(-0.2, 0.2);
  q[kHeadTop] = q[kNeck] + (up * std::cos(tilt) + lateral * std::sin(tilt)) * (0.13 * s);

  const double shoulder_half = 0.085 * s * bw;
  const double hip_half = 0.055 * s * bw;
  q[kLShoulder] = q[kNeck] + down * (0.01 * s) + lateral * shoulder_half;
  q[kRShoulder] = q[kNeck] + down * (0.01 * s) - lateral * shoulder_half;
  q[kLHip] = q[kPelvis] + lateral * hip_half;
  q[kRHip] = q[kPelvis] - lateral * hip_half;

  for (const double side : {1.0, -1.0}) {
    const bool left = side > 0;
    const int sh = left ? kLShoulder : kRShoulder;
    const int el = left ? kLElbow : kRElbow;
    const int wr = left ? kLWrist : kRWrist;
    const double upper = rng.uniform(-0.25, 1.4);
    const double bend = rng.uniform(-1.0, 1.3);
    q[el] = q[sh] + limb_dir(upper, side) * (0.13 * s);
    q[wr] = q[el] + limb_dir(upper + bend, side) * (0.12 * s);

    const int hp = left ? kLHip : kRHip;
    const int kn = left ? kLKnee : kRKnee;
    const int an = left ? kLAnkle : kRAnkle;
    const double thigh = rng.uniform(-0.05, 0.35);
    const double knee = rng.uniform(-0.25, 0.25);
    q[kn] = q[hp] + limb_dir(thigh, side) * (0.18 * s);
    q[an] = q[kn] + limb_dir(thigh + knee, side) * (0.17 * s);
  }

  PoseSpec pose;
  pose.body_scale = s;
  pose.build_width = bw;
  for (int j = 0; j < kNumJoints; ++j) pose.keypoints[j] = {q[j].x / kAspect, q[j].y};
  return pose;
}

bool acceptable(const PoseSpec& pose, const PoseLimits& lim) {
  for (const auto& kp : pose.keypoints) {
    if (kp.x < lim.box_lo || kp.x > lim.box_hi || kp.y < lim.box_lo || kp.y > lim.box_hi) return false;
  }
  for (int i = 0; i < kNumJoints; ++i) {
    for (int j = i + 1; j < kNumJoints; ++j) {
      const auto& a = pose.keypoints[i];
      const auto& b = pose.keypoints[j];
      if (std::hypot((a.x - b.x) * kAspect, a.y - b.y) < lim.min_joint_separation) return false;
    }
  }
  return true;
}

}  // namespace

PoseSpec sample_pose(Rng& rng, double body_scale, double build_width, const PoseLimits& limits) {
  if (!(body_scale >= limits.min_scale && body_scale <= limits.max_scale)) {
    throw ValidationError("body_scale", "must lie in [" + std::to_string(limits.min_scale) + ", " +
                                            std::to_string(limits.max_scale) + "]");
  }
  if (!(build_width >= limits.min_scale && build_width <= limits.max_scale)) {
    throw ValidationError("build_width", "must lie in [" + std::to_string(limits.min_scale) + ", " +
                                             std::to_string(limits.max_scale) + "]");
  }
  for (int attempt = 0; attempt < limits.max_retries; ++attempt) {
    PoseSpec pose = propose_pose(rng, body_scale, build_width);
    if (acceptable(pose, limits)) return pose;
  }
  throw std::runtime_error("sample_pose: no valid pose after " + std::to_string(limits.max_retries) +
                           " attempts");
}

Rgb joint_marker_color(int joint) { return {0.0, 1.0, (joint + 1) / 32.0}; }

ImageTensor render_article_image(const std::optional<ArticleSpec>& article, int h, int w) {
  check_aspect(h, w, "article resolution");
  if (!article) return ImageTensor(3, h, w, kGrayFill);
  validate(*article);
  ImageTensor img(3, h, w);
  const Shape shape = article_flat_shape(*article, h, w);
  for (int row = 0; row < h; ++row) {
    for (int col = 0; col < w; ++col) {
      put(img, row, col, shape(pixel_center(row, col)) ? texture_color(*article, row, col)
                                                       : kArticleBackground);
    }
  }
  return img;
}

Rendering render_reference_with_labels(const OutfitSpec& outfit, const PoseSpec& pose, int h, int w) {
  check_aspect(h, w, "model resolution");
  validate(outfit);
  validate(pose);
  Rendering out{ImageTensor(3, h, w), std::vector<std::uint8_t>(static_cast<std::size_t>(h) * w,
                                                                kLabelBackground)};
  for (int row = 0; row < h; ++row) {
    for (int col = 0; col < w; ++col) put(out.image, row, col, kBackground);
  }
  const Skeleton sk = make_skeleton(pose, h, w);
  const auto paint = [&](const Shape& shape, std::uint8_t label, const ArticleSpec* article) {
    for (int row = 0; row < h; ++row) {
      for (int col = 0; col < w; ++col) {
        if (!shape(pixel_center(row, col))) continue;
        put(out.image, row, col, article ? texture_color(*article, row, col) : kSkinTone);
        out.labels[static_cast<std::size_t>(row) * w + col] = label;
      }
    }
  };

  paint(any_of({legs_shape(sk), torso_shape(sk), arms_shape(sk), head_shape(sk)}), kLabelSkin, nullptr);
  constexpr std::array<Category, kNumSlots> draw_order = {
      Category::Bottom, Category::Top, Category::Outerwear,
      Category::Footwear, Category::Accessory1, Category::Accessory2};
  for (const Category c : draw_order) {
    const auto& slot = outfit.slots[static_cast<int>(c)];
    if (!slot) continue;
    paint(garment_shape(*slot, sk), static_cast<std::uint8_t>(kLabelGarment0 + static_cast<int>(c)), &*slot);
  }
  for (int j = 0; j < kNumJoints; ++j) {
    const PixelLoc px = keypoint_pixel(pose.keypoints[j], h, w);
    put(out.image, px.row, px.col, joint_marker_color(j));
    out.labels[static_cast<std::size_t>(px.row) * w + px.col] = kLabelMarker;
  }
  return out;
}

ImageTensor render_reference(const OutfitSpec& outfit, const PoseSpec& pose, int h, int w) {
  return render_reference_with_labels(outfit, pose, h, w).image;
}

int PoseMeasurement::detected_count() const {
  return static_cast<int>(std::count(detected.begin(), detected.end(), true));
}

PoseMeasurement measure_pose(const ImageTensor& image, double threshold) {
  if (image.channels != 3 || image.height < 1 || image.width < 1) {
    throw ValidationError("image", "measure_pose expects a 3-channel image");
  }
  const int h = image.height, w = image.width;
  constexpr double kResidualScale = 0.04;
  constexpr double kBlueScale = 1.0 / 96;
  constexpr double kMinAlpha = 0.05;

  std::array<Rgb, kNumJoints> markers{};
  for (int j = 0; j < kNumJoints; ++j) markers[j] = joint_marker_color(j);

  PoseMeasurement m;
  std::array<PixelLoc, kNumJoints> best_loc{};
  std::array<double, kNumJoints> best{};
  best.fill(-1.0);

  // Whatever shares a pixel with a marker is modelled as a colour from the
  // surrounding 5x5 palette, or the mean of two or three palette colours (the
  // footprint of a marker that was box-filtered together with its block-mates).
  // Markers share (r, g) = (0, 1), so alpha is fitted on those channels and
  // the blue channel then decodes which joint the marker belongs to.
  constexpr int kRadius = 2;
  constexpr std::size_t kMaxPalette = 10;
  std::vector<std::pair<std::array<float, 3>, int>> palette;
  std::vector<std::array<double, 3>> unders;
  struct Fit {
    double res, alpha, blue;
  };
  std::vector<Fit> fits;
  constexpr double kTie = 1e-9;
  constexpr double kNearExact = 1e-6;
  for (int row = 0; row < h; ++row) {
    for (int col = 0; col < w; ++col) {
      const double px[3] = {image.at(0, row, col), image.at(1, row, col), image.at(2, row, col)};
      palette.clear();
      for (int dy = -kRadius; dy <= kRadius; ++dy) {
        for (int dx = -kRadius; dx <= kRadius; ++dx) {
          const int r = row + dy, c = col + dx;
          if ((dy == 0 && dx == 0) || r < 0 || r >= h || c < 0 || c >= w) continue;
          const std::array<float, 3> color = {image.at(0, r, c), image.at(1, r, c), image.at(2, r, c)};
          auto it = std::find_if(palette.begin(), palette.end(), [&](auto& e) { return e.first == color; });
          if (it == palette.end()) {
            palette.push_back({color, 1});
          } else {
            ++it->second;
          }
        }
      }
      std::stable_sort(palette.begin(), palette.end(), [](auto& a, auto& b) { return a.second > b.second; });
      if (palette.size() > kMaxPalette) palette.resize(kMaxPalette);

      unders.clear();
      const std::size_t k = palette.size();
      for (std::size_t a = 0; a < k; ++a) {
        for (std::size_t b = a; b < k; ++b) {
          for (std::size_t c = b; c < k; ++c) {
            std::array<double, 3> u{};
            for (int ch = 0; ch < 3; ++ch) {
              u[ch] = (static_cast<double>(palette[a].first[ch]) + palette[b].first[ch] + palette[c].first[ch]) / 3.0;
            }
            unders.push_back(u);
          }
          if (b != a) {
            std::array<double, 3> u{};
            for (int ch = 0; ch < 3; ++ch) u[ch] = 0.5 * (static_cast<double>(palette[a].first[ch]) + palette[b].first[ch]);
            unders.push_back(u);
          }
        }
      }

      // Palette colours sit on a coarse lattice, so several hypotheses can
      // explain a pixel equally well while decoding different blues; each joint
      // takes the best of the near-exact ones. A pixel that some hypothesis
      // explains without a marker is not a marker.
      fits.clear();
      double min_res = std::numeric_limits<double>::infinity();
      bool plain = false;
      for (const auto& bg : unders) {
        const double mr = -bg[0], mg = 1.0 - bg[1];
        const double den = mr * mr + mg * mg;
        if (den <= 1e-12) continue;
        const double alpha = std::clamp(((px[0] - bg[0]) * mr + (px[1] - bg[1]) * mg) / den, 0.0, 1.0);
        const double er = px[0] - (bg[0] + alpha * mr);
        const double eg = px[1] - (bg[1] + alpha * mg);
        const double res = er * er + eg * eg;
        if (alpha < kMinAlpha) {
          const double db = px[2] - bg[2];
          if (alpha < 1e-6 && res + db * db < kTie) plain = true;
          continue;
        }
        fits.push_back({res, alpha, bg[2] + (px[2] - bg[2]) / alpha});
        min_res = std::min(min_res, res);
      }
      if (plain) continue;
      for (const auto& f : fits) {
        if (f.res > min_res + kNearExact) continue;
        const double fit = f.alpha * std::exp(-f.res / (2 * kResidualScale * kResidualScale));
        for (int j = 0; j < kNumJoints; ++j) {
          const double db = f.blue - markers[j].b;
          const double score = fit * std::exp(-db * db / (2 * kBlueScale * kBlueScale));
          if (score > best[j]) {
            best[j] = score;
            best_loc[j] = {row, col};
          }
        }
      }
    }
  }
  for (int j = 0; j < kNumJoints; ++j) {
    m.confidence[j] = std::max(best[j], 0.0);
    m.detected[j] = m.confidence[j] >= threshold;
    m.peak[j] = {(best_loc[j].col + 0.5) / w, (best_loc[j].row + 0.5) / h};
    if (m.detected[j]) m.pose.keypoints[j] = m.peak[j];
  }
  return m;
}

RegionMask body_region(const PoseSpec& pose, BodyPart part, int h, int w) {
  const Skeleton sk = make_skeleton(pose, h, w);
  Shape shape;
  switch (part) {
    case BodyPart::Torso: shape = torso_shape(sk); break;
    case BodyPart::Legs: shape = legs_shape(sk); break;
    case BodyPart::Arms: shape = arms_shape(sk); break;
    case BodyPart::Head: shape = head_shape(sk); break;
  }
  RegionMask mask(static_cast<std::size_t>(h) * w, 0);
  for (int row = 0; row < h; ++row) {
    for (int col = 0; col < w; ++col) {
      mask[static_cast<std::size_t>(row) * w + col] = shape(pixel_center(row, col)) ? 1 : 0;
    }
  }
  return mask;
}

RegionMask garment_region(const OutfitSpec& outfit, const PoseSpec& pose, Category slot, int h, int w) {
  const Rendering r = render_reference_with_labels(outfit, pose, h, w);
  const auto label = static_cast<std::uint8_t>(kLabelGarment0 + static_cast<int>(slot));
  RegionMask mask(r.labels.size(), 0);
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = r.labels[i] == label ? 1 : 0;
  return mask;
}

Rgb measure_dominant_color(const ImageTensor& image, const RegionMask& region) {
  if (image.channels != 3) throw ValidationError("image", "expects a 3-channel image");
  if (region.size() != image.plane_size()) throw ValidationError("region", "mask size mismatch");
  constexpr int kBins = kColorLevels * kColorLevels * kColorLevels;
  std::array<int, kBins> counts{};
  std::array<std::array<double, 3>, kBins> sums{};
  const auto quant = [](float v) {
    return std::clamp(static_cast<int>(std::lround(v * (kColorLevels - 1))), 0, kColorLevels - 1);
  };
  for (int row = 0; row < image.height; ++row) {
    for (int col = 0; col < image.width; ++col) {
      if (!region[static_cast<std::size_t>(row) * image.width + col]) continue;
      const float r = image.at(0, row, col), g = image.at(1, row, col), b = image.at(2, row, col);
      const int bin = (quant(r) * kColorLevels + quant(g)) * kColorLevels + quant(b);
      ++counts[bin];
      sums[bin][0] += r;
      sums[bin][1] += g;
      sums[bin][2] += b;
    }
  }
  const auto it = std::max_element(counts.begin(), counts.end());
  if (*it == 0) throw ValidationError("region", "empty region");
  const auto bin = static_cast<std::size_t>(it - counts.begin());
  const double n = *it;
  return {sums[bin][0] / n, sums[bin][1] / n, sums[bin][2] / n};
}

double color_distance(const Rgb& a, const Rgb& b) {
  return std::sqrt((a.r - b.r) * (a.r - b.r) + (a.g - b.g) * (a.g - b.g) + (a.b - b.b) * (a.b - b.b));
}

ImageTensor downsample2x(const ImageTensor& image) {
  if (image.height % 2 || image.width % 2) throw ValidationError("image", "downsample2x needs even dims");
  ImageTensor out(image.channels, image.height / 2, image.width / 2);
  for (int c = 0; c < image.channels; ++c) {
    for (int y = 0; y < out.height; ++y) {
      for (int x = 0; x < out.width; ++x) {
        out.at(c, y, x) = 0.25f * (image.at(c, 2 * y, 2 * x) + image.at(c, 2 * y, 2 * x + 1) +
                                   image.at(c, 2 * y + 1, 2 * x) + image.at(c, 2 * y + 1, 2 * x + 1));
      }
    }
  }
  return out;
}

}  // namespace stylecond
