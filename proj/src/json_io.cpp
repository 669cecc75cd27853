#include "stylecond/json_io.hpp"

#include <string>

#include "stylecond/errors.hpp"

namespace stylecond {

namespace {

double number_at(const json& j, const std::string& field) {
  if (!j.is_number()) throw ValidationError(field, "expected a number");
  return j.get<double>();
}

int integer_at(const json& j, const std::string& field) {
  if (!j.is_number_integer()) throw ValidationError(field, "expected an integer");
  return j.get<int>();
}

const json& member(const json& obj, const char* key, const std::string& field) {
  const auto it = obj.find(key);
  if (it == obj.end()) throw ValidationError(field + key, "missing field");
  return *it;
}

}  // namespace

json rgb_to_json(const Rgb& c) { return json::array({c.r, c.g, c.b}); }

json outfit_to_json(const OutfitSpec& outfit) {
  json slots = json::array();
  for (const auto& slot : outfit.slots) {
    if (!slot) {
      slots.push_back(nullptr);
      continue;
    }
    slots.push_back({{"category", std::string(kCategoryNames[static_cast<int>(slot->category)])},
                     {"color", rgb_to_json(slot->base_color)},
                     {"shape_id", slot->shape_id},
                     {"texture_id", slot->texture_id}});
  }
  return {{"slots", slots}};
}

OutfitSpec outfit_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("outfit", "expected an object");
  const json& slots = member(j, "slots", "");
  if (!slots.is_array()) throw ValidationError("slots", "expected an array");
  if (slots.size() != kNumSlots) {
    throw ValidationError("slots", "expected exactly 6 slots, got " + std::to_string(slots.size()));
  }
  OutfitSpec outfit;
  for (int i = 0; i < kNumSlots; ++i) {
    const json& s = slots[static_cast<std::size_t>(i)];
    const std::string f = "slots[" + std::to_string(i) + "]";
    if (s.is_null()) continue;
    if (!s.is_object()) throw ValidationError(f, "expected an object or null");
    ArticleSpec a;
    const json& cat = member(s, "category", f + ".");
    if (!cat.is_string()) throw ValidationError(f + ".category", "expected a string");
    int idx = -1;
    for (int c = 0; c < kNumSlots; ++c) {
      if (kCategoryNames[c] == cat.get<std::string>()) idx = c;
    }
    if (idx < 0) throw ValidationError(f + ".category", "unknown category '" + cat.get<std::string>() + "'");
    a.category = static_cast<Category>(idx);
    const json& color = member(s, "color", f + ".");
    if (!color.is_array() || color.size() != 3) throw ValidationError(f + ".color", "expected [r,g,b]");
    a.base_color = {number_at(color[0], f + ".color"), number_at(color[1], f + ".color"),
                    number_at(color[2], f + ".color")};
    a.shape_id = integer_at(member(s, "shape_id", f + "."), f + ".shape_id");
    a.texture_id = integer_at(member(s, "texture_id", f + "."), f + ".texture_id");
    outfit.slots[i] = a;
  }
  validate(outfit);
  return outfit;
}

json pose_to_json(const PoseSpec& pose) {
  json kps = json::array();
  for (const auto& kp : pose.keypoints) kps.push_back(json::array({kp.x, kp.y}));
  return {{"keypoints", kps}, {"body_scale", pose.body_scale}, {"build_width", pose.build_width}};
}

PoseSpec pose_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("pose", "expected an object");
  const json& kps = member(j, "keypoints", "");
  if (!kps.is_array() || kps.size() != kNumJoints) {
    throw ValidationError("keypoints", "expected exactly 16 [x,y] pairs");
  }
  PoseSpec pose;
  for (int i = 0; i < kNumJoints; ++i) {
    const json& kp = kps[static_cast<std::size_t>(i)];
    const std::string f = "keypoints[" + std::to_string(i) + "]";
    if (!kp.is_array() || kp.size() != 2) throw ValidationError(f, "expected [x,y]");
    pose.keypoints[i] = {number_at(kp[0], f), number_at(kp[1], f)};
  }
  pose.body_scale = number_at(member(j, "body_scale", ""), "body_scale");
  pose.build_width = number_at(member(j, "build_width", ""), "build_width");
  validate(pose);
  return pose;
}

}  // namespace stylecond
