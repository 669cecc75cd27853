#include "stylecond/presets.hpp"

#include <algorithm>

#include "stylecond/errors.hpp"

namespace stylecond {

namespace detail {
// Defined in the generated pose_preset_data.cpp.
extern const std::vector<std::pair<std::string, std::string>> kPosePresetSources;
}  // namespace detail

const std::vector<std::pair<std::string, PoseSpec>>& pose_presets() {
  static const auto presets = [] {
    std::vector<std::pair<std::string, PoseSpec>> out;
    for (const auto& [name, text] : detail::kPosePresetSources) {
      try {
        out.emplace_back(name, pose_from_json(json::parse(text)));
      } catch (const std::exception& e) {
        throw FormatError("pose preset '" + name + "': " + e.what());
      }
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    return out;
  }();
  return presets;
}

std::optional<PoseSpec> find_pose_preset(std::string_view name) {
  for (const auto& [n, pose] : pose_presets()) {
    if (n == name) return pose;
  }
  return std::nullopt;
}

json poses_json() {
  json list = json::array();
  for (const auto& [name, pose] : pose_presets()) list.push_back({{"name", name}, {"pose", pose_to_json(pose)}});
  return {{"presets", list}};
}

json catalog_json() {
  json categories = json::array();
  for (int i = 0; i < kNumSlots; ++i) {
    json shapes = json::array(), textures = json::array();
    for (int s = 0; s < kShapeCounts[i]; ++s) shapes.push_back(s);
    for (int t = 0; t < kNumTextures; ++t) textures.push_back(t);
    categories.push_back(
        {{"slot", i}, {"category", std::string(kCategoryNames[i])}, {"shape_ids", shapes}, {"texture_ids", textures}});
  }
  json colors = json::array();
  for (const Rgb& c : color_catalog()) colors.push_back(rgb_to_json(c));
  return {{"categories", categories}, {"colors", colors}};
}

}  // namespace stylecond
