#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "stylecond/json_io.hpp"

namespace stylecond {

/// Named poses shipped in data/poses (standing, walking, arms-crossed,
/// three-quarter), compiled into the library, sorted by name.
const std::vector<std::pair<std::string, PoseSpec>>& pose_presets();

std::optional<PoseSpec> find_pose_preset(std::string_view name);

/// {"presets":[{"name":..., "pose":PoseSpec}]}
json poses_json();

/// Slot order, per-category shape and texture ids, and the colour palette.
json catalog_json();

}  // namespace stylecond
