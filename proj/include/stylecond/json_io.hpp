#pragma once

#include <json.hpp>

#include "stylecond/synth_data.hpp"

namespace stylecond {

using nlohmann::json;

// Wire format:
//   OutfitSpec: {"slots":[{"category":"Top","color":[r,g,b],"shape_id":n,"texture_id":n} | null x 6]}
//   PoseSpec:   {"keypoints":[[x,y] x 16],"body_scale":s,"build_width":b}
// Parsers throw ValidationError with the offending field path.

json outfit_to_json(const OutfitSpec& outfit);
OutfitSpec outfit_from_json(const json& j);

json pose_to_json(const PoseSpec& pose);
PoseSpec pose_from_json(const json& j);

json rgb_to_json(const Rgb& c);

}  // namespace stylecond
