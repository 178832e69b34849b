#pragma once

#include "lanefuse/losses.hpp"
#include "lanefuse/types.hpp"

#include <string>
#include <vector>

namespace lanefuse {

/// Draw a scenario as a static vector image: drivable band, centerlines,
/// histories, ground truth and any number of named predictions. The output
/// format follows the file extension (.svg supported).
void render_scene(const std::string& path, const ScenarioState& state,
                  const std::vector<std::pair<std::string, MultiModalPrediction>>&
                      predictions);

}  // namespace lanefuse
