#pragma once

#include "lanefuse/scene.hpp"
#include "lanefuse/scene_io.hpp"
#include "lanefuse/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace lanefuse {

/// Parameters of one generated scene. Templates: straight | curve |
/// t_intersection.
struct SyntheticSpec {
  std::string template_name = "straight";
  double road_width = 6.0;       // meters
  int agent_count = 2;
  double speed_min = 4.0;        // m/s
  double speed_max = 9.0;        // m/s
  double duration_s = 9.5;       // track length in seconds
  double curve_radius = 35.0;    // meters, curve template
  double turn_probability = 0.5; // t_intersection branch choice
  double cell_size = 0.5;        // raster resolution
};

struct SyntheticScene {
  std::shared_ptr<const SceneMap> map;
  std::vector<Track> tracks;
  std::vector<ScenarioState> states;
};

/// Deterministic scene generation: identical (spec, seed) pairs produce
/// bit-identical output. Agents follow the lane network with smooth speed
/// noise; trailing agents run a gap-keeping car-following law, so scenes
/// with two or more agents contain genuine interactions.
SyntheticScene generate_synthetic_scene(const SyntheticSpec& spec,
                                        std::uint64_t seed,
                                        const std::string& scene_id);

/// Lane network for a template without any agents (used by tests/render).
std::vector<Centerline> template_centerlines(const SyntheticSpec& spec,
                                             double curve_radius_override = -1.0);

}  // namespace lanefuse
