#pragma once

#include "lanefuse/scene.hpp"
#include "lanefuse/types.hpp"

#include <map>
#include <string>
#include <vector>

namespace lanefuse {

/// One agent's resampled track: positions on the common 2 Hz frame grid.
/// `first_frame` is the index of points[0] on that grid.
struct Track {
  std::int64_t agent_id = 0;
  int first_frame = 0;
  std::vector<TrackPoint> points;

  int last_frame() const {
    return first_frame + static_cast<int>(points.size()) - 1;
  }
  bool covers(int frame_begin, int frame_end) const {
    return frame_begin >= first_frame && frame_end <= last_frame();
  }
  Vec2 position_at(int frame) const {
    return points[static_cast<std::size_t>(frame - first_frame)].pos();
  }
};

struct LoadResult {
  std::vector<ScenarioState> states;
  int skipped_tracks = 0;  // tracks dropped for irregular timestamps
};

/// Enumerate every (agent, anchor-frame) pair with a full observation
/// window and prediction horizon; each agent takes a turn as the ego.
std::vector<ScenarioState> scenarios_from_tracks(
    const std::vector<Track>& tracks, std::shared_ptr<const SceneMap> map,
    const std::string& scene_id, const std::string& category);

/// Parse a track CSV and resample it to the kFrameDt grid. Tracks whose
/// timestamps do not land on that grid are skipped and counted.
struct TrackParseResult {
  std::vector<Track> tracks;
  int skipped_tracks = 0;
};
TrackParseResult parse_track_csv(const std::string& track_file);

/// Load a track CSV against a map document. When the document holds several
/// scenes, the scene whose id matches the track file stem is used.
LoadResult load_interaction_csv(const std::string& track_file,
                                const std::string& map_file);
LoadResult load_interaction_csv(const std::string& track_file,
                                std::shared_ptr<const SceneMap> map,
                                const std::string& category);

void save_track_csv(const std::string& path, const std::vector<Track>& tracks);

/// Map documents: JSON files listing scenes with their centerlines. The
/// drivable raster and confinement parameter are derived on load; an
/// explicit "confinement_c" entry overrides the derived value.
struct MapScene {
  std::shared_ptr<const SceneMap> map;
  std::string category;
};
std::map<std::string, MapScene> load_map_document(const std::string& path);
void save_map_document(const std::string& path,
                       const std::vector<std::pair<SceneMap, std::string>>& scenes);

/// A dataset directory: dataset.json manifest + map.json + per-scene CSVs.
struct Dataset {
  std::vector<ScenarioState> states;
  std::vector<std::string> categories;  // distinct, sorted
  int skipped_tracks = 0;
  std::uint64_t seed = 0;
};
Dataset load_dataset(const std::string& dir);

}  // namespace lanefuse
