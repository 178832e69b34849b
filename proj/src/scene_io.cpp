#include "lanefuse/scene_io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace lanefuse {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::vector<ScenarioState> scenarios_from_tracks(
    const std::vector<Track>& tracks, std::shared_ptr<const SceneMap> map,
    const std::string& scene_id, const std::string& category) {
  std::vector<const Track*> ordered;
  for (const auto& t : tracks) ordered.push_back(&t);
  std::sort(ordered.begin(), ordered.end(),
            [](const Track* a, const Track* b) { return a->agent_id < b->agent_id; });

  int frame_lo = std::numeric_limits<int>::max();
  int frame_hi = std::numeric_limits<int>::min();
  for (const Track* t : ordered) {
    frame_lo = std::min(frame_lo, t->first_frame);
    frame_hi = std::max(frame_hi, t->last_frame());
  }

  std::vector<ScenarioState> states;
  if (ordered.empty()) return states;

  auto history_of = [](const Track& t, int anchor) {
    AgentHistory h;
    h.agent_id = t.agent_id;
    const int begin = anchor - (kObsLen - 1);
    for (int f = begin; f <= anchor; ++f) {
      h.points.push_back(t.points[static_cast<std::size_t>(f - t.first_frame)]);
    }
    return h;
  };

  for (int anchor = frame_lo; anchor <= frame_hi; ++anchor) {
    for (const Track* ego : ordered) {
      if (!ego->covers(anchor - (kObsLen - 1), anchor + kPredLen)) continue;
      ScenarioState st;
      st.ego = history_of(*ego, anchor);
      for (const Track* other : ordered) {
        if (other == ego) continue;
        if (!other->covers(anchor - (kObsLen - 1), anchor)) continue;
        st.others.push_back(history_of(*other, anchor));
      }
      MatX2 gt(kPredLen, 2);
      for (int j = 0; j < kPredLen; ++j) {
        gt.row(j) = ego->position_at(anchor + 1 + j).transpose();
      }
      st.ground_truth = gt;
      st.map = map;
      st.scene_id = scene_id;
      st.category = category;
      st.anchor_frame = anchor;
      states.push_back(std::move(st));
    }
  }
  return states;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

struct RawRow {
  std::int64_t track_id;
  std::int64_t timestamp_ms;
  double x, y;
};

}  // namespace

TrackParseResult parse_track_csv(const std::string& track_file) {
  std::ifstream in(track_file);
  if (!in) throw std::runtime_error("cannot open track file: " + track_file);

  std::string line;
  if (!std::getline(in, line)) {
    return {};  // empty file: no tracks, no errors
  }
  const auto header = split_csv_line(line);
  auto col = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : static_cast<int>(it - header.begin());
  };
  const int c_track = col("track_id");
  const int c_ts = col("timestamp_ms");
  const int c_x = col("x");
  const int c_y = col("y");
  const int c_type = col("agent_type");
  if (c_track < 0 || c_ts < 0 || c_x < 0 || c_y < 0) {
    throw std::runtime_error(track_file +
                             ": header must include track_id, timestamp_ms, x, y");
  }

  std::map<std::int64_t, std::vector<RawRow>> by_track;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_csv_line(line);
    auto fail = [&](const std::string& why) {
      throw std::runtime_error(track_file + ": row " + std::to_string(line_no) +
                               ": " + why);
    };
    const int needed = std::max({c_track, c_ts, c_x, c_y});
    if (static_cast<int>(fields.size()) <= needed) fail("too few columns");
    if (c_type >= 0) {
      const std::string& type = fields[static_cast<std::size_t>(c_type)];
      if (type.find("pedestrian") != std::string::npos ||
          type.find("person") != std::string::npos) {
        continue;
      }
    }
    RawRow row;
    try {
      row.track_id = std::stoll(fields[static_cast<std::size_t>(c_track)]);
      row.timestamp_ms = std::stoll(fields[static_cast<std::size_t>(c_ts)]);
      row.x = std::stod(fields[static_cast<std::size_t>(c_x)]);
      row.y = std::stod(fields[static_cast<std::size_t>(c_y)]);
    } catch (const std::exception&) {
      fail("malformed numeric field");
    }
    if (!std::isfinite(row.x) || !std::isfinite(row.y)) fail("non-finite coordinate");
    by_track[row.track_id].push_back(row);
  }

  std::int64_t base_ts = std::numeric_limits<std::int64_t>::max();
  for (const auto& [id, rows] : by_track) {
    for (const auto& r : rows) base_ts = std::min(base_ts, r.timestamp_ms);
  }

  constexpr std::int64_t kFrameMs = static_cast<std::int64_t>(kFrameDt * 1000.0);
  TrackParseResult result;
  for (auto& [id, rows] : by_track) {
    std::sort(rows.begin(), rows.end(), [](const RawRow& a, const RawRow& b) {
      return a.timestamp_ms < b.timestamp_ms;
    });
    // Keep only rows on the common 2 Hz grid; 10 Hz input thus keeps every
    // fifth frame. The surviving frames must be consecutive on that grid.
    std::vector<std::pair<int, RawRow>> on_grid;
    bool irregular = false;
    for (const auto& r : rows) {
      const std::int64_t rel = r.timestamp_ms - base_ts;
      if (rel % kFrameMs != 0) continue;
      const int frame = static_cast<int>(rel / kFrameMs);
      if (!on_grid.empty()) {
        if (frame == on_grid.back().first) {
          irregular = true;  // duplicate frame
          break;
        }
        if (frame != on_grid.back().first + 1) {
          irregular = true;  // gap after resampling
          break;
        }
      }
      on_grid.emplace_back(frame, r);
    }
    if (irregular || on_grid.empty()) {
      ++result.skipped_tracks;
      continue;
    }
    Track t;
    t.agent_id = id;
    t.first_frame = on_grid.front().first;
    for (const auto& [frame, r] : on_grid) {
      t.points.push_back(TrackPoint{r.x, r.y, frame * kFrameDt});
    }
    result.tracks.push_back(std::move(t));
  }
  return result;
}

LoadResult load_interaction_csv(const std::string& track_file,
                                std::shared_ptr<const SceneMap> map,
                                const std::string& category) {
  auto parsed = parse_track_csv(track_file);
  LoadResult out;
  out.skipped_tracks = parsed.skipped_tracks;
  out.states = scenarios_from_tracks(parsed.tracks, map, map->scene_id, category);
  return out;
}

LoadResult load_interaction_csv(const std::string& track_file,
                                const std::string& map_file) {
  auto scenes = load_map_document(map_file);
  if (scenes.empty()) throw std::runtime_error(map_file + ": no scenes");
  const std::string stem = fs::path(track_file).stem().string();
  auto it = scenes.size() == 1 ? scenes.begin() : scenes.find(stem);
  if (it == scenes.end()) {
    throw std::runtime_error(map_file + ": no scene named '" + stem + "'");
  }
  return load_interaction_csv(track_file, it->second.map, it->second.category);
}

void save_track_csv(const std::string& path, const std::vector<Track>& tracks) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write track file: " + path);
  out << "track_id,frame_id,timestamp_ms,agent_type,x,y,vx,vy,psi_rad,length,width\n";
  char buf[256];
  for (const auto& t : tracks) {
    for (std::size_t i = 0; i < t.points.size(); ++i) {
      const auto& p = t.points[i];
      const auto& q = t.points[i + 1 < t.points.size() ? i + 1 : i];
      const auto& prev = t.points[i > 0 ? i - 1 : 0];
      const double vx = (q.x - prev.x) / (q.t - prev.t != 0.0 ? q.t - prev.t : 1.0);
      const double vy = (q.y - prev.y) / (q.t - prev.t != 0.0 ? q.t - prev.t : 1.0);
      const double psi = (vx != 0.0 || vy != 0.0) ? std::atan2(vy, vx) : 0.0;
      const int frame = t.first_frame + static_cast<int>(i);
      std::snprintf(buf, sizeof(buf),
                    "%lld,%d,%lld,car,%.9f,%.9f,%.6f,%.6f,%.6f,4.5,1.8\n",
                    static_cast<long long>(t.agent_id), frame + 1,
                    static_cast<long long>(frame) * 500, p.x, p.y, vx, vy, psi);
      out << buf;
    }
  }
}

namespace {

Centerline centerline_from_json(const json& j) {
  const int id = j.at("id").get<int>();
  const auto& pts = j.at("points");
  MatX2 poly(pts.size(), 2);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    poly(static_cast<Eigen::Index>(i), 0) = pts[i][0].get<double>();
    poly(static_cast<Eigen::Index>(i), 1) = pts[i][1].get<double>();
  }
  const auto& w = j.at("width");
  if (w.is_array()) {
    VecX widths(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
      widths(static_cast<Eigen::Index>(i)) = w[i].get<double>();
    }
    return make_centerline(id, std::move(poly), std::move(widths));
  }
  return make_centerline(id, std::move(poly), w.get<double>());
}

json centerline_to_json(const Centerline& cl) {
  json j;
  j["id"] = cl.id;
  const double w0 = cl.seg_widths(0);
  const bool uniform = (cl.seg_widths.array() == w0).all();
  if (uniform) {
    j["width"] = w0;
  } else {
    j["width"] = json::array();
    for (int i = 0; i < cl.seg_widths.size(); ++i) j["width"].push_back(cl.seg_widths(i));
  }
  j["points"] = json::array();
  for (int i = 0; i < cl.polyline.rows(); ++i) {
    j["points"].push_back({cl.polyline(i, 0), cl.polyline(i, 1)});
  }
  return j;
}

}  // namespace

std::map<std::string, MapScene> load_map_document(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open map file: " + path);
  json doc;
  try {
    in >> doc;
  } catch (const std::exception& e) {
    throw std::runtime_error(path + ": invalid map document: " + e.what());
  }
  if (doc.value("format", "") != "lanefuse-map-v1") {
    throw std::runtime_error(path + ": not a lanefuse map document");
  }
  std::map<std::string, MapScene> scenes;
  for (const auto& js : doc.at("scenes")) {
    std::vector<Centerline> cls;
    for (const auto& jc : js.at("centerlines")) cls.push_back(centerline_from_json(jc));
    const double cell = js.value("cell_size", 0.5);
    SceneMap map = make_scene_map(js.at("scene_id").get<std::string>(),
                                  std::move(cls), cell);
    if (js.contains("confinement_c")) {
      map.confinement_c = js.at("confinement_c").get<double>();
      if (map.confinement_c <= 0.0) {
        throw std::runtime_error(path + ": confinement_c must be positive");
      }
    }
    MapScene entry;
    entry.category = js.value("category", map.scene_id);
    const std::string id = map.scene_id;
    entry.map = std::make_shared<const SceneMap>(std::move(map));
    scenes.emplace(id, std::move(entry));
  }
  return scenes;
}

void save_map_document(const std::string& path,
                       const std::vector<std::pair<SceneMap, std::string>>& scenes) {
  json doc;
  doc["format"] = "lanefuse-map-v1";
  doc["scenes"] = json::array();
  for (const auto& [map, category] : scenes) {
    json js;
    js["scene_id"] = map.scene_id;
    js["category"] = category;
    js["cell_size"] = map.raster.cell_size;
    js["centerlines"] = json::array();
    for (const auto& cl : map.centerlines) js["centerlines"].push_back(centerline_to_json(cl));
    doc["scenes"].push_back(std::move(js));
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write map file: " + path);
  out << doc.dump(1) << "\n";
}

Dataset load_dataset(const std::string& dir) {
  const fs::path root(dir);
  std::ifstream in(root / "dataset.json");
  if (!in) throw std::runtime_error("cannot open dataset manifest in " + dir);
  json manifest;
  in >> manifest;
  if (manifest.value("format", "") != "lanefuse-dataset-v1") {
    throw std::runtime_error(dir + ": not a lanefuse dataset");
  }
  auto scenes = load_map_document((root / manifest.at("map_file").get<std::string>()).string());

  Dataset ds;
  ds.seed = manifest.value("seed", 0ull);
  std::set<std::string> cats;
  for (const auto& js : manifest.at("scenes")) {
    const std::string scene_id = js.at("scene_id").get<std::string>();
    auto it = scenes.find(scene_id);
    if (it == scenes.end()) {
      throw std::runtime_error(dir + ": scene '" + scene_id + "' missing from map");
    }
    auto res = load_interaction_csv((root / js.at("track_file").get<std::string>()).string(),
                                    it->second.map, it->second.category);
    ds.skipped_tracks += res.skipped_tracks;
    cats.insert(it->second.category);
    for (auto& s : res.states) ds.states.push_back(std::move(s));
  }
  ds.categories.assign(cats.begin(), cats.end());
  return ds;
}

}  // namespace lanefuse
