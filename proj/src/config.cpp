#include "lanefuse/config.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

namespace lanefuse {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                         const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    if (allowed.find(key) == allowed.end()) {
      throw std::runtime_error("config: unknown key '" + key + "' in " + where);
    }
  }
}

}  // namespace

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  json doc;
  try {
    in >> doc;
  } catch (const std::exception& e) {
    throw std::runtime_error(path + ": invalid config: " + e.what());
  }

  RunConfig cfg;
  reject_unknown_keys(doc,
                      {"seed", "output_dir", "dataset", "split", "kd", "fusion",
                       "model", "train", "mpc", "eval"},
                      "top level");
  cfg.seed = doc.value("seed", cfg.seed);
  cfg.output_dir = doc.value("output_dir", cfg.output_dir);

  if (doc.contains("dataset")) {
    const json& d = doc["dataset"];
    reject_unknown_keys(d,
                        {"source", "dir", "templates", "road_width", "agent_count",
                         "speed_min", "speed_max", "duration_s", "curve_radius",
                         "turn_probability", "cell_size", "map_file", "track_files"},
                        "dataset");
    cfg.dataset_source = d.value("source", cfg.dataset_source);
    cfg.dataset_dir = d.value("dir", cfg.dataset_dir);
    if (d.contains("templates")) {
      cfg.templates.clear();
      for (const auto& [name, count] : d["templates"].items()) {
        cfg.templates.emplace_back(name, count.get<int>());
      }
    }
    cfg.synthetic.road_width = d.value("road_width", cfg.synthetic.road_width);
    cfg.synthetic.agent_count = d.value("agent_count", cfg.synthetic.agent_count);
    cfg.synthetic.speed_min = d.value("speed_min", cfg.synthetic.speed_min);
    cfg.synthetic.speed_max = d.value("speed_max", cfg.synthetic.speed_max);
    cfg.synthetic.duration_s = d.value("duration_s", cfg.synthetic.duration_s);
    cfg.synthetic.curve_radius = d.value("curve_radius", cfg.synthetic.curve_radius);
    cfg.synthetic.turn_probability =
        d.value("turn_probability", cfg.synthetic.turn_probability);
    cfg.synthetic.cell_size = d.value("cell_size", cfg.synthetic.cell_size);
    cfg.csv_map_file = d.value("map_file", cfg.csv_map_file);
    if (d.contains("track_files")) {
      cfg.csv_track_files = d["track_files"].get<std::vector<std::string>>();
    }
    if (cfg.dataset_source == "csv") {
      if (!fs::exists(cfg.csv_map_file)) {
        throw std::runtime_error("config: map_file does not exist: " + cfg.csv_map_file);
      }
      for (const auto& f : cfg.csv_track_files) {
        if (!fs::exists(f)) {
          throw std::runtime_error("config: track file does not exist: " + f);
        }
      }
    } else if (cfg.dataset_source != "synthetic") {
      throw std::runtime_error("config: dataset source must be synthetic or csv");
    }
    for (const auto& [name, count] : cfg.templates) {
      if (name != "straight" && name != "curve" && name != "t_intersection") {
        throw std::runtime_error("config: unknown scene template '" + name + "'");
      }
      if (count < 0) throw std::runtime_error("config: negative scene count");
    }
  }

  if (doc.contains("split")) {
    const json& s = doc["split"];
    reject_unknown_keys(s, {"mode", "holdout"}, "split");
    cfg.split_mode = split_mode_from_string(s.value("mode", "scene-generalization"));
    cfg.holdout_category = s.value("holdout", cfg.holdout_category);
  }

  if (doc.contains("kd")) {
    const json& k = doc["kd"];
    reject_unknown_keys(k,
                        {"predictor", "k_gain", "d_desired", "v_max",
                         "leader_corridor", "offset_decay_steps"},
                        "kd");
    cfg.selections.kd_name = k.value("predictor", cfg.selections.kd_name);
    KdParams& p = cfg.selections.kd_params;
    p.k_gain = k.value("k_gain", p.k_gain);
    p.d_desired = k.value("d_desired", p.d_desired);
    p.v_max = k.value("v_max", p.v_max);
    p.leader_corridor = k.value("leader_corridor", p.leader_corridor);
    p.offset_decay_steps = k.value("offset_decay_steps", p.offset_decay_steps);
  }

  if (doc.contains("fusion")) {
    const json& f = doc["fusion"];
    reject_unknown_keys(f, {"mode", "sigma_cross", "fixed_kd_variance"}, "fusion");
    cfg.selections.fusion.mode =
        fusion_mode_from_string(f.value("mode", std::string("ivw")));
    cfg.selections.fusion.sigma_cross =
        f.value("sigma_cross", cfg.selections.fusion.sigma_cross);
    cfg.selections.fusion.fixed_kd_variance =
        f.value("fixed_kd_variance", cfg.selections.fusion.fixed_kd_variance);
  }

  if (doc.contains("model")) {
    const json& m = doc["model"];
    reject_unknown_keys(m,
                        {"kind", "modes", "confine", "k_front", "encoder_hidden",
                         "kd_encoder_hidden", "decoder_hidden"},
                        "model");
    const std::string kind = m.value("kind", std::string("rrb"));
    if (kind == "rrb") {
      cfg.selections.kind = ModelKind::kResidualCorrection;
    } else if (kind == "edn") {
      cfg.selections.kind = ModelKind::kDirectRegression;
    } else {
      throw std::runtime_error("config: model kind must be rrb or edn");
    }
    cfg.selections.modes = m.value("modes", cfg.selections.modes);
    ModelArch& a = cfg.selections.arch;
    a.confine = m.value("confine", a.confine);
    a.k_front = m.value("k_front", a.k_front);
    if (m.contains("encoder_hidden")) a.encoder_hidden = m["encoder_hidden"].get<std::vector<int>>();
    if (m.contains("kd_encoder_hidden")) a.kd_encoder_hidden = m["kd_encoder_hidden"].get<std::vector<int>>();
    if (m.contains("decoder_hidden")) a.decoder_hidden = m["decoder_hidden"].get<std::vector<int>>();
  }

  if (doc.contains("train")) {
    const json& t = doc["train"];
    reject_unknown_keys(t, {"epochs", "batch_size", "learning_rate", "lr_halving_period"},
                        "train");
    cfg.train.epochs = t.value("epochs", cfg.train.epochs);
    cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
    cfg.train.learning_rate = t.value("learning_rate", cfg.train.learning_rate);
    cfg.train.lr_halving_period = t.value("lr_halving_period", cfg.train.lr_halving_period);
    if (cfg.train.epochs <= 0 || cfg.train.batch_size <= 0 ||
        cfg.train.learning_rate <= 0.0 || cfg.train.lr_halving_period <= 0) {
      throw std::runtime_error("config: train parameters must be positive");
    }
  }

  if (doc.contains("mpc")) {
    const json& m = doc["mpc"];
    reject_unknown_keys(m,
                        {"lambda", "wheelbase", "accel_min", "accel_max", "steer_min",
                         "steer_max", "iterations", "step_size"},
                        "mpc");
    cfg.mpc.lambda = m.value("lambda", cfg.mpc.lambda);
    cfg.mpc.wheelbase = m.value("wheelbase", cfg.mpc.wheelbase);
    cfg.mpc.u_min.x() = m.value("accel_min", cfg.mpc.u_min.x());
    cfg.mpc.u_max.x() = m.value("accel_max", cfg.mpc.u_max.x());
    cfg.mpc.u_min.y() = m.value("steer_min", cfg.mpc.u_min.y());
    cfg.mpc.u_max.y() = m.value("steer_max", cfg.mpc.u_max.y());
    cfg.mpc.iterations = m.value("iterations", cfg.mpc.iterations);
    cfg.mpc.step_size = m.value("step_size", cfg.mpc.step_size);
    if (cfg.mpc.lambda < 0.0 || cfg.mpc.wheelbase <= 0.0 ||
        cfg.mpc.u_min.x() >= cfg.mpc.u_max.x() || cfg.mpc.u_min.y() >= cfg.mpc.u_max.y()) {
      throw std::runtime_error("config: invalid mpc parameters");
    }
  }

  if (doc.contains("eval")) {
    const json& e = doc["eval"];
    reject_unknown_keys(e, {"pipelines", "jobs", "use_mpc", "vi_fixed_variance"},
                        "eval");
    if (e.contains("pipelines")) cfg.pipelines = e["pipelines"].get<std::vector<std::string>>();
    cfg.jobs = e.value("jobs", cfg.jobs);
    cfg.use_mpc = e.value("use_mpc", cfg.use_mpc);
    cfg.vi_fixed_variance = e.value("vi_fixed_variance", cfg.vi_fixed_variance);
  }

  cfg.train.seed = cfg.seed;
  cfg.selections.init_seed = cfg.seed;
  return cfg;
}

std::pair<int, int> generate_dataset_files(const RunConfig& cfg,
                                           const std::string& dir) {
  fs::create_directories(fs::path(dir) / "tracks");

  json manifest;
  manifest["format"] = "lanefuse-dataset-v1";
  manifest["seed"] = cfg.seed;
  manifest["map_file"] = "map.json";
  manifest["scenes"] = json::array();

  std::vector<std::pair<SceneMap, std::string>> map_scenes;
  int n_states = 0;
  int n_scenes = 0;
  for (const auto& [template_name, count] : cfg.templates) {
    for (int i = 0; i < count; ++i) {
      SyntheticSpec spec = cfg.synthetic;
      spec.template_name = template_name;
      char id[64];
      std::snprintf(id, sizeof(id), "%s_%04d", template_name.c_str(), i);
      const std::uint64_t scene_seed = stable_hash(cfg.seed ^ stable_hash(std::string(id)));
      SyntheticScene scene = generate_synthetic_scene(spec, scene_seed, id);
      const std::string track_rel = std::string("tracks/") + id + ".csv";
      save_track_csv((fs::path(dir) / track_rel).string(), scene.tracks);
      map_scenes.emplace_back(*scene.map, template_name);
      manifest["scenes"].push_back(
          {{"scene_id", id}, {"category", template_name}, {"track_file", track_rel}});
      n_states += static_cast<int>(scene.states.size());
      ++n_scenes;
    }
  }
  save_map_document((fs::path(dir) / "map.json").string(), map_scenes);
  std::ofstream out(fs::path(dir) / "dataset.json");
  if (!out) throw std::runtime_error("cannot write dataset manifest in " + dir);
  out << manifest.dump(1) << "\n";
  return {n_scenes, n_states};
}

}  // namespace lanefuse
