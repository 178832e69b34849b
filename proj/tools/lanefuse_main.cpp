#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "lanefuse/config.hpp"
#include "lanefuse/pipeline.hpp"
#include "lanefuse/render.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace lanefuse;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string output_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

RunConfig resolve_config(const CommonArgs& args) {
  RunConfig cfg;
  if (!args.config_path.empty()) cfg = load_run_config(args.config_path);
  if (const char* env = std::getenv("LANEFUSE_OUT"); env != nullptr && *env != '\0') {
    cfg.output_dir = env;
  }
  if (!args.output_dir.empty()) cfg.output_dir = args.output_dir;
  if (args.seed_set) {
    cfg.seed = args.seed;
    cfg.train.seed = args.seed;
    cfg.selections.init_seed = args.seed;
  }
  return cfg;
}

std::string checkpoint_default_name(const ModelSelections& sel) {
  std::string name = sel.kind == ModelKind::kDirectRegression ? "edn" : "rrb";
  if (sel.modes > 1) name += "_m" + std::to_string(sel.modes);
  if (sel.fusion.mode != FusionMode::kIvw) name += "_" + to_string(sel.fusion.mode);
  if (!sel.arch.confine && sel.kind == ModelKind::kResidualCorrection) name += "_nc";
  return name + ".ckpt";
}

/// Route loaded checkpoints into the evaluation context by their contents.
struct LoadedModels {
  std::vector<PipelineModel> storage;
  void attach(PipelineContext& ctx) const {
    for (const auto& pm : storage) {
      if (pm.sel.kind == ModelKind::kDirectRegression) {
        ctx.edn = &pm;
      } else if (pm.model.modes() >= 2) {
        ctx.rrb_multi = &pm;
      } else {
        ctx.rrb = &pm;
      }
    }
  }
};

json metrics_to_json(const MetricsReport& r) {
  json j;
  j["ade"] = r.ade;
  j["fde"] = r.fde;
  j["rv"] = r.rv;
  j["ct"] = r.ct;
  j["samples"] = r.total_samples;
  j["per_category"] = json::object();
  for (const auto& [cat, m] : r.per_category) {
    j["per_category"][cat] = {{"ade", m.ade}, {"fde", m.fde},   {"rv", m.rv},
                              {"ct", m.ct},   {"samples", m.samples}};
  }
  return j;
}

void print_metrics_table(std::ostream& os,
                         const std::vector<std::pair<std::string, MetricsReport>>& rows) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-12s %10s %10s %8s %8s %9s\n", "pipeline",
                "ADE[m]", "FDE[m]", "RV[%]", "CT[m]", "samples");
  os << buf;
  for (const auto& [name, r] : rows) {
    std::snprintf(buf, sizeof(buf), "%-12s %10.3f %10.3f %8.2f %8.3f %9d\n",
                  name.c_str(), r.ade, r.fde, r.rv, r.ct, r.total_samples);
    os << buf;
  }
}

int cmd_gen_data(const CommonArgs& common, const std::string& data_dir_flag) {
  RunConfig cfg = resolve_config(common);
  const std::string dir =
      data_dir_flag.empty() ? cfg.resolved_dataset_dir() : data_dir_flag;
  if (cfg.dataset_source != "synthetic") {
    throw std::runtime_error("gen-data only applies to the synthetic dataset source");
  }
  const auto [scenes, states] = generate_dataset_files(cfg, dir);
  std::cout << "wrote " << scenes << " scenes (" << states << " scenarios) to " << dir
            << "\n";
  return 0;
}

Dataset load_configured_dataset(const RunConfig& cfg, const std::string& data_dir) {
  if (cfg.dataset_source == "csv") {
    Dataset ds;
    std::set<std::string> cats;
    for (const auto& f : cfg.csv_track_files) {
      auto res = load_interaction_csv(f, cfg.csv_map_file);
      for (auto& s : res.states) {
        cats.insert(s.category);
        ds.states.push_back(std::move(s));
      }
      ds.skipped_tracks += res.skipped_tracks;
    }
    ds.categories.assign(cats.begin(), cats.end());
    return ds;
  }
  return load_dataset(data_dir);
}

int cmd_eval(const CommonArgs& common, const std::string& data_dir_flag,
             const std::vector<std::string>& checkpoints,
             const std::vector<std::string>& pipelines_flag,
             const std::string& scenario_flag, const std::string& holdout_flag,
             bool no_mpc, int jobs_flag, const std::string& kd_override) {
  RunConfig cfg = resolve_config(common);
  const std::string dir =
      data_dir_flag.empty() ? cfg.resolved_dataset_dir() : data_dir_flag;
  if (!scenario_flag.empty()) cfg.split_mode = split_mode_from_string(scenario_flag);
  if (!holdout_flag.empty()) cfg.holdout_category = holdout_flag;
  if (no_mpc) cfg.use_mpc = false;
  if (jobs_flag > 0) cfg.jobs = jobs_flag;
  std::vector<std::string> pipelines =
      pipelines_flag.empty() ? cfg.pipelines : pipelines_flag;

  Dataset ds = load_configured_dataset(cfg, dir);
  const DataSplit split = split_dataset(ds.states, cfg.split_mode, cfg.holdout_category);
  if (split.test.empty()) throw std::runtime_error("eval: empty test split");

  PipelineContext ctx;
  ctx.kd_params = cfg.selections.kd_params;
  ctx.mpc = cfg.mpc;
  ctx.use_mpc = cfg.use_mpc;
  ctx.vi_fixed_variance = cfg.vi_fixed_variance;
  ctx.kd_override = kd_override;

  LoadedModels models;
  for (const auto& path : checkpoints) models.storage.push_back(load_pipeline(path));
  models.attach(ctx);

  // Variance prior for the closed-form baselines, fitted on the train split.
  if (split.train.size() >= 2) {
    std::vector<ScenarioState> train_copy;
    train_copy.reserve(split.train.size());
    for (const ScenarioState* s : split.train) train_copy.push_back(*s);
    ctx.baseline_prior = fit_kd_variance(
        train_copy, [&](const ScenarioState& st, const KdVariancePrior& p) {
          return predict_kd1(st, p, ctx.kd_params);
        });
  }

  std::vector<std::pair<std::string, MetricsReport>> rows;
  for (const auto& name : pipelines) {
    const PipelineKind kind = pipeline_from_string(name);
    rows.emplace_back(name, evaluate_pipeline(kind, split.test, ctx, cfg.jobs));
  }

  fs::create_directories(cfg.output_dir);
  json out_json;
  out_json["split"] = cfg.split_mode == SplitMode::kSceneGeneralization
                          ? "scene-generalization"
                          : "scene-overfit";
  if (cfg.split_mode == SplitMode::kSceneGeneralization) {
    out_json["holdout"] = cfg.holdout_category;
  }
  out_json["test_samples"] = static_cast<int>(split.test.size());
  out_json["pipelines"] = json::object();
  for (const auto& [name, r] : rows) out_json["pipelines"][name] = metrics_to_json(r);
  {
    std::ofstream f(fs::path(cfg.output_dir) / "metrics.json");
    f << out_json.dump(1) << "\n";
  }
  {
    std::ofstream f(fs::path(cfg.output_dir) / "metrics.txt");
    print_metrics_table(f, rows);
  }
  print_metrics_table(std::cout, rows);
  std::cout << "reports written to " << cfg.output_dir << "\n";
  return 0;
}

int cmd_predict(const CommonArgs& common, const std::string& data_dir_flag,
                const std::vector<std::string>& checkpoints, const std::string& name,
                int index, const std::string& out_file, bool no_mpc) {
  RunConfig cfg = resolve_config(common);
  const std::string dir =
      data_dir_flag.empty() ? cfg.resolved_dataset_dir() : data_dir_flag;
  Dataset ds = load_configured_dataset(cfg, dir);
  if (index < 0 || index >= static_cast<int>(ds.states.size())) {
    throw std::runtime_error("predict: scenario index out of range (have " +
                             std::to_string(ds.states.size()) + ")");
  }
  PipelineContext ctx;
  ctx.kd_params = cfg.selections.kd_params;
  ctx.mpc = cfg.mpc;
  ctx.use_mpc = cfg.use_mpc && !no_mpc;
  LoadedModels models;
  for (const auto& path : checkpoints) models.storage.push_back(load_pipeline(path));
  models.attach(ctx);

  const ScenarioState& st = ds.states[static_cast<std::size_t>(index)];
  const MultiModalPrediction pred =
      predict_pipeline(pipeline_from_string(name), st, ctx);

  json j;
  j["scenario"] = st.uid();
  j["pipeline"] = name;
  j["modes"] = json::array();
  for (const auto& mode : pred.modes) {
    json jm;
    jm["means"] = json::array();
    jm["variances"] = json::array();
    for (int k = 0; k < mode.means.rows(); ++k) {
      jm["means"].push_back({mode.means(k, 0), mode.means(k, 1)});
      jm["variances"].push_back({mode.variances(k, 0), mode.variances(k, 1)});
    }
    j["modes"].push_back(std::move(jm));
  }
  const std::string out_path =
      out_file.empty() ? (fs::path(cfg.output_dir) / "prediction.json").string()
                       : out_file;
  fs::create_directories(fs::path(out_path).parent_path().empty()
                             ? "."
                             : fs::path(out_path).parent_path().string());
  std::ofstream f(out_path);
  f << j.dump(1) << "\n";
  std::cout << "prediction written to " << out_path << "\n";
  return 0;
}

int cmd_render(const CommonArgs& common, const std::string& data_dir_flag,
               const std::vector<std::string>& checkpoints,
               const std::vector<std::string>& pipelines, int index,
               const std::string& out_file, bool no_mpc) {
  RunConfig cfg = resolve_config(common);
  const std::string dir =
      data_dir_flag.empty() ? cfg.resolved_dataset_dir() : data_dir_flag;
  Dataset ds = load_configured_dataset(cfg, dir);
  if (index < 0 || index >= static_cast<int>(ds.states.size())) {
    throw std::runtime_error("render: scenario index out of range (have " +
                             std::to_string(ds.states.size()) + ")");
  }
  PipelineContext ctx;
  ctx.kd_params = cfg.selections.kd_params;
  ctx.mpc = cfg.mpc;
  ctx.use_mpc = cfg.use_mpc && !no_mpc;
  LoadedModels models;
  for (const auto& path : checkpoints) models.storage.push_back(load_pipeline(path));
  models.attach(ctx);

  const ScenarioState& st = ds.states[static_cast<std::size_t>(index)];
  std::vector<std::pair<std::string, MultiModalPrediction>> preds;
  for (const auto& name : pipelines) {
    preds.emplace_back(name, predict_pipeline(pipeline_from_string(name), st, ctx));
  }
  const std::string out_path =
      out_file.empty() ? (fs::path(cfg.output_dir) / "scene.svg").string() : out_file;
  render_scene(out_path, st, preds);
  std::cout << "image written to " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lane-aware trajectory prediction with learned residual fusion"};
  app.require_subcommand(1);
  app.fallthrough();

  CommonArgs common;
  app.add_option("--config", common.config_path, "JSON run configuration");
  app.add_option("--out", common.output_dir, "output directory (overrides config)");
  auto* seed_opt = app.add_option("--seed", common.seed, "global seed (overrides config)");

  std::string data_dir;
  std::vector<std::string> checkpoints;
  std::vector<std::string> pipelines;
  std::string scenario_mode, holdout, kd_override, out_file, checkpoint_out;
  std::string pipeline_name = "rrb";
  bool no_mpc = false;
  int jobs = 0;
  int index = 0;

  auto* gen = app.add_subcommand("gen-data", "generate the synthetic dataset");
  gen->add_option("--data", data_dir, "dataset directory");

  auto* train = app.add_subcommand("train", "fit the variance prior and train a model");
  train->add_option("--data", data_dir, "dataset directory");
  train->add_option("--checkpoint-out", checkpoint_out, "checkpoint file to write");
  std::string model_kind, fusion_mode, kd_name;
  int modes = 0, epochs = 0;
  bool no_confine = false;
  train->add_option("--model", model_kind, "rrb | edn");
  train->add_option("--fusion", fusion_mode,
                    "ivw | simple_add | vi_independent | vi_fixed");
  train->add_option("--kd", kd_name, "lin | cv | kd1 | kd2");
  train->add_option("--modes", modes, "prediction modes");
  train->add_option("--epochs", epochs, "training epochs");
  train->add_flag("--no-confine", no_confine, "disable the residual range bound");
  train->add_option("--scenario", scenario_mode, "scene-overfit | scene-generalization");
  train->add_option("--holdout", holdout, "held-out category for scene-generalization");

  auto* eval = app.add_subcommand("eval", "evaluate pipelines on the test split");
  eval->add_option("--data", data_dir, "dataset directory");
  eval->add_option("--checkpoint", checkpoints, "trained checkpoint(s)");
  eval->add_option("--pipelines", pipelines,
                   "lin cv kd1 kd2 edn rrb rrb_m rrb_m+mpc vi1 vi2");
  eval->add_option("--scenario", scenario_mode, "scene-overfit | scene-generalization");
  eval->add_option("--holdout", holdout, "held-out category");
  eval->add_option("--kd", kd_override, "swap the lane predictor of rrb pipelines");
  eval->add_flag("--no-mpc", no_mpc, "bypass the kinematic refinement");
  eval->add_option("--jobs", jobs, "evaluation threads");

  auto* predict = app.add_subcommand("predict", "run one pipeline on one scenario");
  predict->add_option("--data", data_dir, "dataset directory");
  predict->add_option("--checkpoint", checkpoints, "trained checkpoint(s)");
  predict->add_option("--pipeline", pipeline_name, "pipeline name");
  predict->add_option("--index", index, "scenario index");
  predict->add_option("--output", out_file, "prediction file");
  predict->add_flag("--no-mpc", no_mpc, "bypass the kinematic refinement");

  auto* render = app.add_subcommand("render", "draw a scenario to a vector image");
  render->add_option("--data", data_dir, "dataset directory");
  render->add_option("--checkpoint", checkpoints, "trained checkpoint(s)");
  render->add_option("--pipelines", pipelines, "pipelines to draw");
  render->add_option("--index", index, "scenario index");
  render->add_option("--output", out_file, "image file (.svg)");
  render->add_flag("--no-mpc", no_mpc, "bypass the kinematic refinement");

  CLI11_PARSE(app, argc, argv);
  common.seed_set = seed_opt->count() > 0;

  try {
    if (gen->parsed()) return cmd_gen_data(common, data_dir);
    if (train->parsed()) {
      RunConfig cfg = resolve_config(common);
      // Flag overrides win over the config file.
      if (!model_kind.empty()) {
        if (model_kind == "rrb") cfg.selections.kind = ModelKind::kResidualCorrection;
        else if (model_kind == "edn") cfg.selections.kind = ModelKind::kDirectRegression;
        else throw std::runtime_error("--model must be rrb or edn");
      }
      if (!fusion_mode.empty()) cfg.selections.fusion.mode = fusion_mode_from_string(fusion_mode);
      if (!kd_name.empty()) cfg.selections.kd_name = kd_name;
      if (modes > 0) cfg.selections.modes = modes;
      if (epochs > 0) cfg.train.epochs = epochs;
      if (no_confine) cfg.selections.arch.confine = false;
      if (!scenario_mode.empty()) cfg.split_mode = split_mode_from_string(scenario_mode);
      if (!holdout.empty()) cfg.holdout_category = holdout;

      // Inline variant of cmd_train with the patched config.
      const std::string dir = data_dir.empty() ? cfg.resolved_dataset_dir() : data_dir;
      Dataset ds = load_configured_dataset(cfg, dir);
      if (ds.skipped_tracks > 0) {
        std::cerr << "warning: skipped " << ds.skipped_tracks
                  << " track(s) with irregular timestamps\n";
      }
      const DataSplit split =
          split_dataset(ds.states, cfg.split_mode, cfg.holdout_category);
      if (split.train.empty()) throw std::runtime_error("train: empty training split");
      TrainOutput out = train_model(split.train, cfg.selections, cfg.train);
      fs::create_directories(cfg.output_dir);
      const std::string ckpt_path =
          checkpoint_out.empty()
              ? (fs::path(cfg.output_dir) / checkpoint_default_name(cfg.selections)).string()
              : checkpoint_out;
      save_pipeline(ckpt_path, out.pipeline);
      write_loss_curve_csv((fs::path(ckpt_path).parent_path() /
                            (fs::path(ckpt_path).stem().string() + "_loss.csv"))
                               .string(),
                           out.epoch_losses);
      std::cout << "trained on " << split.train.size() << " scenarios ("
                << out.epoch_losses.size() << " epochs); checkpoint: " << ckpt_path
                << "\n";
      std::cout << "first-epoch loss " << out.epoch_losses.front()
                << ", last-epoch loss " << out.epoch_losses.back() << "\n";
      return 0;
    }
    if (eval->parsed()) {
      return cmd_eval(common, data_dir, checkpoints, pipelines, scenario_mode, holdout,
                      no_mpc, jobs, kd_override);
    }
    if (predict->parsed()) {
      return cmd_predict(common, data_dir, checkpoints, pipeline_name, index, out_file,
                         no_mpc);
    }
    if (render->parsed()) {
      return cmd_render(common, data_dir, checkpoints, pipelines, index, out_file,
                        no_mpc);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
