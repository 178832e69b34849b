#include "lanefuse/train.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace lanefuse {

using json = nlohmann::ordered_json;

double scheduled_lr(const TrainConfig& cfg, int epoch) {
  const int halvings = epoch / cfg.lr_halving_period;
  return cfg.learning_rate * std::pow(0.5, halvings);
}

SplitMode split_mode_from_string(const std::string& name) {
  if (name == "scene-overfit") return SplitMode::kSceneOverfit;
  if (name == "scene-generalization") return SplitMode::kSceneGeneralization;
  throw std::runtime_error("unknown split mode: " + name);
}

DataSplit split_dataset(const std::vector<ScenarioState>& states, SplitMode mode,
                        const std::string& holdout_category) {
  DataSplit split;
  for (const auto& st : states) {
    bool is_test;
    if (mode == SplitMode::kSceneGeneralization) {
      is_test = st.category == holdout_category;
    } else {
      is_test = stable_hash(st.uid()) % 100 >= 80;
    }
    (is_test ? split.test : split.train).push_back(&st);
  }
  return split;
}

GaussianTrajectory predict_kd_by_name(const std::string& name,
                                      const ScenarioState& state,
                                      const KdVariancePrior& prior,
                                      const KdParams& params) {
  if (name == "lin") return predict_linear_kalman(state.ego, prior.steps());
  if (name == "cv") return predict_cv(state.ego, prior);
  if (name == "kd1") return predict_kd1(state, prior, params);
  if (name == "kd2") return predict_kd2(state, prior, params);
  throw std::runtime_error("unknown knowledge-driven predictor: " + name);
}

std::vector<GaussianTrajectory> kd_modes_by_name(const std::string& name,
                                                 const ScenarioState& state,
                                                 int modes,
                                                 const KdVariancePrior& prior,
                                                 const KdParams& params) {
  std::vector<GaussianTrajectory> out;
  if (name == "kd1" || name == "kd2") {
    out = enumerate_lane_branches(state, modes, prior, params);
    if (name == "kd2" && !out.empty()) {
      // The leader-aware speed profile applies to the primary branch.
      out[0] = predict_kd2(state, prior, params);
    }
  } else {
    out.push_back(predict_kd_by_name(name, state, prior, params));
  }
  while (static_cast<int>(out.size()) < modes) out.push_back(out.front());
  return out;
}

namespace {

struct TrainingSample {
  const ScenarioState* state = nullptr;
  std::vector<GaussianTrajectory> kd_modes;  // world frame, one per mode
  std::vector<MatX2> kd_means;
  MatX2 gt;
  double confinement_c = 1.0;
};

std::vector<TrainingSample> precompute_samples(
    const std::vector<const ScenarioState*>& states, const ModelSelections& sel,
    const KdVariancePrior& prior) {
  std::vector<TrainingSample> out;
  out.reserve(states.size());
  for (const ScenarioState* st : states) {
    if (!st->ground_truth.has_value()) continue;
    TrainingSample s;
    s.state = st;
    s.gt = *st->ground_truth;
    s.confinement_c = st->map->confinement_c;
    s.kd_modes = kd_modes_by_name(sel.kd_name, *st, sel.modes, prior, sel.kd_params);
    for (const auto& t : s.kd_modes) s.kd_means.push_back(t.means);
    out.push_back(std::move(s));
  }
  return out;
}

/// Forward one sample to its fused (or direct) per-mode prediction.
struct SampleForward {
  ModelForward fwd;
  std::vector<FusionResult> fusions;  // correction model only
  MultiModalPrediction prediction;
};

SampleForward forward_sample(const ResidualModel& model, const ModelSelections& sel,
                             const TrainingSample& s) {
  SampleForward sf;
  sf.fwd = model_forward(model, *s.state, s.kd_means, s.confinement_c);
  std::vector<GaussianTrajectory> modes;
  for (int m = 0; m < model.modes(); ++m) {
    const auto& mf = sf.fwd.modes[static_cast<std::size_t>(m)];
    if (model.kind == ModelKind::kResidualCorrection) {
      FusionResult fr = fuse(s.kd_modes[static_cast<std::size_t>(m)], mf.means_world,
                             mf.variances_world, sel.fusion);
      modes.push_back(fr.fused);
      sf.fusions.push_back(std::move(fr));
    } else {
      GaussianTrajectory g;
      g.means = mf.means_world;
      g.variances = mf.variances_world;
      modes.push_back(std::move(g));
    }
  }
  sf.prediction = MultiModalPrediction::Uniform(std::move(modes));
  return sf;
}

void fisher_yates_shuffle(std::vector<std::size_t>& idx, std::mt19937_64& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    const std::size_t j = rng() % i;
    std::swap(idx[i - 1], idx[j]);
  }
}

std::string diagnostics_string(const ResidualModel& model) {
  std::ostringstream os;
  os << "|hist|=" << model.hist_enc.parameter_norm()
     << " |int|=" << model.int_enc.parameter_norm();
  if (model.kind == ModelKind::kResidualCorrection) {
    os << " |kd|=" << model.kd_enc.parameter_norm();
  }
  for (int m = 0; m < model.modes(); ++m) {
    os << " |dec" << m << "|=" << model.decoders[static_cast<std::size_t>(m)].parameter_norm();
  }
  return os.str();
}

}  // namespace

TrainOutput train_model(const std::vector<const ScenarioState*>& train_set,
                        const ModelSelections& sel, const TrainConfig& cfg) {
  if (train_set.empty()) throw std::runtime_error("train_model: empty training set");

  TrainOutput out;
  out.pipeline.sel = sel;
  out.pipeline.prior = fit_kd_variance(
      [&] {
        std::vector<ScenarioState> v;
        v.reserve(train_set.size());
        for (const ScenarioState* s : train_set) v.push_back(*s);
        return v;
      }(),
      [&](const ScenarioState& st, const KdVariancePrior& p) {
        return predict_kd_by_name(sel.kd_name, st, p, sel.kd_params);
      });

  ResidualModel& model = out.pipeline.model;
  model = make_model(sel.kind, sel.arch, sel.modes, sel.init_seed);

  auto samples = precompute_samples(train_set, sel, out.pipeline.prior);
  if (samples.empty()) {
    throw std::runtime_error("train_model: no training samples with ground truth");
  }

  auto step_bundles = [&](double lr) {
    adam_step(model.hist_enc, lr);
    adam_step(model.int_enc, lr);
    if (model.kind == ModelKind::kResidualCorrection) adam_step(model.kd_enc, lr);
    for (auto& d : model.decoders) adam_step(d, lr);
  };

  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = scheduled_lr(cfg, epoch);
    std::mt19937_64 rng(stable_hash(cfg.seed) ^
                        stable_hash(static_cast<std::uint64_t>(epoch) + 1));
    fisher_yates_shuffle(order, rng);

    double epoch_loss = 0.0;
    std::size_t cursor = 0;
    int batch_index = 0;
    while (cursor < order.size()) {
      const std::size_t batch_end =
          std::min(order.size(), cursor + static_cast<std::size_t>(cfg.batch_size));
      const double inv_b = 1.0 / static_cast<double>(batch_end - cursor);
      for (std::size_t i = cursor; i < batch_end; ++i) {
        const TrainingSample& s = samples[order[i]];
        SampleForward sf = forward_sample(model, sel, s);
        const int m_star = closest_mode(sf.prediction, s.gt);
        NllGrad grad;
        const double nll =
            gaussian_nll(sf.prediction.modes[static_cast<std::size_t>(m_star)], s.gt, &grad);
        if (!std::isfinite(nll)) {
          throw std::runtime_error(
              "train_model: non-finite loss at epoch " + std::to_string(epoch) +
              " batch " + std::to_string(batch_index) + "; " + diagnostics_string(model));
        }
        epoch_loss += nll;
        grad.d_means *= inv_b;
        grad.d_variances *= inv_b;
        if (model.kind == ModelKind::kResidualCorrection) {
          const auto& mf = sf.fwd.modes[static_cast<std::size_t>(m_star)];
          const FusionGrad fg = fuse_backward(
              s.kd_modes[static_cast<std::size_t>(m_star)], mf.means_world,
              mf.variances_world, sel.fusion,
              sf.fusions[static_cast<std::size_t>(m_star)], grad.d_means,
              grad.d_variances);
          model_backward(model, sf.fwd, m_star, fg.d_res_means, fg.d_res_variances);
        } else {
          model_backward(model, sf.fwd, m_star, grad.d_means, grad.d_variances);
        }
      }
      step_bundles(lr);
      cursor = batch_end;
      ++batch_index;
    }
    out.epoch_losses.push_back(epoch_loss / static_cast<double>(samples.size()));
  }
  return out;
}

MultiModalPrediction model_predict(const PipelineModel& pm, const ScenarioState& state,
                                   const std::string& kd_override) {
  const std::string kd = kd_override.empty() ? pm.sel.kd_name : kd_override;
  const auto kd_modes =
      kd_modes_by_name(kd, state, pm.model.modes(), pm.prior, pm.sel.kd_params);
  std::vector<MatX2> kd_means;
  for (const auto& t : kd_modes) kd_means.push_back(t.means);

  ModelForward fwd =
      model_forward(pm.model, state, kd_means, state.map->confinement_c);
  std::vector<GaussianTrajectory> modes;
  for (int m = 0; m < pm.model.modes(); ++m) {
    const auto& mf = fwd.modes[static_cast<std::size_t>(m)];
    if (pm.model.kind == ModelKind::kResidualCorrection) {
      modes.push_back(fuse(kd_modes[static_cast<std::size_t>(m)], mf.means_world,
                           mf.variances_world, pm.sel.fusion)
                          .fused);
    } else {
      GaussianTrajectory g;
      g.means = mf.means_world;
      g.variances = mf.variances_world;
      modes.push_back(std::move(g));
    }
  }
  return MultiModalPrediction::Uniform(std::move(modes));
}

namespace {

json arch_to_json(const ModelArch& a) {
  json j;
  j["t_obs"] = a.t_obs;
  j["t_pred"] = a.t_pred;
  j["k_front"] = a.k_front;
  j["confine"] = a.confine;
  j["encoder_hidden"] = a.encoder_hidden;
  j["kd_encoder_hidden"] = a.kd_encoder_hidden;
  j["decoder_hidden"] = a.decoder_hidden;
  return j;
}

ModelArch arch_from_json(const json& j) {
  ModelArch a;
  a.t_obs = j.at("t_obs").get<int>();
  a.t_pred = j.at("t_pred").get<int>();
  a.k_front = j.at("k_front").get<int>();
  a.confine = j.at("confine").get<bool>();
  a.encoder_hidden = j.at("encoder_hidden").get<std::vector<int>>();
  a.kd_encoder_hidden = j.at("kd_encoder_hidden").get<std::vector<int>>();
  a.decoder_hidden = j.at("decoder_hidden").get<std::vector<int>>();
  return a;
}

}  // namespace

void save_pipeline(const std::string& path, const PipelineModel& pm) {
  json meta;
  meta["kind"] = pm.sel.kind == ModelKind::kResidualCorrection ? "rrb" : "edn";
  meta["kd"] = pm.sel.kd_name;
  meta["fusion"] = {{"mode", to_string(pm.sel.fusion.mode)},
                    {"sigma_cross", pm.sel.fusion.sigma_cross},
                    {"fixed_kd_variance", pm.sel.fusion.fixed_kd_variance}};
  meta["kd_params"] = {{"k_gain", pm.sel.kd_params.k_gain},
                       {"d_desired", pm.sel.kd_params.d_desired},
                       {"v_max", pm.sel.kd_params.v_max},
                       {"leader_corridor", pm.sel.kd_params.leader_corridor},
                       {"offset_decay_steps", pm.sel.kd_params.offset_decay_steps}};
  meta["arch"] = arch_to_json(pm.sel.arch);
  meta["modes"] = pm.sel.modes;
  meta["init_seed"] = pm.sel.init_seed;
  meta["prior"] = json::array();
  for (int j = 0; j < pm.prior.table.rows(); ++j) {
    meta["prior"].push_back({pm.prior.table(j, 0), pm.prior.table(j, 1)});
  }

  std::vector<std::pair<std::string, const MlpBundle*>> bundles;
  bundles.emplace_back("hist_enc", &pm.model.hist_enc);
  bundles.emplace_back("int_enc", &pm.model.int_enc);
  if (pm.sel.kind == ModelKind::kResidualCorrection) {
    bundles.emplace_back("kd_enc", &pm.model.kd_enc);
  }
  for (int m = 0; m < pm.model.modes(); ++m) {
    bundles.emplace_back("decoder_" + std::to_string(m),
                         &pm.model.decoders[static_cast<std::size_t>(m)]);
  }
  save_checkpoint(path, bundles, meta.dump());
}

PipelineModel load_pipeline(const std::string& path) {
  CheckpointData data = load_checkpoint(path);
  json meta;
  try {
    meta = json::parse(data.meta);
  } catch (const std::exception& e) {
    throw std::runtime_error("checkpoint load: bad metadata: " + std::string(e.what()));
  }
  PipelineModel pm;
  const std::string kind = meta.at("kind").get<std::string>();
  pm.sel.kind = kind == "edn" ? ModelKind::kDirectRegression
                              : ModelKind::kResidualCorrection;
  pm.sel.kd_name = meta.at("kd").get<std::string>();
  pm.sel.fusion.mode = fusion_mode_from_string(meta.at("fusion").at("mode").get<std::string>());
  pm.sel.fusion.sigma_cross = meta.at("fusion").at("sigma_cross").get<double>();
  pm.sel.fusion.fixed_kd_variance = meta.at("fusion").at("fixed_kd_variance").get<double>();
  pm.sel.kd_params.k_gain = meta.at("kd_params").at("k_gain").get<double>();
  pm.sel.kd_params.d_desired = meta.at("kd_params").at("d_desired").get<double>();
  pm.sel.kd_params.v_max = meta.at("kd_params").at("v_max").get<double>();
  pm.sel.kd_params.leader_corridor = meta.at("kd_params").at("leader_corridor").get<double>();
  pm.sel.kd_params.offset_decay_steps = meta.at("kd_params").at("offset_decay_steps").get<int>();
  pm.sel.arch = arch_from_json(meta.at("arch"));
  pm.sel.modes = meta.at("modes").get<int>();
  pm.sel.init_seed = meta.at("init_seed").get<std::uint64_t>();

  const auto& prior_rows = meta.at("prior");
  pm.prior.table.resize(static_cast<Eigen::Index>(prior_rows.size()), 2);
  for (std::size_t j = 0; j < prior_rows.size(); ++j) {
    pm.prior.table(static_cast<Eigen::Index>(j), 0) = prior_rows[j][0].get<double>();
    pm.prior.table(static_cast<Eigen::Index>(j), 1) = prior_rows[j][1].get<double>();
  }

  // Rebuild the model with the checkpoint parameters, verifying shapes.
  pm.model = make_model(pm.sel.kind, pm.sel.arch, pm.sel.modes, pm.sel.init_seed);
  auto take = [&](const std::string& name, MlpBundle& dst) {
    auto it = data.bundles.find(name);
    if (it == data.bundles.end()) {
      throw std::runtime_error("checkpoint load: missing bundle '" + name + "'");
    }
    if (it->second.spec.layer_widths != dst.spec.layer_widths) {
      throw std::runtime_error("checkpoint load: architecture mismatch for '" + name + "'");
    }
    dst = std::move(it->second);
  };
  take("hist_enc", pm.model.hist_enc);
  take("int_enc", pm.model.int_enc);
  if (pm.sel.kind == ModelKind::kResidualCorrection) take("kd_enc", pm.model.kd_enc);
  for (int m = 0; m < pm.sel.modes; ++m) {
    take("decoder_" + std::to_string(m), pm.model.decoders[static_cast<std::size_t>(m)]);
  }
  return pm;
}

void write_loss_curve_csv(const std::string& path, const std::vector<double>& losses) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write loss curve: " + path);
  out << "epoch,mean_loss\n";
  char buf[64];
  for (std::size_t e = 0; e < losses.size(); ++e) {
    std::snprintf(buf, sizeof(buf), "%zu,%.12g\n", e, losses[e]);
    out << buf;
  }
}

}  // namespace lanefuse
