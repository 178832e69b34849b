#include "lanefuse/pipeline.hpp"

#include <stdexcept>
#include <thread>

namespace lanefuse {

PipelineKind pipeline_from_string(const std::string& name) {
  if (name == "lin") return PipelineKind::kLin;
  if (name == "cv") return PipelineKind::kCv;
  if (name == "kd1") return PipelineKind::kKd1;
  if (name == "kd2") return PipelineKind::kKd2;
  if (name == "edn") return PipelineKind::kEdn;
  if (name == "rrb") return PipelineKind::kRrb;
  if (name == "rrb_m") return PipelineKind::kRrbM;
  if (name == "rrb_m+mpc") return PipelineKind::kRrbMMpc;
  if (name == "vi1") return PipelineKind::kVi1;
  if (name == "vi2") return PipelineKind::kVi2;
  throw std::runtime_error("unknown pipeline: " + name);
}

std::string to_string(PipelineKind kind) {
  switch (kind) {
    case PipelineKind::kLin: return "lin";
    case PipelineKind::kCv: return "cv";
    case PipelineKind::kKd1: return "kd1";
    case PipelineKind::kKd2: return "kd2";
    case PipelineKind::kEdn: return "edn";
    case PipelineKind::kRrb: return "rrb";
    case PipelineKind::kRrbM: return "rrb_m";
    case PipelineKind::kRrbMMpc: return "rrb_m+mpc";
    case PipelineKind::kVi1: return "vi1";
    case PipelineKind::kVi2: return "vi2";
  }
  return "?";
}

namespace {

MultiModalPrediction single(GaussianTrajectory t) {
  std::vector<GaussianTrajectory> modes;
  modes.push_back(std::move(t));
  return MultiModalPrediction::Uniform(std::move(modes));
}

const PipelineModel* require_model(const PipelineModel* pm, PipelineKind kind,
                                   bool multi_mode) {
  if (pm == nullptr) {
    throw std::runtime_error("pipeline '" + to_string(kind) +
                             "' needs a trained checkpoint");
  }
  if (multi_mode && pm->model.modes() < 2) {
    throw std::runtime_error("pipeline '" + to_string(kind) +
                             "' needs a checkpoint with >= 2 modes");
  }
  return pm;
}

/// Variance-based integration of the lane prediction with an independent
/// full trajectory (the direct-regression model's output).
MultiModalPrediction vi_fusion(const ScenarioState& state, const PipelineContext& ctx,
                               bool fixed_kd_variance) {
  const PipelineModel* edn = require_model(
      ctx.edn, fixed_kd_variance ? PipelineKind::kVi2 : PipelineKind::kVi1, false);
  const MultiModalPrediction indep = model_predict(*edn, state);
  const GaussianTrajectory kd =
      predict_kd1(state, ctx.baseline_prior, ctx.kd_params);
  FusionConfig cfg;
  cfg.mode = fixed_kd_variance ? FusionMode::kViFixed : FusionMode::kViIndependent;
  cfg.fixed_kd_variance = ctx.vi_fixed_variance;
  std::vector<GaussianTrajectory> modes;
  for (const auto& mode : indep.modes) {
    const MatX2 res_means = mode.means - kd.means;
    modes.push_back(fuse(kd, res_means, mode.variances, cfg).fused);
  }
  return MultiModalPrediction::Uniform(std::move(modes));
}

}  // namespace

MultiModalPrediction refine_with_mpc(const MultiModalPrediction& pred,
                                     const ScenarioState& state,
                                     const MpcConfig& cfg) {
  MultiModalPrediction out = pred;
  const KinematicState s_init = init_state_from_history(state.ego);
  const Vec2 u_prev = estimate_initial_control(state.ego, cfg);
  for (auto& mode : out.modes) {
    const MpcSolution sol = solve_mpc(mode.means, s_init, cfg, u_prev);
    for (int j = 0; j < mode.means.rows(); ++j) {
      mode.means(j, 0) = sol.states[static_cast<std::size_t>(j)].x;
      mode.means(j, 1) = sol.states[static_cast<std::size_t>(j)].y;
    }
  }
  return out;
}

MultiModalPrediction predict_pipeline(PipelineKind kind, const ScenarioState& state,
                                      const PipelineContext& ctx) {
  switch (kind) {
    case PipelineKind::kLin:
      return single(predict_linear_kalman(state.ego, ctx.baseline_prior.steps()));
    case PipelineKind::kCv:
      return single(predict_cv(state.ego, ctx.baseline_prior));
    case PipelineKind::kKd1:
      return single(predict_kd1(state, ctx.baseline_prior, ctx.kd_params));
    case PipelineKind::kKd2:
      return single(predict_kd2(state, ctx.baseline_prior, ctx.kd_params));
    case PipelineKind::kEdn:
      return model_predict(*require_model(ctx.edn, kind, false), state);
    case PipelineKind::kRrb:
      return model_predict(*require_model(ctx.rrb, kind, false), state,
                           ctx.kd_override);
    case PipelineKind::kRrbM:
      return model_predict(*require_model(ctx.rrb_multi, kind, true), state,
                           ctx.kd_override);
    case PipelineKind::kRrbMMpc: {
      MultiModalPrediction pred = model_predict(
          *require_model(ctx.rrb_multi, kind, true), state, ctx.kd_override);
      if (ctx.use_mpc) pred = refine_with_mpc(pred, state, ctx.mpc);
      return pred;
    }
    case PipelineKind::kVi1:
      return vi_fusion(state, ctx, false);
    case PipelineKind::kVi2:
      return vi_fusion(state, ctx, true);
  }
  throw std::runtime_error("predict_pipeline: unreachable");
}

MetricsReport evaluate_pipeline(PipelineKind kind,
                                const std::vector<const ScenarioState*>& states,
                                const PipelineContext& ctx, int jobs) {
  if (states.empty()) throw std::runtime_error("evaluate_pipeline: empty dataset");
  for (const ScenarioState* st : states) {
    if (!st->ground_truth.has_value()) {
      throw std::runtime_error("evaluate_pipeline: scenario without ground truth");
    }
  }
  std::vector<std::pair<std::string, SampleMetrics>> rows(states.size());

  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const ScenarioState& st = *states[i];
      const MultiModalPrediction pred = predict_pipeline(kind, st, ctx);
      rows[i] = {st.category,
                 compute_sample_metrics(pred, *st.ground_truth,
                                        st.ego.position(st.ego.size() - 1), *st.map)};
    }
  };

  const int n_jobs = std::max(1, jobs);
  if (n_jobs == 1) {
    work(0, states.size());
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (states.size() + n_jobs - 1) / static_cast<std::size_t>(n_jobs);
    for (int t = 0; t < n_jobs; ++t) {
      const std::size_t begin = static_cast<std::size_t>(t) * chunk;
      const std::size_t end = std::min(states.size(), begin + chunk);
      if (begin >= end) break;
      pool.emplace_back(work, begin, end);
    }
    for (auto& th : pool) th.join();
  }
  return aggregate_metrics(rows);
}

}  // namespace lanefuse
