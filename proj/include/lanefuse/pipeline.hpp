#pragma once

#include "lanefuse/metrics.hpp"
#include "lanefuse/mpc.hpp"
#include "lanefuse/train.hpp"

#include <string>
#include <vector>

namespace lanefuse {

/// Prediction pipelines selectable from the CLI. Names:
/// lin cv kd1 kd2 edn rrb rrb_m rrb_m+mpc vi1 vi2
enum class PipelineKind {
  kLin,
  kCv,
  kKd1,
  kKd2,
  kEdn,
  kRrb,
  kRrbM,
  kRrbMMpc,
  kVi1,
  kVi2,
};

PipelineKind pipeline_from_string(const std::string& name);
std::string to_string(PipelineKind kind);

/// Everything the pipelines need at evaluation time. Model pointers may
/// stay null when the corresponding pipelines are not selected.
struct PipelineContext {
  const PipelineModel* rrb = nullptr;        // single-mode correction model
  const PipelineModel* rrb_multi = nullptr;  // multi-mode correction model
  const PipelineModel* edn = nullptr;        // direct-regression model
  KdVariancePrior baseline_prior = KdVariancePrior::Default();
  KdParams kd_params;
  MpcConfig mpc;
  bool use_mpc = true;           // --no-mpc clears this
  double vi_fixed_variance = 1.0;
  std::string kd_override;       // swap the lane predictor of rrb pipelines
};

MultiModalPrediction predict_pipeline(PipelineKind kind, const ScenarioState& state,
                                      const PipelineContext& ctx);

/// Replace each mode's means with a kinematically feasible tracking of
/// them; variances pass through unchanged.
MultiModalPrediction refine_with_mpc(const MultiModalPrediction& pred,
                                     const ScenarioState& state,
                                     const MpcConfig& cfg);

/// Metrics over a sample list, fanned out over `jobs` threads with a
/// deterministic reduction.
MetricsReport evaluate_pipeline(PipelineKind kind,
                                const std::vector<const ScenarioState*>& states,
                                const PipelineContext& ctx, int jobs = 1);

}  // namespace lanefuse
