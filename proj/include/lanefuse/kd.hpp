#pragma once

#include "lanefuse/scene.hpp"
#include "lanefuse/types.hpp"

#include <functional>

namespace lanefuse {

/// Fixed per-step, per-axis variance table of the knowledge-driven
/// predictors, expressed in the ego-aligned frame. Estimated from training
/// residuals, isotonic-projected so it never shrinks with the horizon.
struct KdVariancePrior {
  MatX2 table;  // kPredLen x 2, meters^2, strictly positive

  int steps() const { return static_cast<int>(table.rows()); }
  /// Conservative default used before any fit is available.
  static KdVariancePrior Default(int steps = kPredLen);
};

inline constexpr double kVarianceFloor = 1e-4;  // m^2
inline constexpr double kVarianceCeil = 1e4;    // m^2

struct KdParams {
  double k_gain = 0.5;           // gap-tracking gain, s^-2
  double d_desired = 8.0;        // desired leader gap, m
  double v_max = 20.0;           // m/s
  double leader_corridor = 2.0;  // lateral window for leader association, m
  int offset_decay_steps = 2;    // steps to rejoin the centerline
};

/// Current speed estimate: mean of the last two per-step speeds.
double ego_speed(const AgentHistory& ego);

/// Heading of the most recent non-degenerate history step; 0 when the
/// history never moves.
double ego_heading(const AgentHistory& ego);

/// Constant-velocity extrapolation of the last history step.
GaussianTrajectory predict_cv(const AgentHistory& ego, const KdVariancePrior& prior,
                              int steps = kPredLen);

/// Constant-velocity Kalman filter over the observations, then open-loop
/// prediction; variances come from the predicted state covariance.
GaussianTrajectory predict_linear_kalman(const AgentHistory& ego,
                                         int steps = kPredLen);

/// One continuation of the lane network reachable from the ego position.
struct LaneChain {
  MatX2 polyline;            // concatenated centerline(s)
  std::vector<int> ids;      // centerline ids along the chain
  double start_arc = 0.0;    // ego projection arc length on the chain
  double initial_offset = 0.0;  // signed lateral offset of the ego
  double turn_score = 0.0;   // cumulative junction turn angle, radians
};

/// All lane continuations whose first junction lies within `reach` meters
/// of the ego projection, ordered by |initial_offset|, then by the least
/// cumulative turning, then by id sequence. Front chain is the canonical
/// lane-following path. Never empty.
std::vector<LaneChain> lane_chains(const ScenarioState& state, double reach);

/// Lane-following prediction at constant speed along the canonical chain.
/// The ego's lateral offset decays linearly to zero over the first
/// offset_decay_steps steps.
GaussianTrajectory predict_kd1(const ScenarioState& state,
                               const KdVariancePrior& prior,
                               const KdParams& params = {});

/// Same path as predict_kd1, with the speed profile tracking the nearest
/// leader ahead on the chain: v <- clamp(v + k_gain*(gap - d_desired)*dt,
/// 0, v_max). Without a leader this is exactly predict_kd1.
GaussianTrajectory predict_kd2(const ScenarioState& state,
                               const KdVariancePrior& prior,
                               const KdParams& params = {});

/// One lane-following trajectory per reachable lane continuation, truncated
/// to max_modes. Mode 0 equals predict_kd1 exactly.
std::vector<GaussianTrajectory> enumerate_lane_branches(
    const ScenarioState& state, int max_modes, const KdVariancePrior& prior,
    const KdParams& params = {});

using KdPredictor =
    std::function<GaussianTrajectory(const ScenarioState&, const KdVariancePrior&)>;

/// Empirical per-step variance of (ground truth - prediction) in the
/// ego-aligned frame, isotonic-projected to be non-decreasing with the
/// horizon and floored at kVarianceFloor. Needs >= 2 scenarios.
KdVariancePrior fit_kd_variance(const std::vector<ScenarioState>& training,
                                const KdPredictor& kd);

/// Pool-adjacent-violators projection to a non-decreasing sequence.
VecX isotonic_non_decreasing(const VecX& values);

}  // namespace lanefuse
