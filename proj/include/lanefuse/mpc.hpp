#pragma once

#include "lanefuse/types.hpp"

#include <vector>

namespace lanefuse {

/// Bicycle-model state: position, heading (wrapped to (-pi, pi]) and
/// forward speed (never negative).
struct KinematicState {
  double x = 0.0;
  double y = 0.0;
  double phi = 0.0;
  double v = 0.0;
  Vec2 pos() const { return Vec2(x, y); }
};

/// Controls are rows of (acceleration m/s^2, steering angle rad).
using ControlSequence = MatX2;

struct MpcConfig {
  double lambda = 0.1;       // control-smoothness weight
  double wheelbase = 2.7;    // meters
  Vec2 u_min{-6.0, -0.6};
  Vec2 u_max{4.0, 0.6};
  int iterations = 200;
  double step_size = 1e-2;
  double dt = kFrameDt;
};

/// One discrete bicycle-model step; controls are assumed within bounds.
KinematicState bicycle_step(const KinematicState& s, const Vec2& u, double dt,
                            double wheelbase);

/// Iterated bicycle steps; returns the states after each control.
std::vector<KinematicState> rollout(const KinematicState& s_init,
                                    const ControlSequence& controls,
                                    const MpcConfig& cfg);

/// Initial state from the observed history: last position, heading and
/// speed of the last step (zero when the last step is degenerate).
KinematicState init_state_from_history(const AgentHistory& ego);

/// Control estimate at the anchor from history accelerations and curvature,
/// clamped to the bounds; pairs with the first control in the smoothness
/// term of the tracking cost.
Vec2 estimate_initial_control(const AgentHistory& ego, const MpcConfig& cfg);

struct MpcSolution {
  std::vector<KinematicState> states;  // one per horizon step
  ControlSequence controls;
  double cost = 0.0;
  double tracking_cost = 0.0;
  int iterations_used = 0;
};

/// Track a reference position sequence with projected-gradient descent over
/// the control sequence (single shooting). Controls stay inside the bounds;
/// the returned cost never exceeds the zero-control warm-start cost.
/// `u_prev` is the control paired with the first one in the smoothness term.
MpcSolution solve_mpc(const MatX2& reference, const KinematicState& s_init,
                      const MpcConfig& cfg, const Vec2& u_prev = Vec2::Zero());

}  // namespace lanefuse
