#include "lanefuse/mpc.hpp"

#include <cmath>
#include <stdexcept>

namespace lanefuse {

KinematicState bicycle_step(const KinematicState& s, const Vec2& u, double dt,
                            double wheelbase) {
  KinematicState n;
  n.x = s.x + s.v * std::cos(s.phi) * dt;
  n.y = s.y + s.v * std::sin(s.phi) * dt;
  n.phi = wrap_angle(s.phi + s.v / wheelbase * std::tan(u.y()) * dt);
  n.v = std::max(0.0, s.v + u.x() * dt);
  return n;
}

std::vector<KinematicState> rollout(const KinematicState& s_init,
                                    const ControlSequence& controls,
                                    const MpcConfig& cfg) {
  std::vector<KinematicState> states;
  states.reserve(static_cast<std::size_t>(controls.rows()));
  KinematicState s = s_init;
  for (int k = 0; k < controls.rows(); ++k) {
    s = bicycle_step(s, controls.row(k).transpose(), cfg.dt, cfg.wheelbase);
    states.push_back(s);
  }
  return states;
}

KinematicState init_state_from_history(const AgentHistory& ego) {
  const int n = ego.size();
  KinematicState s;
  const Vec2 last = ego.position(n - 1);
  s.x = last.x();
  s.y = last.y();
  if (n >= 2) {
    const Vec2 step = last - ego.position(n - 2);
    const double len = step.norm();
    s.v = len / kFrameDt;
    s.phi = len > 0.0 ? std::atan2(step.y(), step.x()) : 0.0;
  }
  return s;
}

Vec2 estimate_initial_control(const AgentHistory& ego, const MpcConfig& cfg) {
  const int n = ego.size();
  Vec2 u = Vec2::Zero();
  if (n >= 3) {
    const Vec2 p2 = ego.position(n - 1);
    const Vec2 p1 = ego.position(n - 2);
    const Vec2 p0 = ego.position(n - 3);
    const double v1 = (p2 - p1).norm() / kFrameDt;
    const double v0 = (p1 - p0).norm() / kFrameDt;
    u.x() = (v1 - v0) / kFrameDt;
    if ((p2 - p1).norm() > 1e-9 && (p1 - p0).norm() > 1e-9 && v1 > 1e-6) {
      const double h1 = std::atan2((p2 - p1).y(), (p2 - p1).x());
      const double h0 = std::atan2((p1 - p0).y(), (p1 - p0).x());
      const double dphi = wrap_angle(h1 - h0);
      u.y() = std::atan(cfg.wheelbase * dphi / (v1 * kFrameDt));
    }
  }
  return u.cwiseMax(cfg.u_min).cwiseMin(cfg.u_max);
}

namespace {

double evaluate_cost(const MatX2& reference, const KinematicState& s_init,
                     const ControlSequence& u, const Vec2& u_prev,
                     const MpcConfig& cfg, double* tracking_out = nullptr) {
  double tracking = 0.0;
  double smooth = 0.0;
  KinematicState s = s_init;
  for (int k = 0; k < u.rows(); ++k) {
    s = bicycle_step(s, u.row(k).transpose(), cfg.dt, cfg.wheelbase);
    tracking += (s.pos() - reference.row(k).transpose()).squaredNorm();
    const Vec2 prev = k == 0 ? u_prev : Vec2(u.row(k - 1).transpose());
    smooth += (Vec2(u.row(k).transpose()) - prev).squaredNorm();
  }
  if (tracking_out != nullptr) *tracking_out = tracking;
  return tracking + cfg.lambda * smooth;
}

/// Adjoint sweep through the rollout: exact gradient of the cost with
/// respect to every control.
ControlSequence cost_gradient(const MatX2& reference, const KinematicState& s_init,
                              const ControlSequence& u, const Vec2& u_prev,
                              const MpcConfig& cfg) {
  const int T = static_cast<int>(u.rows());
  std::vector<KinematicState> states(static_cast<std::size_t>(T) + 1);
  states[0] = s_init;
  for (int k = 0; k < T; ++k) {
    states[static_cast<std::size_t>(k) + 1] =
        bicycle_step(states[static_cast<std::size_t>(k)], u.row(k).transpose(),
                     cfg.dt, cfg.wheelbase);
  }

  ControlSequence grad = ControlSequence::Zero(T, 2);
  // Smoothness term.
  for (int k = 0; k < T; ++k) {
    const Vec2 uk = u.row(k).transpose();
    const Vec2 prev = k == 0 ? u_prev : Vec2(u.row(k - 1).transpose());
    grad.row(k) += (2.0 * cfg.lambda * (uk - prev)).transpose();
    if (k + 1 < T) {
      const Vec2 next = u.row(k + 1).transpose();
      grad.row(k) -= (2.0 * cfg.lambda * (next - uk)).transpose();
    }
  }

  // Tracking term via backward adjoint over the dynamics.
  Eigen::Vector4d adj = Eigen::Vector4d::Zero();  // d cost / d s_{k+1}
  for (int k = T - 1; k >= 0; --k) {
    const KinematicState& sk = states[static_cast<std::size_t>(k)];
    const KinematicState& sk1 = states[static_cast<std::size_t>(k) + 1];
    adj(0) += 2.0 * (sk1.x - reference(k, 0));
    adj(1) += 2.0 * (sk1.y - reference(k, 1));

    const double a = u(k, 0);
    const double gamma = u(k, 1);
    const double cphi = std::cos(sk.phi);
    const double sphi = std::sin(sk.phi);
    const double tgamma = std::tan(gamma);
    const bool moving = sk.v + a * cfg.dt > 0.0;

    // d s_{k+1} / d u_k.
    const double dphi_dgamma =
        sk.v / cfg.wheelbase * cfg.dt / (std::cos(gamma) * std::cos(gamma));
    grad(k, 0) += adj(3) * (moving ? cfg.dt : 0.0);
    grad(k, 1) += adj(2) * dphi_dgamma;

    // adj <- (d s_{k+1} / d s_k)^T adj.
    Eigen::Vector4d prev;
    prev(0) = adj(0);
    prev(1) = adj(1);
    prev(2) = -sk.v * sphi * cfg.dt * adj(0) + sk.v * cphi * cfg.dt * adj(1) + adj(2);
    prev(3) = cphi * cfg.dt * adj(0) + sphi * cfg.dt * adj(1) +
              tgamma / cfg.wheelbase * cfg.dt * adj(2) + (moving ? adj(3) : 0.0);
    adj = prev;
  }
  return grad;
}

ControlSequence clamp_controls(ControlSequence u, const MpcConfig& cfg) {
  for (int k = 0; k < u.rows(); ++k) {
    u(k, 0) = std::clamp(u(k, 0), cfg.u_min.x(), cfg.u_max.x());
    u(k, 1) = std::clamp(u(k, 1), cfg.u_min.y(), cfg.u_max.y());
  }
  return u;
}

/// Controls that reproduce the reference when it is itself a feasible
/// rollout; otherwise a serviceable warm start recovered from the
/// reference geometry.
ControlSequence controls_from_reference(const MatX2& reference,
                                        const KinematicState& s_init,
                                        const MpcConfig& cfg) {
  const int T = static_cast<int>(reference.rows());
  // Position k+1 is produced by speed/heading at step k, so both are
  // recoverable from consecutive reference points. Step 0 is pinned by
  // s_init; the loose values at step T only shape the unused final speed.
  std::vector<double> v(static_cast<std::size_t>(T) + 1, s_init.v);
  std::vector<double> phi(static_cast<std::size_t>(T) + 1, s_init.phi);
  for (int k = 1; k < T; ++k) {
    const Vec2 d = (reference.row(k) - reference.row(k - 1)).transpose();
    const double len = d.norm();
    v[static_cast<std::size_t>(k)] = len / cfg.dt;
    phi[static_cast<std::size_t>(k)] =
        len > 1e-9 ? std::atan2(d.y(), d.x()) : phi[static_cast<std::size_t>(k - 1)];
  }
  v[static_cast<std::size_t>(T)] = v[static_cast<std::size_t>(T - 1)];
  phi[static_cast<std::size_t>(T)] = phi[static_cast<std::size_t>(T - 1)];

  ControlSequence u(T, 2);
  for (int k = 0; k < T; ++k) {
    u(k, 0) = (v[static_cast<std::size_t>(k) + 1] - v[static_cast<std::size_t>(k)]) / cfg.dt;
    const double dphi = wrap_angle(phi[static_cast<std::size_t>(k) + 1] -
                                   phi[static_cast<std::size_t>(k)]);
    u(k, 1) = v[static_cast<std::size_t>(k)] > 1e-6
                  ? std::atan(cfg.wheelbase * dphi /
                              (v[static_cast<std::size_t>(k)] * cfg.dt))
                  : 0.0;
  }
  return clamp_controls(std::move(u), cfg);
}

}  // namespace

MpcSolution solve_mpc(const MatX2& reference, const KinematicState& s_init,
                      const MpcConfig& cfg, const Vec2& u_prev) {
  const int T = static_cast<int>(reference.rows());
  if (T < 1) throw std::runtime_error("solve_mpc: empty reference");

  const ControlSequence zero = ControlSequence::Zero(T, 2);
  const double zero_cost = evaluate_cost(reference, s_init, zero, u_prev, cfg);
  ControlSequence u = controls_from_reference(reference, s_init, cfg);
  double cost = evaluate_cost(reference, s_init, u, u_prev, cfg);
  if (zero_cost < cost) {
    u = zero;
    cost = zero_cost;
  }

  double step = cfg.step_size;
  int iterations = 0;
  for (int it = 0; it < cfg.iterations; ++it) {
    const ControlSequence grad = cost_gradient(reference, s_init, u, u_prev, cfg);
    bool improved = false;
    double trial_step = step;
    ControlSequence u_best = u;
    double cost_best = cost;
    while (trial_step >= 1e-14) {
      const ControlSequence u_trial = clamp_controls(u - trial_step * grad, cfg);
      const double cost_trial = evaluate_cost(reference, s_init, u_trial, u_prev, cfg);
      if (!std::isfinite(cost_trial)) {
        throw std::runtime_error(
            "solve_mpc: non-finite cost during descent (step size too large)");
      }
      if (cost_trial < cost_best) {
        u_best = u_trial;
        cost_best = cost_trial;
        improved = true;
        break;
      }
      trial_step *= 0.5;
    }
    ++iterations;
    if (!improved) break;
    const double rel = (cost - cost_best) / std::max(cost, 1e-300);
    u = std::move(u_best);
    cost = cost_best;
    step = std::min(trial_step * 2.0, 1.0);
    if (rel < 1e-8) break;
  }

  MpcSolution sol;
  sol.controls = u;
  sol.states = rollout(s_init, u, cfg);
  sol.cost = evaluate_cost(reference, s_init, u, u_prev, cfg, &sol.tracking_cost);
  sol.iterations_used = iterations;
  return sol;
}

}  // namespace lanefuse
