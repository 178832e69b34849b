#include <doctest.h>

#include "lanefuse/mpc.hpp"

#include <cmath>
#include <random>

using namespace lanefuse;

namespace {

double u01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

AgentHistory history_along_x(double speed) {
  AgentHistory h;
  h.agent_id = 1;
  for (int i = 0; i < kObsLen; ++i) {
    h.points.push_back(TrackPoint{speed * kFrameDt * i, 0.0, i * kFrameDt});
  }
  return h;
}

/// Random in-bound control sequence whose rollout keeps a healthy speed, so
/// the reference is exactly reproducible.
ControlSequence random_feasible_controls(std::mt19937_64& rng, const MpcConfig& cfg,
                                         int steps) {
  ControlSequence u(steps, 2);
  for (int k = 0; k < steps; ++k) {
    u(k, 0) = -1.0 + 2.0 * u01(rng);   // gentle accelerations
    u(k, 1) = 0.4 * (u01(rng) - 0.5);  // gentle steering
  }
  return u;
}

}  // namespace

TEST_CASE("bicycle_step") {
  SUBCASE("at rest with no input the state is unchanged") {
    const KinematicState s{1.0, 2.0, 0.3, 0.0};
    const KinematicState n = bicycle_step(s, Vec2(0.0, 0.0), 0.5, 2.7);
    CHECK(n.x == s.x);
    CHECK(n.y == s.y);
    CHECK(n.phi == doctest::Approx(s.phi));
    CHECK(n.v == 0.0);
  }
  SUBCASE("straight line motion") {
    const KinematicState s{0.0, 0.0, 0.0, 10.0};
    const KinematicState n = bicycle_step(s, Vec2(0.0, 0.0), 0.5, 2.7);
    CHECK(n.x == doctest::Approx(5.0));
    CHECK(n.y == doctest::Approx(0.0));
    CHECK(n.phi == doctest::Approx(0.0));
    CHECK(n.v == doctest::Approx(10.0));
  }
  SUBCASE("heading update follows the discrete rule") {
    const KinematicState s{0.0, 0.0, 0.0, 5.0};
    const KinematicState n = bicycle_step(s, Vec2(0.0, 0.1), 0.5, 2.7);
    CHECK(n.phi == doctest::Approx(5.0 / 2.7 * std::tan(0.1) * 0.5));
  }
  SUBCASE("speed clamps at zero") {
    const KinematicState s{0.0, 0.0, 0.0, 1.0};
    const KinematicState n = bicycle_step(s, Vec2(-6.0, 0.0), 0.5, 2.7);
    CHECK(n.v == 0.0);
  }
}

TEST_CASE("rollout") {
  MpcConfig cfg;
  SUBCASE("zero controls at zero speed stay at the initial state") {
    const KinematicState s{3.0, -1.0, 0.7, 0.0};
    const auto states = rollout(s, ControlSequence::Zero(kPredLen, 2), cfg);
    for (const auto& st : states) {
      CHECK(st.x == s.x);
      CHECK(st.y == s.y);
      CHECK(st.v == 0.0);
    }
  }
  SUBCASE("constant acceleration on a straight: discrete sums") {
    const KinematicState s{0.0, 0.0, 0.0, 2.0};
    ControlSequence u = ControlSequence::Zero(5, 2);
    u.col(0).setConstant(1.0);
    const auto states = rollout(s, u, cfg);
    // v_k = 2 + k (after k controls); x advances with the pre-update speed.
    double x = 0.0, v = 2.0;
    for (int k = 0; k < 5; ++k) {
      x += v * cfg.dt;
      v += 1.0 * cfg.dt;
      CHECK(states[static_cast<std::size_t>(k)].x == doctest::Approx(x));
      CHECK(states[static_cast<std::size_t>(k)].v == doctest::Approx(v));
    }
  }
}

TEST_CASE("init_state_from_history") {
  SUBCASE("along +x at 2 m per frame") {
    const KinematicState s = init_state_from_history(history_along_x(4.0));
    CHECK(s.phi == doctest::Approx(0.0));
    CHECK(s.v == doctest::Approx(4.0));
  }
  SUBCASE("repeated last point is degenerate") {
    AgentHistory h = history_along_x(4.0);
    h.points.back() = h.points[h.points.size() - 2];
    const KinematicState s = init_state_from_history(h);
    CHECK(s.v == 0.0);
    CHECK(s.phi == 0.0);
  }
  SUBCASE("along +y") {
    AgentHistory h;
    for (int i = 0; i < kObsLen; ++i) {
      h.points.push_back(TrackPoint{0.0, 2.0 * i, i * kFrameDt});
    }
    const KinematicState s = init_state_from_history(h);
    CHECK(s.phi == doctest::Approx(M_PI / 2.0));
  }
}

TEST_CASE("solve_mpc") {
  MpcConfig cfg;
  std::mt19937_64 rng(77);

  SUBCASE("feasible reference with lambda 0 is tracked to ~zero cost") {
    cfg.lambda = 0.0;
    for (int rep = 0; rep < 5; ++rep) {
      const KinematicState s0{0.0, 0.0, 0.2 * (u01(rng) - 0.5), 6.0 + 4.0 * u01(rng)};
      const ControlSequence u_true = random_feasible_controls(rng, cfg, kPredLen);
      const auto states = rollout(s0, u_true, cfg);
      MatX2 ref(kPredLen, 2);
      for (int j = 0; j < kPredLen; ++j) {
        ref(j, 0) = states[static_cast<std::size_t>(j)].x;
        ref(j, 1) = states[static_cast<std::size_t>(j)].y;
      }
      const MpcSolution sol = solve_mpc(ref, s0, cfg);
      CHECK(sol.tracking_cost <= 1e-6);
    }
  }

  SUBCASE("stationary reference at zero speed costs ~nothing") {
    const KinematicState s0{5.0, 5.0, 0.3, 0.0};
    MatX2 ref(kPredLen, 2);
    ref.col(0).setConstant(5.0);
    ref.col(1).setConstant(5.0);
    const MpcSolution sol = solve_mpc(ref, s0, cfg);
    CHECK(sol.cost <= 1e-9);
  }

  SUBCASE("huge smoothness weight flattens the control sequence") {
    MpcConfig heavy = cfg;
    heavy.lambda = 1e6;
    heavy.iterations = 400;
    const KinematicState s0{0.0, 0.0, 0.0, 8.0};
    MatX2 ref(kPredLen, 2);
    for (int j = 0; j < kPredLen; ++j) {
      ref(j, 0) = 8.0 * kFrameDt * (j + 1) * 0.9;  // mild slowdown request
      ref(j, 1) = 0.1 * j;
    }
    const Vec2 u_prev(0.0, 0.0);
    const MpcSolution sol = solve_mpc(ref, s0, heavy, u_prev);
    double max_change = (sol.controls.row(0).transpose() - u_prev).cwiseAbs().maxCoeff();
    for (int k = 1; k < sol.controls.rows(); ++k) {
      max_change = std::max(max_change, (sol.controls.row(k) - sol.controls.row(k - 1))
                                            .cwiseAbs()
                                            .maxCoeff());
    }
    CHECK(max_change <= 1e-3);
  }

  SUBCASE("feasibility and monotone improvement on random references") {
    for (int rep = 0; rep < 20; ++rep) {
      const KinematicState s0{0.0, 0.0, 0.4 * (u01(rng) - 0.5), 3.0 + 6.0 * u01(rng)};
      MatX2 ref(kPredLen, 2);
      double x = 0.0, y = 0.0;
      for (int j = 0; j < kPredLen; ++j) {
        x += (2.0 + 3.0 * u01(rng)) * kFrameDt;
        y += 1.2 * (u01(rng) - 0.5) * kFrameDt;
        ref(j, 0) = x;
        ref(j, 1) = y;
      }
      const MpcSolution sol = solve_mpc(ref, s0, cfg);

      // Bounds hold exactly.
      for (int k = 0; k < sol.controls.rows(); ++k) {
        CHECK(sol.controls(k, 0) >= cfg.u_min.x());
        CHECK(sol.controls(k, 0) <= cfg.u_max.x());
        CHECK(sol.controls(k, 1) >= cfg.u_min.y());
        CHECK(sol.controls(k, 1) <= cfg.u_max.y());
      }
      // Returned states reproduce the recursion exactly.
      const auto again = rollout(s0, sol.controls, cfg);
      for (std::size_t k = 0; k < again.size(); ++k) {
        CHECK(std::abs(again[k].x - sol.states[k].x) <= 1e-9);
        CHECK(std::abs(again[k].y - sol.states[k].y) <= 1e-9);
        CHECK(std::abs(again[k].v - sol.states[k].v) <= 1e-9);
      }
      // Never worse than the zero-control warm start.
      double zero_cost = 0.0;
      KinematicState s = s0;
      Vec2 prev_u = Vec2::Zero();
      for (int j = 0; j < kPredLen; ++j) {
        s = bicycle_step(s, Vec2::Zero(), cfg.dt, cfg.wheelbase);
        zero_cost += (s.pos() - ref.row(j).transpose()).squaredNorm();
        (void)prev_u;
      }
      CHECK(sol.cost <= zero_cost + 1e-12);
    }
  }

  SUBCASE("small reference perturbations barely change the cost") {
    const KinematicState s0{0.0, 0.0, 0.0, 6.0};
    MatX2 ref(kPredLen, 2);
    for (int j = 0; j < kPredLen; ++j) {
      ref(j, 0) = 6.0 * kFrameDt * (j + 1);
      ref(j, 1) = 0.05 * j * j * kFrameDt;
    }
    const MpcSolution base = solve_mpc(ref, s0, cfg);
    MatX2 ref2 = ref;
    ref2.array() += 1e-6;
    const MpcSolution perturbed = solve_mpc(ref2, s0, cfg);
    CHECK(std::abs(base.cost - perturbed.cost) <= 1e-3);
  }

  SUBCASE("identical inputs give identical outputs") {
    const KinematicState s0{0.0, 0.0, 0.1, 5.0};
    MatX2 ref(kPredLen, 2);
    for (int j = 0; j < kPredLen; ++j) {
      ref(j, 0) = 5.0 * kFrameDt * (j + 1);
      ref(j, 1) = 0.2 * j;
    }
    const MpcSolution a = solve_mpc(ref, s0, cfg);
    const MpcSolution b = solve_mpc(ref, s0, cfg);
    CHECK((a.controls - b.controls).norm() == 0.0);
    CHECK(a.cost == b.cost);
  }
}
