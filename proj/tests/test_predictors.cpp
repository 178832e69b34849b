#include <doctest.h>

#include "lanefuse/kd.hpp"
#include "lanefuse/scene.hpp"
#include "lanefuse/synthetic.hpp"

#include <cmath>
#include <memory>

using namespace lanefuse;

namespace {

AgentHistory history_from(std::initializer_list<std::pair<double, double>> pts,
                          std::int64_t id = 1) {
  AgentHistory h;
  h.agent_id = id;
  double t = 0.0;
  for (const auto& [x, y] : pts) {
    h.points.push_back(TrackPoint{x, y, t});
    t += kFrameDt;
  }
  return h;
}

std::shared_ptr<const SceneMap> straight_map(double width = 6.0) {
  MatX2 pts(2, 2);
  pts << -20.0, 0.0, 200.0, 0.0;
  return std::make_shared<const SceneMap>(
      make_scene_map("straight", {make_centerline(0, pts, width)}, 0.5));
}

std::shared_ptr<const SceneMap> t_map() {
  MatX2 approach(2, 2), straight(2, 2), turn(3, 2);
  approach << -60.0, 0.0, 0.0, 0.0;
  straight << 0.0, 0.0, 80.0, 0.0;
  turn << 0.0, 0.0, 8.0, 3.0, 12.0, 60.0;
  return std::make_shared<const SceneMap>(make_scene_map(
      "tmap",
      {make_centerline(0, approach, 6.0), make_centerline(1, straight, 6.0),
       make_centerline(2, turn, 6.0)},
      0.5));
}

ScenarioState state_on(std::shared_ptr<const SceneMap> map, AgentHistory ego,
                       std::vector<AgentHistory> others = {}) {
  ScenarioState st;
  st.ego = std::move(ego);
  st.others = std::move(others);
  st.map = std::move(map);
  st.scene_id = "test";
  st.category = "test";
  return st;
}

AgentHistory straight_history(double x_last, double step, double y = 0.0,
                              std::int64_t id = 1) {
  AgentHistory h;
  h.agent_id = id;
  for (int i = 0; i < kObsLen; ++i) {
    h.points.push_back(
        TrackPoint{x_last - step * (kObsLen - 1 - i), y, i * kFrameDt});
  }
  return h;
}

}  // namespace

TEST_CASE("predict_cv extrapolates the last step velocity") {
  const KdVariancePrior prior = KdVariancePrior::Default();
  SUBCASE("stationary history stays put") {
    const auto traj =
        predict_cv(history_from({{3, 0}, {3, 0}, {3, 0}, {3, 0}, {3, 0}}), prior);
    for (int j = 0; j < traj.steps(); ++j) {
      CHECK(traj.means(j, 0) == doctest::Approx(3.0));
      CHECK(traj.means(j, 1) == doctest::Approx(0.0));
    }
  }
  SUBCASE("+2 m per step in x") {
    const auto traj = predict_cv(straight_history(8.0, 2.0), prior);
    for (int j = 0; j < traj.steps(); ++j) {
      CHECK(traj.means(j, 0) == doctest::Approx(8.0 + 2.0 * (j + 1)));
    }
  }
  SUBCASE("diagonal motion") {
    const auto traj = predict_cv(
        history_from({{0, 0}, {1, 1}, {2, 2}, {3, 3}, {4, 4}}), prior);
    for (int j = 0; j < traj.steps(); ++j) {
      CHECK(traj.means(j, 0) == doctest::Approx(4.0 + (j + 1)));
      CHECK(traj.means(j, 1) == doctest::Approx(4.0 + (j + 1)));
    }
  }
  SUBCASE("variances positive") {
    const auto traj = predict_cv(straight_history(0.0, 1.0), prior);
    CHECK((traj.variances.array() > 0.0).all());
  }
}

TEST_CASE("predict_linear_kalman") {
  SUBCASE("noiseless linear track matches constant velocity within 1e-6") {
    const AgentHistory h = straight_history(10.0, 1.5);
    const auto kalman = predict_linear_kalman(h);
    const auto cv = predict_cv(h, KdVariancePrior::Default());
    CHECK((kalman.means - cv.means).cwiseAbs().maxCoeff() < 1e-6);
  }
  SUBCASE("single repeated point gives constant means") {
    const auto traj =
        predict_linear_kalman(history_from({{2, 1}, {2, 1}, {2, 1}, {2, 1}, {2, 1}}));
    for (int j = 0; j < traj.steps(); ++j) {
      CHECK(traj.means(j, 0) == doctest::Approx(2.0));
      CHECK(traj.means(j, 1) == doctest::Approx(1.0));
    }
  }
  SUBCASE("open-loop covariance grows with the horizon") {
    const auto traj = predict_linear_kalman(straight_history(0.0, 1.0));
    for (int j = 1; j < traj.steps(); ++j) {
      CHECK(traj.variances(j, 0) > traj.variances(j - 1, 0));
      CHECK(traj.variances(j, 1) > traj.variances(j - 1, 1));
    }
  }
}

TEST_CASE("predict_kd1 follows the lane") {
  const KdVariancePrior prior = KdVariancePrior::Default();
  SUBCASE("on the centerline at 4 m/s: 2 m spacing") {
    const auto st = state_on(straight_map(), straight_history(10.0, 2.0));
    const auto traj = predict_kd1(st, prior);
    for (int j = 0; j < traj.steps(); ++j) {
      CHECK(traj.means(j, 0) == doctest::Approx(10.0 + 2.0 * (j + 1)));
      CHECK(traj.means(j, 1) == doctest::Approx(0.0).epsilon(1e-9));
    }
  }
  SUBCASE("lateral offset decays to zero over two steps") {
    const auto st = state_on(straight_map(), straight_history(10.0, 2.0, 1.0));
    const auto traj = predict_kd1(st, prior);
    CHECK(traj.means(0, 1) == doctest::Approx(0.5));   // half after step 1
    CHECK(traj.means(1, 1) == doctest::Approx(0.0));   // on the lane after 2
    CHECK(traj.means(5, 1) == doctest::Approx(0.0));
  }
  SUBCASE("every mean lies on a drivable cell") {
    const auto map = straight_map();
    const auto st = state_on(map, straight_history(10.0, 2.0, 0.8));
    const auto traj = predict_kd1(st, prior);
    for (int j = 0; j < traj.steps(); ++j) {
      CHECK(map->raster.drivable(traj.means.row(j).transpose()));
    }
  }
  SUBCASE("agrees with predict_cv along a straight lane at constant speed") {
    const AgentHistory h = straight_history(10.0, 2.0);
    const auto st = state_on(straight_map(), h);
    const auto kd = predict_kd1(st, prior);
    const auto cv = predict_cv(h, prior);
    CHECK((kd.means - cv.means).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("predict_kd2 tracks a leader") {
  const KdVariancePrior prior = KdVariancePrior::Default();
  const KdParams params;  // k_gain 0.5, d_desired 8, v_max 20

  SUBCASE("no other agents: identical to predict_kd1") {
    const auto st = state_on(straight_map(), straight_history(10.0, 2.0));
    const auto kd1 = predict_kd1(st, prior, params);
    const auto kd2 = predict_kd2(st, prior, params);
    CHECK((kd1.means - kd2.means).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("stopped leader 6 m ahead: speeds decrease monotonically") {
    const AgentHistory ego = straight_history(10.0, 2.0);          // 4 m/s
    const AgentHistory leader = straight_history(16.0, 0.0, 0.0, 2);  // stopped
    const auto st = state_on(straight_map(), ego, {leader});
    const auto traj = predict_kd2(st, prior, params);

    // Hand-iterated oracle of the stated update rule.
    double v = 4.0, s_ego = 30.0, s_lead = 36.0;  // arcs from x=-20
    double prev_v = v;
    for (int j = 0; j < traj.steps(); ++j) {
      const double gap = s_lead - s_ego;
      v = std::clamp(v + params.k_gain * (gap - params.d_desired) * kFrameDt, 0.0,
                     params.v_max);
      s_ego += v * kFrameDt;
      CHECK(traj.means(j, 0) == doctest::Approx(s_ego - 20.0).epsilon(1e-9));
      CHECK(v <= prev_v);  // monotone decrease toward the stopped leader
      prev_v = v;
    }
  }

  SUBCASE("leader far ahead: speed saturates at v_max") {
    const AgentHistory ego = straight_history(10.0, 2.0);
    const AgentHistory leader = straight_history(110.0, 0.5, 0.0, 2);
    const auto st = state_on(straight_map(), ego, {leader});
    const auto traj = predict_kd2(st, prior, params);
    // After the first step the speed is clamped at v_max.
    const double step1 = traj.means(1, 0) - traj.means(0, 0);
    CHECK(step1 == doctest::Approx(params.v_max * kFrameDt));
  }
}

TEST_CASE("enumerate_lane_branches") {
  const KdVariancePrior prior = KdVariancePrior::Default();
  SUBCASE("straight road has a single mode") {
    const auto st = state_on(straight_map(), straight_history(10.0, 2.0));
    const auto modes = enumerate_lane_branches(st, 2, prior);
    CHECK(modes.size() == 1);
  }
  SUBCASE("junction with two successors yields two distinct modes") {
    const auto st = state_on(t_map(), straight_history(-10.0, 3.0));
    const auto modes = enumerate_lane_branches(st, 2, prior);
    REQUIRE(modes.size() == 2);
    CHECK((modes[0].means - modes[1].means).cwiseAbs().maxCoeff() > 0.5);
  }
  SUBCASE("max_modes 1 returns exactly the kd1 output") {
    const auto st = state_on(t_map(), straight_history(-10.0, 3.0));
    const auto modes = enumerate_lane_branches(st, 1, prior);
    const auto kd1 = predict_kd1(st, prior);
    REQUIRE(modes.size() == 1);
    CHECK((modes[0].means - kd1.means).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("the straight continuation ranks first at the junction") {
    const auto st = state_on(t_map(), straight_history(-10.0, 3.0));
    const auto modes = enumerate_lane_branches(st, 2, prior);
    // Mode 0 goes straight (y stays near 0), mode 1 turns off.
    CHECK(std::abs(modes[0].means(modes[0].steps() - 1, 1)) < 0.5);
  }
}

TEST_CASE("fit_kd_variance") {
  SUBCASE("needs at least two scenarios") {
    CHECK_THROWS(fit_kd_variance({}, [](const ScenarioState&, const KdVariancePrior& p) {
      return GaussianTrajectory::Zero(p.steps());
    }));
  }

  SUBCASE("perfect predictions floor at 1e-4") {
    std::vector<ScenarioState> states;
    for (int k = 0; k < 3; ++k) {
      auto st = state_on(straight_map(), straight_history(10.0 + k, 2.0));
      MatX2 gt(kPredLen, 2);
      for (int j = 0; j < kPredLen; ++j) {
        gt(j, 0) = 10.0 + k + 2.0 * (j + 1);
        gt(j, 1) = 0.0;
      }
      st.ground_truth = gt;
      states.push_back(std::move(st));
    }
    const auto prior = fit_kd_variance(states, [](const ScenarioState& s,
                                                  const KdVariancePrior& p) {
      return predict_kd1(s, p);
    });
    CHECK((prior.table.array() == kVarianceFloor).all());
  }

  SUBCASE("symmetric +-1 m errors give unit variance (population)") {
    // Predictor pinned to zero; ground truths at +1 and -1 on x per step.
    std::vector<ScenarioState> states(2);
    for (int k = 0; k < 2; ++k) {
      states[static_cast<std::size_t>(k)] =
          state_on(straight_map(), straight_history(10.0, 0.0));
      MatX2 gt = MatX2::Zero(kPredLen, 2);
      gt.col(0).array() = k == 0 ? 1.0 : -1.0;
      states[static_cast<std::size_t>(k)].ground_truth = gt;
    }
    const auto prior = fit_kd_variance(states, [](const ScenarioState&,
                                                  const KdVariancePrior& p) {
      return GaussianTrajectory::Zero(p.steps());
    });
    for (int j = 0; j < prior.steps(); ++j) {
      CHECK(prior.table(j, 0) == doctest::Approx(1.0));
    }
  }

  SUBCASE("isotonic projection keeps variances non-decreasing") {
    VecX v(6);
    v << 4.0, 1.0, 1.0, 5.0, 2.0, 3.0;
    const VecX iso = isotonic_non_decreasing(v);
    for (int i = 1; i < iso.size(); ++i) CHECK(iso(i) >= iso(i - 1));
    // Pool-adjacent-violators on the leading block: mean of 4,1,1 = 2.
    CHECK(iso(0) == doctest::Approx(2.0));
  }
}

TEST_CASE("ego_speed averages the last two steps") {
  CHECK(ego_speed(straight_history(10.0, 2.0)) == doctest::Approx(4.0));
  CHECK(ego_speed(history_from({{0, 0}, {1, 0}, {2, 0}, {3, 0}, {5, 0}})) ==
        doctest::Approx((1.0 + 2.0) / (2.0 * kFrameDt)));
}
