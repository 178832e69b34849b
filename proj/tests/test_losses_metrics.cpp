#include <doctest.h>

#include "lanefuse/metrics.hpp"

#include <cmath>
#include <random>

using namespace lanefuse;

namespace {

double u01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

GaussianTrajectory traj_with_offset(const MatX2& gt, double dx, double dy,
                                    double var = 1.0) {
  GaussianTrajectory t;
  t.means = gt;
  t.means.col(0).array() += dx;
  t.means.col(1).array() += dy;
  t.variances = MatX2::Constant(gt.rows(), 2, var);
  return t;
}

MatX2 straight_gt(int steps, double step_len) {
  MatX2 gt(steps, 2);
  for (int j = 0; j < steps; ++j) {
    gt(j, 0) = step_len * (j + 1);
    gt(j, 1) = 0.0;
  }
  return gt;
}

}  // namespace

TEST_CASE("gaussian_nll values") {
  const int steps = kPredLen;
  const MatX2 gt = straight_gt(steps, 1.0);
  SUBCASE("exact means, unit variances") {
    GaussianTrajectory t = traj_with_offset(gt, 0.0, 0.0, 1.0);
    const double nll = gaussian_nll(t, gt);
    CHECK(nll == doctest::Approx(steps * 2 * 0.5 * std::log(2.0 * M_PI)));
  }
  SUBCASE("one step, one axis analytic value") {
    GaussianTrajectory t;
    t.means = MatX2::Zero(1, 2);
    t.means(0, 0) = 1.0;  // unit error on x only
    t.variances = MatX2::Ones(1, 2);
    MatX2 g = MatX2::Zero(1, 2);
    const double nll = gaussian_nll(t, g);
    CHECK(nll == doctest::Approx(0.5 * (std::log(2.0 * M_PI) + 1.0) +
                                 0.5 * std::log(2.0 * M_PI)));
  }
  SUBCASE("gradients match central differences") {
    std::mt19937_64 rng(31);
    GaussianTrajectory t;
    t.means.resize(3, 2);
    t.variances.resize(3, 2);
    MatX2 g(3, 2);
    for (int j = 0; j < 3; ++j) {
      for (int a = 0; a < 2; ++a) {
        t.means(j, a) = 2.0 * u01(rng) - 1.0;
        t.variances(j, a) = 0.3 + 2.0 * u01(rng);
        g(j, a) = 2.0 * u01(rng) - 1.0;
      }
    }
    NllGrad grad;
    gaussian_nll(t, g, &grad);
    constexpr double h = 1e-6;
    for (int j = 0; j < 3; ++j) {
      for (int a = 0; a < 2; ++a) {
        GaussianTrajectory tp = t;
        tp.means(j, a) += h;
        GaussianTrajectory tm = t;
        tm.means(j, a) -= h;
        const double fd_mean = (gaussian_nll(tp, g) - gaussian_nll(tm, g)) / (2.0 * h);
        CHECK(grad.d_means(j, a) == doctest::Approx(fd_mean).epsilon(1e-6));

        tp = t;
        tp.variances(j, a) += h;
        tm = t;
        tm.variances(j, a) -= h;
        const double fd_var = (gaussian_nll(tp, g) - gaussian_nll(tm, g)) / (2.0 * h);
        CHECK(grad.d_variances(j, a) == doctest::Approx(fd_var).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("wta_loss") {
  const MatX2 gt = straight_gt(kPredLen, 1.0);
  SUBCASE("single mode equals the plain likelihood bit for bit") {
    GaussianTrajectory t = traj_with_offset(gt, 0.3, -0.2, 1.4);
    MultiModalPrediction p = MultiModalPrediction::Uniform({t});
    const WtaResult r = wta_loss(p, gt);
    CHECK(r.loss == gaussian_nll(t, gt));
    CHECK(r.selected_mode == 0);
  }
  SUBCASE("mode on the ground truth wins; the other gets zero gradients") {
    MultiModalPrediction p = MultiModalPrediction::Uniform(
        {traj_with_offset(gt, 3.0, 1.0), traj_with_offset(gt, 0.0, 0.0)});
    const WtaResult r = wta_loss(p, gt, true);
    CHECK(r.selected_mode == 1);
    CHECK(r.mode_grads[0].d_means.norm() == 0.0);
    CHECK(r.mode_grads[0].d_variances.norm() == 0.0);
    CHECK(r.mode_grads[1].d_means.norm() == 0.0);  // means exactly on gt
    CHECK(r.mode_grads[1].d_variances.norm() > 0.0);
  }
  SUBCASE("equidistant modes resolve to index 0") {
    MultiModalPrediction p = MultiModalPrediction::Uniform(
        {traj_with_offset(gt, 0.0, 2.0), traj_with_offset(gt, 0.0, -2.0)});
    CHECK(closest_mode(p, gt) == 0);
    CHECK(wta_loss(p, gt).selected_mode == 0);
  }
}

TEST_CASE("metric_ade_fde") {
  const MatX2 gt = straight_gt(kPredLen, 1.0);
  SUBCASE("exact prediction scores zero") {
    const auto [ade, fde] =
        metric_ade_fde(MultiModalPrediction::Uniform({traj_with_offset(gt, 0, 0)}), gt);
    CHECK(ade == 0.0);
    CHECK(fde == 0.0);
  }
  SUBCASE("constant 1 m offset") {
    const auto [ade, fde] =
        metric_ade_fde(MultiModalPrediction::Uniform({traj_with_offset(gt, 0, 1.0)}), gt);
    CHECK(ade == doctest::Approx(1.0));
    CHECK(fde == doctest::Approx(1.0));
  }
  SUBCASE("offsets 1..10 give ADE 5.5 and FDE 10 exactly") {
    GaussianTrajectory t;
    t.means = gt;
    t.variances = MatX2::Ones(kPredLen, 2);
    for (int j = 0; j < kPredLen; ++j) t.means(j, 1) = j + 1.0;  // offset j+1 meters
    const auto [ade, fde] = metric_ade_fde(MultiModalPrediction::Uniform({t}), gt);
    CHECK(std::abs(ade - 5.5) <= 1e-9);
    CHECK(std::abs(fde - 10.0) <= 1e-9);
  }
  SUBCASE("the closest mode is scored") {
    MultiModalPrediction p = MultiModalPrediction::Uniform(
        {traj_with_offset(gt, 5.0, 0.0), traj_with_offset(gt, 1.0, 0.0)});
    const auto [ade, fde] = metric_ade_fde(p, gt);
    CHECK(ade == doctest::Approx(1.0));
  }
}

TEST_CASE("metric_rv") {
  MatX2 pts(2, 2);
  pts << 0.0, 0.0, 40.0, 0.0;
  const SceneMap map = make_scene_map("rv", {make_centerline(0, pts, 4.0)}, 0.5);
  const MatX2 gt = straight_gt(kPredLen, 1.0);

  SUBCASE("all points on the road") {
    CHECK(metric_rv(MultiModalPrediction::Uniform({traj_with_offset(gt, 0, 0)}), map) ==
          0.0);
  }
  SUBCASE("one of ten points off-road scores 10") {
    GaussianTrajectory t = traj_with_offset(gt, 0, 0);
    t.means(4, 1) = 50.0;  // far off the band
    const double rv = metric_rv(MultiModalPrediction::Uniform({t}), map);
    CHECK(std::abs(rv - 10.0) <= 1e-9);
  }
  SUBCASE("two equiprobable modes with RV 0 and 20 average to 10") {
    GaussianTrajectory off = traj_with_offset(gt, 0, 0);
    off.means(2, 1) = 50.0;
    off.means(7, 1) = -50.0;
    const double rv = metric_rv(
        MultiModalPrediction::Uniform({traj_with_offset(gt, 0, 0), off}), map);
    CHECK(std::abs(rv - 10.0) <= 1e-9);
  }
}

TEST_CASE("metric_ct") {
  const Vec2 anchor(0.0, 0.0);
  SUBCASE("same path under a different speed profile scores zero") {
    // Ground truth at 1 m per step; prediction covers the same ray twice as fast.
    const MatX2 gt = straight_gt(kPredLen, 1.0);
    GaussianTrajectory fast;
    fast.means = straight_gt(kPredLen, 2.0);
    fast.variances = MatX2::Ones(kPredLen, 2);
    CHECK(metric_ct(fast, gt, anchor) <= 1e-9);
  }
  SUBCASE("short prediction along the same ray extrapolates to zero error") {
    const MatX2 gt = straight_gt(kPredLen, 1.0);  // length 10
    GaussianTrajectory slow;
    slow.means = straight_gt(kPredLen, 0.6);  // length 6, same direction
    slow.variances = MatX2::Ones(kPredLen, 2);
    CHECK(metric_ct(slow, gt, anchor) <= 1e-9);
  }
  SUBCASE("equal-length ray at angle theta gives the chord length") {
    const double theta = 0.35;
    const MatX2 gt = straight_gt(kPredLen, 1.0);  // length 10 along +x
    GaussianTrajectory rot;
    rot.means.resize(kPredLen, 2);
    for (int j = 0; j < kPredLen; ++j) {
      rot.means(j, 0) = (j + 1) * std::cos(theta);
      rot.means(j, 1) = (j + 1) * std::sin(theta);
    }
    rot.variances = MatX2::Ones(kPredLen, 2);
    const double expected = 2.0 * 10.0 * std::sin(theta / 2.0);
    CHECK(metric_ct(rot, gt, anchor) == doctest::Approx(expected).epsilon(1e-9));
  }
  SUBCASE("monotone retiming of a curved path still scores zero") {
    // Quarter-circle ground truth; prediction visits the same points with a
    // very different pacing (dense early, sparse late).
    const double r = 12.0;
    auto arc_point = [&](double frac) {
      const double th = frac * M_PI / 2.0;
      return Vec2(r * std::sin(th), r * (1.0 - std::cos(th)));
    };
    MatX2 gt(kPredLen, 2);
    GaussianTrajectory pred;
    pred.means.resize(kPredLen, 2);
    pred.variances = MatX2::Ones(kPredLen, 2);
    for (int j = 0; j < kPredLen; ++j) {
      const double f = (j + 1.0) / kPredLen;
      gt.row(j) = arc_point(f).transpose();
      pred.means.row(j) = arc_point(std::pow(f, 1.7)).transpose();
    }
    // The final point coincides, so total arc lengths agree; the polyline
    // chords differ slightly, hence the loose-but-small tolerance.
    CHECK(metric_ct(pred, gt, anchor) <= 0.02);
  }
}

TEST_CASE("aggregate_metrics weighs categories equally") {
  std::vector<std::pair<std::string, SampleMetrics>> rows;
  // Category a: two samples with ADE 1; category b: one sample with ADE 3.
  rows.push_back({"a", {1.0, 2.0, 0.0, 0.5}});
  rows.push_back({"a", {1.0, 2.0, 0.0, 0.5}});
  rows.push_back({"b", {3.0, 6.0, 10.0, 1.5}});
  const MetricsReport r = aggregate_metrics(rows);
  CHECK(r.ade == doctest::Approx(2.0));
  CHECK(r.fde == doctest::Approx(4.0));
  CHECK(r.rv == doctest::Approx(5.0));
  CHECK(r.ct == doctest::Approx(1.0));
  CHECK(r.total_samples == 3);
  CHECK_THROWS(aggregate_metrics({}));
}
