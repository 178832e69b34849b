#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace lanefuse {

using Vec2 = Eigen::Vector2d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;
// Time-major storage: one row per step, columns are (x, y).
using MatX2 = Eigen::Matrix<double, Eigen::Dynamic, 2>;

// Frame interval of all tracks and predictions, seconds.
inline constexpr double kFrameDt = 0.5;
// Observed history length (frames).
inline constexpr int kObsLen = 5;
// Prediction horizon (frames).
inline constexpr int kPredLen = 10;

struct TrackPoint {
  double x = 0.0;  // meters, world frame
  double y = 0.0;  // meters, world frame
  double t = 0.0;  // seconds
  Vec2 pos() const { return Vec2(x, y); }
};

/// Observed history of one agent: a fixed-length window of world-frame
/// positions spaced kFrameDt apart, the last point being "now".
struct AgentHistory {
  std::int64_t agent_id = 0;
  std::vector<TrackPoint> points;

  int size() const { return static_cast<int>(points.size()); }
  const TrackPoint& back() const { return points.back(); }
  Vec2 position(int i) const { return points[static_cast<std::size_t>(i)].pos(); }
  MatX2 positions() const {
    MatX2 out(size(), 2);
    for (int i = 0; i < size(); ++i) out.row(i) = position(i).transpose();
    return out;
  }
};

/// Per-step 2D Gaussian with diagonal covariance. Rows are horizon steps.
struct GaussianTrajectory {
  MatX2 means;      // meters
  MatX2 variances;  // meters^2, strictly positive

  int steps() const { return static_cast<int>(means.rows()); }
  static GaussianTrajectory Zero(int steps) {
    GaussianTrajectory g;
    g.means = MatX2::Zero(steps, 2);
    g.variances = MatX2::Ones(steps, 2);
    return g;
  }
};

struct SceneMap;  // scene.hpp

/// Everything the predictors see for one anchor frame: the ego history,
/// the surrounding agents, the map, and (when known) the future positions.
struct ScenarioState {
  AgentHistory ego;
  std::vector<AgentHistory> others;
  std::shared_ptr<const SceneMap> map;
  std::optional<MatX2> ground_truth;  // kPredLen rows when present

  std::string scene_id;
  std::string category;  // map template / scene family, used for reporting
  std::int64_t anchor_frame = 0;

  /// Stable identifier used for seeding and dataset splits.
  std::string uid() const {
    return scene_id + "/a" + std::to_string(ego.agent_id) + "/f" +
           std::to_string(anchor_frame);
  }
};

/// Wrap an angle to (-pi, pi].
double wrap_angle(double a);

/// 2D rotation by `angle` applied to each row of a time-major matrix.
MatX2 rotate_rows(const MatX2& rows, double angle);

/// Marginal variances of a diagonal covariance after rotating the frame by
/// `angle`; off-diagonal terms are dropped.
MatX2 rotate_diag_variances(const MatX2& variances, double angle);

/// SplitMix64; used wherever a stable, platform-independent hash of an
/// identifier is needed (dataset splits, per-scene seed derivation).
std::uint64_t stable_hash(std::uint64_t x);
std::uint64_t stable_hash(const std::string& s);

}  // namespace lanefuse
