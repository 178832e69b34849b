#include "lanefuse/kd.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lanefuse {

KdVariancePrior KdVariancePrior::Default(int steps) {
  KdVariancePrior p;
  p.table.resize(steps, 2);
  for (int j = 0; j < steps; ++j) {
    p.table(j, 0) = 0.25 * (j + 1);
    p.table(j, 1) = 0.25 * (j + 1);
  }
  return p;
}

double ego_speed(const AgentHistory& ego) {
  const int n = ego.size();
  if (n < 3) return 0.0;
  const double step1 = (ego.position(n - 1) - ego.position(n - 2)).norm();
  const double step2 = (ego.position(n - 2) - ego.position(n - 3)).norm();
  return 0.5 * (step1 + step2) / kFrameDt;
}

double ego_heading(const AgentHistory& ego) {
  for (int i = ego.size() - 1; i >= 1; --i) {
    const Vec2 d = ego.position(i) - ego.position(i - 1);
    if (d.norm() > 0.0) return std::atan2(d.y(), d.x());
  }
  return 0.0;
}

GaussianTrajectory predict_cv(const AgentHistory& ego, const KdVariancePrior& prior,
                              int steps) {
  const int n = ego.size();
  const Vec2 last = ego.position(n - 1);
  const Vec2 vel = (last - ego.position(n - 2)) / kFrameDt;
  GaussianTrajectory out;
  out.means.resize(steps, 2);
  for (int j = 0; j < steps; ++j) {
    out.means.row(j) = (last + (j + 1) * kFrameDt * vel).transpose();
  }
  out.variances = rotate_diag_variances(prior.table.topRows(steps), ego_heading(ego));
  return out;
}

GaussianTrajectory predict_linear_kalman(const AgentHistory& ego, int steps) {
  const double dt = kFrameDt;
  constexpr double kMeasVar = 1e-2;     // m^2
  constexpr double kAccelSpectral = 0.5;  // m^2/s^3
  constexpr double kInitVelVar = 1e6;

  Eigen::Matrix4d F = Eigen::Matrix4d::Identity();
  F(0, 2) = dt;
  F(1, 3) = dt;
  Eigen::Matrix4d Q = Eigen::Matrix4d::Zero();
  const double q3 = kAccelSpectral * dt * dt * dt / 3.0;
  const double q2 = kAccelSpectral * dt * dt / 2.0;
  const double q1 = kAccelSpectral * dt;
  Q(0, 0) = q3; Q(0, 2) = q2; Q(2, 0) = q2; Q(2, 2) = q1;
  Q(1, 1) = q3; Q(1, 3) = q2; Q(3, 1) = q2; Q(3, 3) = q1;
  Eigen::Matrix<double, 2, 4> H = Eigen::Matrix<double, 2, 4>::Zero();
  H(0, 0) = 1.0;
  H(1, 1) = 1.0;
  const Eigen::Matrix2d R = kMeasVar * Eigen::Matrix2d::Identity();

  Eigen::Vector4d x;
  x << ego.position(0), 0.0, 0.0;
  Eigen::Matrix4d P = Eigen::Matrix4d::Zero();
  P(0, 0) = kMeasVar;
  P(1, 1) = kMeasVar;
  P(2, 2) = kInitVelVar;
  P(3, 3) = kInitVelVar;

  for (int i = 1; i < ego.size(); ++i) {
    x = F * x;
    P = F * P * F.transpose() + Q;
    const Eigen::Vector2d innov = ego.position(i) - H * x;
    const Eigen::Matrix2d S = H * P * H.transpose() + R;
    const Eigen::Matrix<double, 4, 2> K = P * H.transpose() * S.inverse();
    x += K * innov;
    P = (Eigen::Matrix4d::Identity() - K * H) * P;
  }

  GaussianTrajectory out;
  out.means.resize(steps, 2);
  out.variances.resize(steps, 2);
  for (int j = 0; j < steps; ++j) {
    x = F * x;
    P = F * P * F.transpose() + Q;
    out.means(j, 0) = x(0);
    out.means(j, 1) = x(1);
    out.variances(j, 0) = std::max(P(0, 0), kVarianceFloor);
    out.variances(j, 1) = std::max(P(1, 1), kVarianceFloor);
  }
  return out;
}

namespace {

Vec2 left_normal(const Vec2& tangent) { return Vec2(-tangent.y(), tangent.x()); }

MatX2 concat_chain(const MatX2& a, const MatX2& b) {
  const bool shared = (a.row(a.rows() - 1) - b.row(0)).norm() < 1e-6;
  const Eigen::Index nb = b.rows() - (shared ? 1 : 0);
  MatX2 out(a.rows() + nb, 2);
  out.topRows(a.rows()) = a;
  out.bottomRows(nb) = b.bottomRows(nb);
  return out;
}

double polyline_length(const MatX2& poly) {
  double len = 0.0;
  for (int i = 0; i + 1 < poly.rows(); ++i) {
    len += (poly.row(i + 1) - poly.row(i)).norm();
  }
  return len;
}

/// Centerlines beginning where `cl` ends, i.e. lane successors.
std::vector<const Centerline*> successors_of(const SceneMap& map,
                                             const Centerline& cl) {
  constexpr double kJunctionTol = 0.5;
  std::vector<const Centerline*> out;
  const Vec2 end = cl.vertex(static_cast<int>(cl.polyline.rows()) - 1);
  for (const auto& cand : map.centerlines) {
    if (cand.id == cl.id) continue;
    if ((cand.vertex(0) - end).norm() <= kJunctionTol) out.push_back(&cand);
  }
  return out;
}

double junction_turn(const Centerline& from, const Centerline& to) {
  const int n = static_cast<int>(from.polyline.rows());
  const Vec2 d_out = (from.vertex(n - 1) - from.vertex(n - 2)).normalized();
  const Vec2 d_in = (to.vertex(1) - to.vertex(0)).normalized();
  return std::abs(std::atan2(d_out.x() * d_in.y() - d_out.y() * d_in.x(),
                             d_out.dot(d_in)));
}

}  // namespace

std::vector<LaneChain> lane_chains(const ScenarioState& state, double reach) {
  const SceneMap& map = *state.map;
  const Vec2 anchor = state.ego.position(state.ego.size() - 1);
  const Projection root_proj = project_to_centerline(anchor, map);
  const Centerline* root = map.find_centerline(root_proj.centerline_id);

  constexpr int kMaxChains = 16;
  std::vector<LaneChain> chains;

  struct Frame {
    const Centerline* cl;
    MatX2 poly;
    std::vector<int> ids;
    double turn;
  };

  // Depth-first enumeration of successor continuations. A junction is
  // explored only while it is within `reach` of the ego projection.
  std::function<void(Frame)> dfs = [&](Frame f) {
    if (static_cast<int>(chains.size()) >= kMaxChains) return;
    const double junction_arc = polyline_length(f.poly);
    std::vector<const Centerline*> succ;
    if (junction_arc - root_proj.arc_length < reach) {
      succ = successors_of(map, *f.cl);
      // Drop successors already in the chain (cycle guard).
      succ.erase(std::remove_if(succ.begin(), succ.end(),
                                [&](const Centerline* c) {
                                  return std::find(f.ids.begin(), f.ids.end(), c->id) !=
                                         f.ids.end();
                                }),
                 succ.end());
    }
    if (succ.empty()) {
      LaneChain chain;
      chain.polyline = f.poly;
      chain.ids = f.ids;
      chain.turn_score = f.turn;
      const Projection proj = project_to_polyline(anchor, chain.polyline);
      chain.start_arc = proj.arc_length;
      chain.initial_offset = proj.lateral_offset;
      chains.push_back(std::move(chain));
      return;
    }
    std::sort(succ.begin(), succ.end(),
              [](const Centerline* a, const Centerline* b) { return a->id < b->id; });
    for (const Centerline* s : succ) {
      Frame next;
      next.cl = s;
      next.poly = concat_chain(f.poly, s->polyline);
      next.ids = f.ids;
      next.ids.push_back(s->id);
      next.turn = f.turn + junction_turn(*f.cl, *s);
      dfs(std::move(next));
    }
  };

  dfs(Frame{root, root->polyline, {root->id}, 0.0});

  std::sort(chains.begin(), chains.end(), [](const LaneChain& a, const LaneChain& b) {
    const double da = std::abs(a.initial_offset);
    const double db = std::abs(b.initial_offset);
    if (da != db) return da < db;
    if (a.turn_score != b.turn_score) return a.turn_score < b.turn_score;
    return a.ids < b.ids;
  });
  return chains;
}

namespace {

GaussianTrajectory follow_chain(const LaneChain& chain,
                                const std::vector<double>& arc_per_step,
                                double initial_offset, double heading,
                                const KdVariancePrior& prior,
                                const KdParams& params) {
  const int steps = static_cast<int>(arc_per_step.size());
  GaussianTrajectory out;
  out.means.resize(steps, 2);
  for (int j = 0; j < steps; ++j) {
    const double s = arc_per_step[static_cast<std::size_t>(j)];
    const Vec2 base = walk_polyline(chain.polyline, s);
    const double decay =
        std::max(0.0, 1.0 - static_cast<double>(j + 1) / params.offset_decay_steps);
    const Vec2 n = left_normal(polyline_tangent(chain.polyline, s));
    out.means.row(j) = (base + decay * initial_offset * n).transpose();
  }
  out.variances = rotate_diag_variances(prior.table.topRows(steps), heading);
  return out;
}

std::vector<double> constant_speed_arcs(double s0, double v, int steps) {
  std::vector<double> arcs(static_cast<std::size_t>(steps));
  for (int j = 0; j < steps; ++j) arcs[static_cast<std::size_t>(j)] = s0 + (j + 1) * v * kFrameDt;
  return arcs;
}

}  // namespace

GaussianTrajectory predict_kd1(const ScenarioState& state,
                               const KdVariancePrior& prior,
                               const KdParams& params) {
  const double v = ego_speed(state.ego);
  const auto chains = lane_chains(state, v * prior.steps() * kFrameDt);
  const LaneChain& chain = chains.front();
  return follow_chain(chain, constant_speed_arcs(chain.start_arc, v, prior.steps()),
                      chain.initial_offset, ego_heading(state.ego), prior, params);
}

GaussianTrajectory predict_kd2(const ScenarioState& state,
                               const KdVariancePrior& prior,
                               const KdParams& params) {
  const double v0 = ego_speed(state.ego);
  const int steps = prior.steps();
  const auto chains = lane_chains(state, v0 * steps * kFrameDt);
  const LaneChain& chain = chains.front();

  // Nearest agent ahead on the same chain within the lateral corridor.
  double leader_arc = 0.0;
  double leader_speed = 0.0;
  bool has_leader = false;
  for (const auto& other : state.others) {
    const Projection proj =
        project_to_polyline(other.position(other.size() - 1), chain.polyline);
    if (std::abs(proj.lateral_offset) > params.leader_corridor) continue;
    if (proj.arc_length <= chain.start_arc) continue;
    if (!has_leader || proj.arc_length < leader_arc) {
      leader_arc = proj.arc_length;
      leader_speed = ego_speed(other);
      has_leader = true;
    }
  }
  if (!has_leader) return predict_kd1(state, prior, params);

  std::vector<double> arcs(static_cast<std::size_t>(steps));
  double s_ego = chain.start_arc;
  double s_lead = leader_arc;
  double v = v0;
  for (int j = 0; j < steps; ++j) {
    const double gap = s_lead - s_ego;
    v = std::clamp(v + params.k_gain * (gap - params.d_desired) * kFrameDt, 0.0,
                   params.v_max);
    s_ego += v * kFrameDt;
    s_lead += leader_speed * kFrameDt;
    arcs[static_cast<std::size_t>(j)] = s_ego;
  }
  return follow_chain(chain, arcs, chain.initial_offset, ego_heading(state.ego),
                      prior, params);
}

std::vector<GaussianTrajectory> enumerate_lane_branches(
    const ScenarioState& state, int max_modes, const KdVariancePrior& prior,
    const KdParams& params) {
  if (max_modes < 1) {
    throw std::runtime_error("enumerate_lane_branches: max_modes must be >= 1");
  }
  const double v = ego_speed(state.ego);
  const int steps = prior.steps();
  const auto chains = lane_chains(state, v * steps * kFrameDt);
  std::vector<GaussianTrajectory> modes;
  const double heading = ego_heading(state.ego);
  for (const auto& chain : chains) {
    if (static_cast<int>(modes.size()) >= max_modes) break;
    modes.push_back(follow_chain(chain,
                                 constant_speed_arcs(chain.start_arc, v, steps),
                                 chain.initial_offset, heading, prior, params));
  }
  return modes;
}

VecX isotonic_non_decreasing(const VecX& values) {
  // Pool-adjacent-violators, least-squares projection.
  const int n = static_cast<int>(values.size());
  std::vector<double> level, weight;
  level.reserve(static_cast<std::size_t>(n));
  weight.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    level.push_back(values(i));
    weight.push_back(1.0);
    while (level.size() >= 2 && level[level.size() - 2] > level.back()) {
      const double w = weight[weight.size() - 2] + weight.back();
      const double v = (level[level.size() - 2] * weight[weight.size() - 2] +
                        level.back() * weight.back()) /
                       w;
      level.pop_back();
      weight.pop_back();
      level.back() = v;
      weight.back() = w;
    }
  }
  VecX out(n);
  int idx = 0;
  for (std::size_t b = 0; b < level.size(); ++b) {
    for (int k = 0; k < static_cast<int>(weight[b]); ++k) out(idx++) = level[b];
  }
  return out;
}

KdVariancePrior fit_kd_variance(const std::vector<ScenarioState>& training,
                                const KdPredictor& kd) {
  std::vector<const ScenarioState*> usable;
  for (const auto& st : training) {
    if (st.ground_truth.has_value()) usable.push_back(&st);
  }
  if (usable.size() < 2) {
    throw std::runtime_error("fit_kd_variance: needs at least 2 scenarios with ground truth");
  }
  const KdVariancePrior neutral = KdVariancePrior::Default();
  const int steps = neutral.steps();

  MatX2 sum = MatX2::Zero(steps, 2);
  MatX2 sum_sq = MatX2::Zero(steps, 2);
  for (const ScenarioState* st : usable) {
    const GaussianTrajectory pred = kd(*st, neutral);
    const MatX2 err_world = *st->ground_truth - pred.means;
    const MatX2 err_ego = rotate_rows(err_world, -ego_heading(st->ego));
    sum += err_ego;
    sum_sq += err_ego.cwiseProduct(err_ego);
  }
  const double n = static_cast<double>(usable.size());
  MatX2 var = sum_sq / n - (sum / n).cwiseProduct(sum / n);

  KdVariancePrior prior;
  prior.table.resize(steps, 2);
  for (int axis = 0; axis < 2; ++axis) {
    prior.table.col(axis) =
        isotonic_non_decreasing(var.col(axis)).cwiseMax(kVarianceFloor);
  }
  return prior;
}

}  // namespace lanefuse
