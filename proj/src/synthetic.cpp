#include "lanefuse/synthetic.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace lanefuse {

namespace {

double u01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double urange(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * u01(rng);
}

MatX2 straight_points(const Vec2& a, const Vec2& b) {
  MatX2 pts(2, 2);
  pts.row(0) = a.transpose();
  pts.row(1) = b.transpose();
  return pts;
}

/// Left-turning arc starting at `start` with heading `heading0`, radius r,
/// swept by `sweep` radians, sampled every ~2 m.
MatX2 arc_points(const Vec2& start, double heading0, double r, double sweep,
                 double sample_len = 2.0) {
  const int n = std::max(3, static_cast<int>(std::ceil(r * sweep / sample_len)) + 1);
  const Vec2 center = start + r * Vec2(-std::sin(heading0), std::cos(heading0));
  MatX2 pts(n, 2);
  for (int i = 0; i < n; ++i) {
    const double th = sweep * i / (n - 1);
    const double h = heading0 + th;
    pts.row(i) = (center + r * Vec2(std::sin(h), -std::cos(h))).transpose();
  }
  return pts;
}

MatX2 concat_polylines(const MatX2& a, const MatX2& b) {
  // Drop b's first vertex when it coincides with a's last.
  const bool shared = (a.row(a.rows() - 1) - b.row(0)).norm() < 1e-9;
  const Eigen::Index nb = b.rows() - (shared ? 1 : 0);
  MatX2 out(a.rows() + nb, 2);
  out.topRows(a.rows()) = a;
  out.bottomRows(nb) = b.bottomRows(nb);
  return out;
}

struct AgentPlan {
  MatX2 route;          // full polyline the agent follows
  double s0 = 0.0;      // initial arc position
  double v0 = 0.0;      // initial speed
  double v_target = 0.0;
  double noise_amp = 0.0, noise_period = 6.0, noise_phase = 0.0;
  double jitter_amp = 0.0, jitter_period = 8.0, jitter_phase = 0.0;
  int ahead = -1;       // index of the agent this one follows, -1 for none
};

// Car-following acceleration (desired-speed + gap terms).
double following_accel(double v, double v_desired, double gap, double dv) {
  constexpr double kAccelMax = 1.5, kBrakeComfort = 2.0, kJamDist = 2.0, kHeadway = 1.2;
  const double ratio = v_desired > 0.0 ? v / v_desired : 1.0;
  double a = kAccelMax * (1.0 - ratio * ratio * ratio * ratio);
  if (gap > 0.0) {
    const double s_star =
        kJamDist + v * kHeadway + v * dv / (2.0 * std::sqrt(kAccelMax * kBrakeComfort));
    const double term = std::max(0.0, s_star) / std::max(gap, 0.1);
    a -= kAccelMax * term * term;
  }
  return std::clamp(a, -6.0, 3.0);
}

}  // namespace

std::vector<Centerline> template_centerlines(const SyntheticSpec& spec,
                                             double curve_radius_override) {
  const double w = spec.road_width;
  if (spec.template_name == "straight") {
    return {make_centerline(0, straight_points({0.0, 0.0}, {170.0, 0.0}), w)};
  }
  if (spec.template_name == "curve") {
    const double r = curve_radius_override > 0.0 ? curve_radius_override
                                                 : spec.curve_radius;
    constexpr double kSweep = 1.75;
    MatX2 lead_in = straight_points({-40.0, 0.0}, {0.0, 0.0});
    MatX2 arc = arc_points({0.0, 0.0}, 0.0, r, kSweep);
    const Vec2 arc_end = arc.row(arc.rows() - 1).transpose();
    const Vec2 out_dir(std::cos(kSweep), std::sin(kSweep));
    MatX2 lead_out = straight_points(arc_end, arc_end + 60.0 * out_dir);
    MatX2 poly = concat_polylines(concat_polylines(lead_in, arc), lead_out);
    return {make_centerline(0, std::move(poly), w)};
  }
  if (spec.template_name == "t_intersection") {
    std::vector<Centerline> cls;
    cls.push_back(make_centerline(0, straight_points({-70.0, 0.0}, {0.0, 0.0}), w));
    cls.push_back(make_centerline(1, straight_points({0.0, 0.0}, {100.0, 0.0}), w));
    MatX2 turn_arc = arc_points({0.0, 0.0}, 0.0, 9.0, M_PI / 2.0, 1.0);
    const Vec2 arc_end = turn_arc.row(turn_arc.rows() - 1).transpose();
    MatX2 turn = concat_polylines(turn_arc,
                                  straight_points(arc_end, {arc_end.x(), 100.0}));
    cls.push_back(make_centerline(2, std::move(turn), w));
    return cls;
  }
  throw std::runtime_error("unknown scene template: " + spec.template_name);
}

SyntheticScene generate_synthetic_scene(const SyntheticSpec& spec,
                                        std::uint64_t seed,
                                        const std::string& scene_id) {
  if (spec.agent_count < 1) {
    throw std::runtime_error("generate_synthetic_scene: agent_count must be >= 1");
  }
  std::mt19937_64 rng(stable_hash(seed ^ stable_hash(scene_id)));

  double curve_radius = spec.curve_radius;
  if (spec.template_name == "curve") {
    curve_radius = spec.curve_radius * urange(rng, 0.8, 1.2);
  }
  std::vector<Centerline> cls = template_centerlines(spec, curve_radius);
  SceneMap map = make_scene_map(scene_id, cls, spec.cell_size);
  auto map_ptr = std::make_shared<const SceneMap>(std::move(map));

  // Candidate routes through the lane network.
  std::vector<MatX2> routes;
  if (spec.template_name == "t_intersection") {
    routes.push_back(concat_polylines(cls[0].polyline, cls[1].polyline));
    routes.push_back(concat_polylines(cls[0].polyline, cls[2].polyline));
  } else {
    routes.push_back(cls[0].polyline);
  }

  auto route_length = [](const MatX2& poly) {
    double len = 0.0;
    for (int i = 0; i + 1 < poly.rows(); ++i) {
      len += (poly.row(i + 1) - poly.row(i)).norm();
    }
    return len;
  };

  const int n = spec.agent_count;
  std::vector<AgentPlan> plans(static_cast<std::size_t>(n));
  double front_start = 0.0;
  double prev_target = 0.0;
  for (int i = 0; i < n; ++i) {
    AgentPlan& p = plans[static_cast<std::size_t>(i)];
    const std::size_t route_idx =
        routes.size() > 1 && u01(rng) < spec.turn_probability ? 1u : 0u;
    p.route = routes[route_idx];
    const double len = route_length(p.route);
    if (i == 0) {
      // Front agent: place it so the whole track stays on the route.
      const double start_hi =
          std::min(60.0, len - spec.duration_s * (spec.speed_max + 1.0) - 6.0);
      if (start_hi < 10.0) {
        throw std::runtime_error("synthetic route too short for requested duration");
      }
      front_start = start_hi - urange(rng, 0.0, 10.0);
      p.s0 = front_start;
      p.v_target = spec.speed_min +
                   urange(rng, 0.05, 0.45) * (spec.speed_max - spec.speed_min);
      p.v0 = p.v_target;
      p.ahead = -1;
    } else {
      p.s0 = std::max(2.0, plans[static_cast<std::size_t>(i - 1)].s0 - urange(rng, 12.0, 22.0));
      p.v_target = std::min(spec.speed_max, prev_target + urange(rng, 1.5, 4.0));
      p.v0 = p.v_target;
      p.ahead = i - 1;
    }
    prev_target = p.v_target;
    // Pronounced slow speed oscillations keep the trailing agents reacting
    // through the whole track instead of settling after one transient.
    p.noise_amp = urange(rng, 0.8, 2.0);
    p.noise_period = urange(rng, 5.0, 9.0);
    p.noise_phase = urange(rng, 0.0, 2.0 * M_PI);
    p.jitter_amp = urange(rng, 0.0, 0.2);
    p.jitter_period = urange(rng, 6.0, 10.0);
    p.jitter_phase = urange(rng, 0.0, 2.0 * M_PI);
  }

  // Simulate arc-length motion with a fine step, then sample the 2 Hz grid.
  constexpr double kSimDt = 0.1;
  const int n_frames = static_cast<int>(std::floor(spec.duration_s / kFrameDt)) + 1;
  const int n_steps = (n_frames - 1) * static_cast<int>(std::lround(kFrameDt / kSimDt));
  std::vector<double> s(static_cast<std::size_t>(n)), v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    s[static_cast<std::size_t>(i)] = plans[static_cast<std::size_t>(i)].s0;
    v[static_cast<std::size_t>(i)] = plans[static_cast<std::size_t>(i)].v0;
  }
  std::vector<std::vector<Vec2>> samples(static_cast<std::size_t>(n));

  auto world_position = [&](int i, double t) {
    const AgentPlan& p = plans[static_cast<std::size_t>(i)];
    const double si = s[static_cast<std::size_t>(i)];
    const Vec2 base = walk_polyline(p.route, si);
    const Vec2 tan = polyline_tangent(p.route, si);
    const Vec2 left(-tan.y(), tan.x());
    const double jitter =
        p.jitter_amp * std::sin(2.0 * M_PI * t / p.jitter_period + p.jitter_phase);
    return Vec2(base + jitter * left);
  };

  for (int step = 0; step <= n_steps; ++step) {
    const double t = step * kSimDt;
    if (step % static_cast<int>(std::lround(kFrameDt / kSimDt)) == 0) {
      for (int i = 0; i < n; ++i) {
        samples[static_cast<std::size_t>(i)].push_back(world_position(i, t));
      }
    }
    if (step == n_steps) break;
    for (int i = 0; i < n; ++i) {
      const AgentPlan& p = plans[static_cast<std::size_t>(i)];
      double accel;
      const double v_cmd = std::clamp(
          p.v_target + p.noise_amp * std::sin(2.0 * M_PI * t / p.noise_period + p.noise_phase),
          0.5, spec.speed_max + 0.5);
      if (p.ahead < 0) {
        accel = std::clamp((v_cmd - v[static_cast<std::size_t>(i)]) / kSimDt, -2.0, 2.0);
      } else {
        // Gap to the agent ahead, measured along this agent's own route and
        // only while that agent is inside a 2 m corridor around it.
        const Vec2 lead_pos = world_position(p.ahead, t);
        const Projection proj = project_to_polyline(lead_pos, p.route);
        double gap = -1.0;
        double dv = 0.0;
        if (std::abs(proj.lateral_offset) <= 2.0 &&
            proj.arc_length > s[static_cast<std::size_t>(i)]) {
          gap = proj.arc_length - s[static_cast<std::size_t>(i)] - 4.5;
          dv = v[static_cast<std::size_t>(i)] - v[static_cast<std::size_t>(p.ahead)];
        }
        accel = following_accel(v[static_cast<std::size_t>(i)], v_cmd, gap, dv);
      }
      v[static_cast<std::size_t>(i)] =
          std::max(0.0, v[static_cast<std::size_t>(i)] + accel * kSimDt);
      s[static_cast<std::size_t>(i)] += v[static_cast<std::size_t>(i)] * kSimDt;
    }
  }

  SyntheticScene scene;
  scene.map = map_ptr;
  for (int i = 0; i < n; ++i) {
    Track tr;
    tr.agent_id = i + 1;
    tr.first_frame = 0;
    for (int f = 0; f < n_frames; ++f) {
      const Vec2& p = samples[static_cast<std::size_t>(i)][static_cast<std::size_t>(f)];
      tr.points.push_back(TrackPoint{p.x(), p.y(), f * kFrameDt});
    }
    scene.tracks.push_back(std::move(tr));
  }
  scene.states = scenarios_from_tracks(scene.tracks, map_ptr, scene_id,
                                       spec.template_name);

  for (const auto& st : scene.states) {
    const MatX2& gt = *st.ground_truth;
    for (int j = 0; j < gt.rows(); ++j) {
      if (!map_ptr->raster.drivable(gt.row(j).transpose())) {
        throw std::runtime_error("synthetic generation produced an off-road ground truth point in " +
                                 scene_id);
      }
    }
  }
  return scene;
}

}  // namespace lanefuse
