#include "lanefuse/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace lanefuse {

void Centerline::update_lengths() {
  const int n = static_cast<int>(polyline.rows());
  cum_lengths.resize(n);
  cum_lengths(0) = 0.0;
  for (int i = 1; i < n; ++i) {
    cum_lengths(i) = cum_lengths(i - 1) + (vertex(i) - vertex(i - 1)).norm();
  }
}

static void validate_centerline(const Centerline& cl) {
  if (cl.polyline.rows() < 2) {
    throw std::runtime_error("centerline " + std::to_string(cl.id) +
                             ": needs at least 2 vertices");
  }
  if (cl.seg_widths.size() != cl.polyline.rows() - 1) {
    throw std::runtime_error("centerline " + std::to_string(cl.id) +
                             ": width count must equal segment count");
  }
  for (int i = 0; i < cl.segments(); ++i) {
    if ((cl.vertex(i + 1) - cl.vertex(i)).norm() <= 0.0) {
      throw std::runtime_error("centerline " + std::to_string(cl.id) +
                               ": zero-length segment " + std::to_string(i));
    }
    if (cl.seg_widths(i) <= 0.0) {
      throw std::runtime_error("centerline " + std::to_string(cl.id) +
                               ": non-positive width on segment " + std::to_string(i));
    }
  }
}

Centerline make_centerline(int id, MatX2 polyline, double uniform_width) {
  const auto segs = polyline.rows() - 1;
  return make_centerline(id, std::move(polyline),
                         VecX::Constant(segs, uniform_width));
}

Centerline make_centerline(int id, MatX2 polyline, VecX seg_widths) {
  Centerline cl;
  cl.id = id;
  cl.polyline = std::move(polyline);
  cl.seg_widths = std::move(seg_widths);
  cl.update_lengths();
  validate_centerline(cl);
  return cl;
}

bool DrivableRaster::drivable(const Vec2& p) const {
  const int ix = static_cast<int>(std::floor((p.x() - origin.x()) / cell_size));
  const int iy = static_cast<int>(std::floor((p.y() - origin.y()) / cell_size));
  return cell(ix, iy);
}

const Centerline* SceneMap::find_centerline(int id) const {
  for (const auto& cl : centerlines) {
    if (cl.id == id) return &cl;
  }
  return nullptr;
}

namespace {

struct SegmentHit {
  double t = 0.0;        // parameter along the segment in [0, 1]
  double dist = 0.0;     // unsigned distance
  double signed_d = 0.0; // positive left of the segment direction
  Vec2 foot = Vec2::Zero();
};

SegmentHit nearest_on_segment(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double len2 = ab.squaredNorm();
  SegmentHit hit;
  hit.t = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  hit.foot = a + hit.t * ab;
  hit.dist = (p - hit.foot).norm();
  const double cross = ab.x() * (p.y() - a.y()) - ab.y() * (p.x() - a.x());
  hit.signed_d = cross >= 0.0 ? hit.dist : -hit.dist;
  return hit;
}

}  // namespace

Projection project_to_polyline(const Vec2& p, const MatX2& polyline) {
  const int segs = static_cast<int>(polyline.rows()) - 1;
  Projection best;
  double best_dist = std::numeric_limits<double>::infinity();
  double cum = 0.0;
  for (int i = 0; i < segs; ++i) {
    const Vec2 a = polyline.row(i).transpose();
    const Vec2 b = polyline.row(i + 1).transpose();
    const double seg_len = (b - a).norm();
    const SegmentHit hit = nearest_on_segment(p, a, b);
    if (hit.dist < best_dist) {
      best_dist = hit.dist;
      best.arc_length = cum + hit.t * seg_len;
      best.lateral_offset = hit.signed_d;
      best.foot = hit.foot;
      best.segment = i;
    }
    cum += seg_len;
  }
  return best;
}

Projection project_to_centerline(const Vec2& p, const SceneMap& map) {
  if (map.centerlines.empty()) {
    throw std::runtime_error("project_to_centerline: map has no centerlines");
  }
  Projection best;
  double best_dist = std::numeric_limits<double>::infinity();
  for (const auto& cl : map.centerlines) {
    Projection proj = project_to_polyline(p, cl.polyline);
    proj.centerline_id = cl.id;
    const double d = std::abs(proj.lateral_offset);
    // Strict < keeps the first (smallest-id) centerline on exact ties;
    // centerlines are kept sorted by id in make_scene_map.
    if (d < best_dist) {
      best_dist = d;
      best = proj;
    }
  }
  return best;
}

Vec2 walk_polyline(const MatX2& polyline, double s) {
  const int n = static_cast<int>(polyline.rows());
  if (s < 0.0) {
    const Vec2 a = polyline.row(0).transpose();
    const Vec2 b = polyline.row(1).transpose();
    return a + s * (b - a).normalized();
  }
  double cum = 0.0;
  for (int i = 0; i + 1 < n; ++i) {
    const Vec2 a = polyline.row(i).transpose();
    const Vec2 b = polyline.row(i + 1).transpose();
    const double seg_len = (b - a).norm();
    if (s <= cum + seg_len || i + 2 == n) {
      return a + (s - cum) * (b - a).normalized();
    }
    cum += seg_len;
  }
  return polyline.row(n - 1).transpose();
}

Vec2 polyline_tangent(const MatX2& polyline, double s) {
  const int n = static_cast<int>(polyline.rows());
  double cum = 0.0;
  for (int i = 0; i + 1 < n; ++i) {
    const Vec2 a = polyline.row(i).transpose();
    const Vec2 b = polyline.row(i + 1).transpose();
    const double seg_len = (b - a).norm();
    if (s <= cum + seg_len || i + 2 == n) return (b - a).normalized();
    cum += seg_len;
  }
  return (polyline.row(n - 1) - polyline.row(n - 2)).normalized().transpose();
}

Vec2 walk_centerline(const SceneMap& map, int centerline_id, double s0, double ds) {
  const Centerline* cl = map.find_centerline(centerline_id);
  if (cl == nullptr) {
    throw std::runtime_error("walk_centerline: unknown centerline id " +
                             std::to_string(centerline_id));
  }
  return walk_polyline(cl->polyline, s0 + ds);
}

DrivableRaster rasterize_drivable(std::span<const Centerline> centerlines,
                                  double cell_size) {
  if (centerlines.empty()) {
    throw std::runtime_error("rasterize_drivable: no centerlines");
  }
  if (cell_size <= 0.0) {
    throw std::runtime_error("rasterize_drivable: cell_size must be positive");
  }
  constexpr double kMargin = 10.0;
  Vec2 lo(std::numeric_limits<double>::infinity(),
          std::numeric_limits<double>::infinity());
  Vec2 hi = -lo;
  for (const auto& cl : centerlines) {
    lo = lo.cwiseMin(Vec2(cl.polyline.col(0).minCoeff(), cl.polyline.col(1).minCoeff()));
    hi = hi.cwiseMax(Vec2(cl.polyline.col(0).maxCoeff(), cl.polyline.col(1).maxCoeff()));
  }
  DrivableRaster r;
  r.cell_size = cell_size;
  r.origin = lo - Vec2(kMargin, kMargin);
  r.nx = static_cast<int>(std::ceil((hi.x() + kMargin - r.origin.x()) / cell_size));
  r.ny = static_cast<int>(std::ceil((hi.y() + kMargin - r.origin.y()) / cell_size));
  r.cells.assign(static_cast<std::size_t>(r.nx) * r.ny, 0);

  // Mark cells segment by segment instead of scanning the full grid per
  // centerline; only cells inside a segment's padded bounding box can hit.
  for (const auto& cl : centerlines) {
    for (int seg = 0; seg < cl.segments(); ++seg) {
      const Vec2 a = cl.vertex(seg);
      const Vec2 b = cl.vertex(seg + 1);
      const double half_w = 0.5 * cl.seg_widths(seg);
      const double pad = half_w + cell_size;
      const Vec2 s_lo = a.cwiseMin(b) - Vec2(pad, pad);
      const Vec2 s_hi = a.cwiseMax(b) + Vec2(pad, pad);
      const int ix0 = std::max(0, static_cast<int>(std::floor((s_lo.x() - r.origin.x()) / cell_size)));
      const int iy0 = std::max(0, static_cast<int>(std::floor((s_lo.y() - r.origin.y()) / cell_size)));
      const int ix1 = std::min(r.nx - 1, static_cast<int>(std::ceil((s_hi.x() - r.origin.x()) / cell_size)));
      const int iy1 = std::min(r.ny - 1, static_cast<int>(std::ceil((s_hi.y() - r.origin.y()) / cell_size)));
      for (int iy = iy0; iy <= iy1; ++iy) {
        for (int ix = ix0; ix <= ix1; ++ix) {
          if (r.cells[static_cast<std::size_t>(iy) * r.nx + ix]) continue;
          const SegmentHit hit = nearest_on_segment(r.cell_center(ix, iy), a, b);
          if (hit.dist <= half_w) {
            r.cells[static_cast<std::size_t>(iy) * r.nx + ix] = 1;
          }
        }
      }
    }
  }
  return r;
}

double compute_confinement_c(const SceneMap& map) {
  if (map.centerlines.empty()) {
    throw std::runtime_error("compute_confinement_c: map has no centerlines");
  }
  double min_w = std::numeric_limits<double>::infinity();
  for (const auto& cl : map.centerlines) {
    min_w = std::min(min_w, cl.seg_widths.minCoeff());
  }
  return 0.5 * min_w;
}

SceneMap make_scene_map(std::string scene_id, std::vector<Centerline> centerlines,
                        double cell_size) {
  SceneMap map;
  map.scene_id = std::move(scene_id);
  map.centerlines = std::move(centerlines);
  std::sort(map.centerlines.begin(), map.centerlines.end(),
            [](const Centerline& a, const Centerline& b) { return a.id < b.id; });
  for (const auto& cl : map.centerlines) validate_centerline(cl);
  map.raster = rasterize_drivable(map.centerlines, cell_size);
  map.confinement_c = compute_confinement_c(map);
  return map;
}

}  // namespace lanefuse
