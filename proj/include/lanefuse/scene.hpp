#pragma once

#include "lanefuse/types.hpp"

#include <span>

namespace lanefuse {

/// A lane centerline: an ordered polyline with a width per segment.
struct Centerline {
  int id = 0;
  MatX2 polyline;    // >= 2 vertices, no zero-length segments
  VecX seg_widths;   // meters, size = vertices - 1, all > 0
  VecX cum_lengths;  // cumulative arc length per vertex, size = vertices

  int segments() const { return static_cast<int>(polyline.rows()) - 1; }
  double length() const { return cum_lengths(cum_lengths.size() - 1); }
  Vec2 vertex(int i) const { return polyline.row(i).transpose(); }

  /// Rebuild cum_lengths from the polyline. Must be called after edits.
  void update_lengths();
};

Centerline make_centerline(int id, MatX2 polyline, double uniform_width);
Centerline make_centerline(int id, MatX2 polyline, VecX seg_widths);

/// Boolean occupancy grid of the drivable area. A cell is drivable iff its
/// center lies within half the local lane width of some centerline.
struct DrivableRaster {
  Vec2 origin = Vec2::Zero();  // world position of the grid corner
  double cell_size = 0.5;      // meters
  int nx = 0;
  int ny = 0;
  std::vector<std::uint8_t> cells;  // row-major, index = iy * nx + ix

  bool in_bounds(int ix, int iy) const {
    return ix >= 0 && ix < nx && iy >= 0 && iy < ny;
  }
  bool cell(int ix, int iy) const {
    return in_bounds(ix, iy) && cells[static_cast<std::size_t>(iy) * nx + ix] != 0;
  }
  /// Drivability of the cell containing `p`; false outside the grid.
  bool drivable(const Vec2& p) const;
  Vec2 cell_center(int ix, int iy) const {
    return origin + Vec2((ix + 0.5) * cell_size, (iy + 0.5) * cell_size);
  }
};

struct SceneMap {
  std::string scene_id;
  std::vector<Centerline> centerlines;
  DrivableRaster raster;
  double confinement_c = 1.0;  // meters, > 0

  const Centerline* find_centerline(int id) const;
};

/// Result of projecting a point onto a centerline or polyline.
struct Projection {
  int centerline_id = -1;
  double arc_length = 0.0;      // meters from the polyline start to the foot
  double lateral_offset = 0.0;  // meters, signed; left of travel is positive
  Vec2 foot = Vec2::Zero();
  int segment = 0;              // segment index the foot lies on
};

/// Nearest point on a polyline. Ties between segments resolve to the
/// earlier segment.
Projection project_to_polyline(const Vec2& p, const MatX2& polyline);

/// Projection onto the centerline with the smallest |lateral_offset|;
/// exact ties resolve to the smaller centerline id.
Projection project_to_centerline(const Vec2& p, const SceneMap& map);

/// Point at arc length s along the polyline. s < 0 extrapolates backwards
/// along the first segment, s > length along the last one.
Vec2 walk_polyline(const MatX2& polyline, double s);

/// Unit tangent of the segment containing arc length s (clamped to the
/// first/last segment outside the polyline).
Vec2 polyline_tangent(const MatX2& polyline, double s);

Vec2 walk_centerline(const SceneMap& map, int centerline_id, double s0, double ds);

/// Rasterize the drivable band around the given centerlines. The grid covers
/// the centerline bounding box plus a 10 m margin. Throws on empty input.
DrivableRaster rasterize_drivable(std::span<const Centerline> centerlines,
                                  double cell_size);

/// Half of the minimum segment width over the whole map.
double compute_confinement_c(const SceneMap& map);

/// Assemble a SceneMap: rasterize and derive the confinement parameter.
SceneMap make_scene_map(std::string scene_id, std::vector<Centerline> centerlines,
                        double cell_size = 0.5);

}  // namespace lanefuse
