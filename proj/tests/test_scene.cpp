#include <doctest.h>

#include "lanefuse/scene.hpp"

#include <cmath>
#include <random>

using namespace lanefuse;

namespace {

MatX2 points(std::initializer_list<std::pair<double, double>> pts) {
  MatX2 m(static_cast<Eigen::Index>(pts.size()), 2);
  Eigen::Index i = 0;
  for (const auto& [x, y] : pts) {
    m(i, 0) = x;
    m(i, 1) = y;
    ++i;
  }
  return m;
}

/// Brute-force drivability oracle: point-to-segment distance over every
/// centerline segment.
bool oracle_drivable(const Vec2& p, const std::vector<Centerline>& cls) {
  for (const auto& cl : cls) {
    for (int i = 0; i < cl.segments(); ++i) {
      const Vec2 a = cl.vertex(i);
      const Vec2 b = cl.vertex(i + 1);
      const Vec2 ab = b - a;
      const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
      if ((p - (a + t * ab)).norm() <= 0.5 * cl.seg_widths(i)) return true;
    }
  }
  return false;
}

}  // namespace

TEST_CASE("rasterize_drivable matches the brute-force band") {
  auto cl = make_centerline(0, points({{0, 0}, {40, 0}}), 4.0);
  const std::vector<Centerline> cls{cl};
  const DrivableRaster raster = rasterize_drivable(cls, 0.5);

  for (int iy = 0; iy < raster.ny; ++iy) {
    for (int ix = 0; ix < raster.nx; ++ix) {
      const Vec2 center = raster.cell_center(ix, iy);
      CHECK(raster.cell(ix, iy) == oracle_drivable(center, cls));
    }
  }
  // Band is 4 m wide around the centerline.
  CHECK(raster.drivable(Vec2(20.0, 1.9)));
  CHECK_FALSE(raster.drivable(Vec2(20.0, 2.6)));
}

TEST_CASE("rasterize_drivable rejects empty input and covers a margin") {
  CHECK_THROWS(rasterize_drivable({}, 0.5));
  auto cl = make_centerline(0, points({{0, 0}, {10, 0}}), 4.0);
  const std::vector<Centerline> cls{cl};
  const DrivableRaster raster = rasterize_drivable(cls, 0.5);
  CHECK(raster.origin.x() <= -10.0);
  CHECK(raster.origin.y() <= -10.0);
  // Far away from any lane.
  CHECK_FALSE(raster.drivable(Vec2(5.0, 100.0)));
  // Exactly on the centerline.
  CHECK(raster.drivable(Vec2(5.0, 0.0)));
}

TEST_CASE("raster decisions are translation invariant") {
  const Vec2 shift(137.25, -48.75);
  auto base = make_centerline(0, points({{0, 0}, {15, 5}, {30, 5}}), 5.0);
  MatX2 shifted_pts = base.polyline;
  shifted_pts.col(0).array() += shift.x();
  shifted_pts.col(1).array() += shift.y();
  auto shifted = make_centerline(0, shifted_pts, 5.0);

  const DrivableRaster r0 = rasterize_drivable(std::vector<Centerline>{base}, 0.5);
  const DrivableRaster r1 = rasterize_drivable(std::vector<Centerline>{shifted}, 0.5);
  std::mt19937_64 rng(11);
  for (int k = 0; k < 500; ++k) {
    const double x = -10.0 + 50.0 * static_cast<double>(rng() >> 11) * 0x1.0p-53;
    const double y = -15.0 + 30.0 * static_cast<double>(rng() >> 11) * 0x1.0p-53;
    CHECK(r0.drivable(Vec2(x, y)) == r1.drivable(Vec2(x, y) + shift));
  }
}

TEST_CASE("project_to_polyline basics and sign convention") {
  const MatX2 line = points({{0, 0}, {10, 0}});

  SUBCASE("point on a vertex") {
    const Projection p = project_to_polyline(Vec2(10.0, 0.0), line);
    CHECK(p.lateral_offset == doctest::Approx(0.0));
    CHECK(p.arc_length == doctest::Approx(10.0));
  }
  SUBCASE("left of travel is positive") {
    const Projection p = project_to_polyline(Vec2(4.0, 2.0), line);
    CHECK(p.lateral_offset == doctest::Approx(2.0));
    CHECK(p.arc_length == doctest::Approx(4.0));
  }
  SUBCASE("right of travel is negative") {
    const Projection p = project_to_polyline(Vec2(4.0, -2.0), line);
    CHECK(p.lateral_offset == doctest::Approx(-2.0));
  }
}

TEST_CASE("project_to_centerline ties break to the smaller id") {
  // Two lanes symmetric about y = 0; query exactly between them.
  auto top = make_centerline(4, points({{0, 2}, {20, 2}}), 3.0);
  auto bottom = make_centerline(2, points({{0, -2}, {20, -2}}), 3.0);
  SceneMap map = make_scene_map("tie", {top, bottom}, 0.5);
  const Projection p = project_to_centerline(Vec2(10.0, 0.0), map);
  CHECK(p.centerline_id == 2);
  CHECK(std::abs(p.lateral_offset) == doctest::Approx(2.0));
}

TEST_CASE("walk_polyline walks and extrapolates") {
  const MatX2 line = points({{0, 0}, {10, 0}});
  SUBCASE("interior") {
    const Vec2 p = walk_polyline(line, 3.0);
    CHECK(p.x() == doctest::Approx(3.0));
    CHECK(p.y() == doctest::Approx(0.0));
  }
  SUBCASE("beyond the end extrapolates along the final segment") {
    const Vec2 p = walk_polyline(line, 13.0);
    CHECK(p.x() == doctest::Approx(13.0));
    CHECK(p.y() == doctest::Approx(0.0));
  }
  SUBCASE("right-angle polyline, arc length accumulates per segment") {
    // 5 m along +x, then the remaining 2 m along +y.
    const MatX2 bend = points({{0, 0}, {5, 0}, {5, 5}});
    const Vec2 p = walk_polyline(bend, 7.0);
    CHECK(p.x() == doctest::Approx(5.0));
    CHECK(p.y() == doctest::Approx(2.0));
  }
}

TEST_CASE("walk_centerline uses s0 + ds") {
  auto cl = make_centerline(0, points({{0, 0}, {10, 0}}), 4.0);
  SceneMap map = make_scene_map("walk", {cl}, 0.5);
  const Vec2 a = walk_centerline(map, 0, 0.0, 3.0);
  CHECK(a.x() == doctest::Approx(3.0));
  const Vec2 b = walk_centerline(map, 0, 8.0, 5.0);
  CHECK(b.x() == doctest::Approx(13.0));
  CHECK_THROWS(walk_centerline(map, 99, 0.0, 0.0));
}

TEST_CASE("projection then zero-length walk reconstructs the foot point") {
  auto cl = make_centerline(0, points({{0, 0}, {7, 3}, {12, 3}, {20, -1}}), 4.0);
  SceneMap map = make_scene_map("foot", {cl}, 0.5);
  std::mt19937_64 rng(3);
  for (int k = 0; k < 200; ++k) {
    const double x = -2.0 + 24.0 * static_cast<double>(rng() >> 11) * 0x1.0p-53;
    const double y = -4.0 + 10.0 * static_cast<double>(rng() >> 11) * 0x1.0p-53;
    const Projection p = project_to_centerline(Vec2(x, y), map);
    const Vec2 again = walk_centerline(map, p.centerline_id, p.arc_length, 0.0);
    CHECK((again - p.foot).norm() < 1e-9);
  }
}

TEST_CASE("compute_confinement_c is half the minimum width") {
  SUBCASE("mixed widths") {
    auto a = make_centerline(0, points({{0, 0}, {10, 0}}), 4.0);
    auto b = make_centerline(1, points({{0, 5}, {10, 5}}), 6.0);
    SceneMap map = make_scene_map("c1", {a, b}, 0.5);
    CHECK(map.confinement_c == doctest::Approx(2.0));
  }
  SUBCASE("single lane") {
    auto a = make_centerline(0, points({{0, 0}, {10, 0}}), 3.0);
    SceneMap map = make_scene_map("c2", {a}, 0.5);
    CHECK(map.confinement_c == doctest::Approx(1.5));
  }
  SUBCASE("all equal") {
    auto a = make_centerline(0, points({{0, 0}, {10, 0}}), 5.0);
    auto b = make_centerline(1, points({{0, 8}, {10, 8}}), 5.0);
    SceneMap map = make_scene_map("c3", {a, b}, 0.5);
    CHECK(map.confinement_c == doctest::Approx(2.5));
  }
}

TEST_CASE("centerline validation rejects bad inputs") {
  CHECK_THROWS(make_centerline(0, points({{0, 0}}), 4.0));
  CHECK_THROWS(make_centerline(0, points({{0, 0}, {0, 0}}), 4.0));
  CHECK_THROWS(make_centerline(0, points({{0, 0}, {1, 0}}), -1.0));
}

TEST_CASE("wrap_angle lands in (-pi, pi]") {
  CHECK(wrap_angle(M_PI) == doctest::Approx(M_PI));
  CHECK(wrap_angle(-M_PI) == doctest::Approx(M_PI));
  CHECK(wrap_angle(0.0) == doctest::Approx(0.0));
  CHECK(wrap_angle(3.0 * M_PI) == doctest::Approx(M_PI));
  CHECK(wrap_angle(-2.5 * M_PI) == doctest::Approx(-0.5 * M_PI));
}
