#include "lanefuse/render.hpp"

#include "lanefuse/scene.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace lanefuse {

namespace {

const char* kPalette[] = {"#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#17becf", "#8c564b"};

struct SvgCanvas {
  double scale = 6.0;  // pixels per meter
  Vec2 origin;         // world position of the lower-left corner
  double height_px = 0.0;

  double px(double wx) const { return (wx - origin.x()) * scale; }
  double py(double wy) const { return height_px - (wy - origin.y()) * scale; }
};

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

void polyline_path(std::ofstream& out, const SvgCanvas& c, const MatX2& pts,
                   const std::string& color, double width,
                   const std::string& dash = "") {
  out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\""
      << fmt(width) << "\"";
  if (!dash.empty()) out << " stroke-dasharray=\"" << dash << "\"";
  out << " points=\"";
  for (int i = 0; i < pts.rows(); ++i) {
    if (i > 0) out << " ";
    out << fmt(c.px(pts(i, 0))) << "," << fmt(c.py(pts(i, 1)));
  }
  out << "\"/>\n";
}

void dot(std::ofstream& out, const SvgCanvas& c, const Vec2& p,
         const std::string& color, double r) {
  out << "<circle cx=\"" << fmt(c.px(p.x())) << "\" cy=\"" << fmt(c.py(p.y()))
      << "\" r=\"" << fmt(r) << "\" fill=\"" << color << "\"/>\n";
}

}  // namespace

void render_scene(const std::string& path, const ScenarioState& state,
                  const std::vector<std::pair<std::string, MultiModalPrediction>>&
                      predictions) {
  if (path.size() < 4 || path.substr(path.size() - 4) != ".svg") {
    throw std::runtime_error("render_scene: output format follows the file "
                             "extension; supported: .svg");
  }
  const SceneMap& map = *state.map;
  const DrivableRaster& r = map.raster;

  SvgCanvas c;
  c.origin = r.origin;
  c.height_px = r.ny * r.cell_size * c.scale;
  const double width_px = r.nx * r.cell_size * c.scale;

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write image: " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(width_px)
      << "\" height=\"" << fmt(c.height_px) << "\" viewBox=\"0 0 " << fmt(width_px)
      << " " << fmt(c.height_px) << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";

  // Drivable band: merge runs of drivable cells per row into single rects.
  out << "<g fill=\"#dcdcdc\">\n";
  for (int iy = 0; iy < r.ny; ++iy) {
    int run_start = -1;
    for (int ix = 0; ix <= r.nx; ++ix) {
      const bool on = ix < r.nx && r.cell(ix, iy);
      if (on && run_start < 0) run_start = ix;
      if (!on && run_start >= 0) {
        const double x0 = c.px(r.origin.x() + run_start * r.cell_size);
        const double y0 = c.py(r.origin.y() + (iy + 1) * r.cell_size);
        out << "<rect x=\"" << fmt(x0) << "\" y=\"" << fmt(y0) << "\" width=\""
            << fmt((ix - run_start) * r.cell_size * c.scale) << "\" height=\""
            << fmt(r.cell_size * c.scale) << "\"/>\n";
        run_start = -1;
      }
    }
  }
  out << "</g>\n";

  for (const auto& cl : map.centerlines) {
    polyline_path(out, c, cl.polyline, "#9a9a9a", 1.0, "6,4");
  }

  for (const auto& other : state.others) {
    polyline_path(out, c, other.positions(), "#7fb2d9", 1.5);
    dot(out, c, other.position(other.size() - 1), "#7fb2d9", 3.0);
  }
  polyline_path(out, c, state.ego.positions(), "#1f77b4", 2.0);
  dot(out, c, state.ego.position(state.ego.size() - 1), "#1f77b4", 3.5);

  if (state.ground_truth.has_value()) {
    polyline_path(out, c, *state.ground_truth, "#000000", 2.0);
  }

  double legend_y = 16.0;
  out << "<text x=\"8\" y=\"" << fmt(legend_y)
      << "\" font-family=\"monospace\" font-size=\"12\" fill=\"#1f77b4\">history</text>\n";
  legend_y += 14.0;
  out << "<text x=\"8\" y=\"" << fmt(legend_y)
      << "\" font-family=\"monospace\" font-size=\"12\" fill=\"#000000\">ground truth</text>\n";

  for (std::size_t p = 0; p < predictions.size(); ++p) {
    const std::string color = kPalette[p % (sizeof(kPalette) / sizeof(kPalette[0]))];
    const auto& [name, pred] = predictions[p];
    for (int m = 0; m < pred.mode_count(); ++m) {
      polyline_path(out, c, pred.modes[static_cast<std::size_t>(m)].means, color,
                    m == 0 ? 1.8 : 1.0, m == 0 ? "" : "3,3");
    }
    legend_y += 14.0;
    out << "<text x=\"8\" y=\"" << fmt(legend_y)
        << "\" font-family=\"monospace\" font-size=\"12\" fill=\"" << color << "\">"
        << name << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace lanefuse
