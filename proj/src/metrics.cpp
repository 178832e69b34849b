#include "lanefuse/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace lanefuse {

std::pair<double, double> metric_ade_fde(const MultiModalPrediction& pred,
                                         const MatX2& gt) {
  const int m = closest_mode(pred, gt);
  const MatX2 diff = pred.modes[static_cast<std::size_t>(m)].means - gt;
  const VecX per_step = diff.rowwise().norm();
  return {per_step.mean(), per_step(per_step.size() - 1)};
}

double metric_rv(const MultiModalPrediction& pred, const SceneMap& map) {
  double rv = 0.0;
  for (int m = 0; m < pred.mode_count(); ++m) {
    const MatX2& means = pred.modes[static_cast<std::size_t>(m)].means;
    int off_road = 0;
    for (int j = 0; j < means.rows(); ++j) {
      if (!map.raster.drivable(means.row(j).transpose())) ++off_road;
    }
    const double frac = static_cast<double>(off_road) / static_cast<double>(means.rows());
    rv += pred.probabilities(m) * frac * 100.0;
  }
  return rv;
}

double metric_ct(const GaussianTrajectory& closest, const MatX2& gt,
                 const Vec2& anchor) {
  double gt_length = 0.0;
  Vec2 prev = anchor;
  for (int j = 0; j < gt.rows(); ++j) {
    gt_length += (gt.row(j).transpose() - prev).norm();
    prev = gt.row(j).transpose();
  }
  const Vec2 destination = gt.row(gt.rows() - 1).transpose();

  // Predicted polyline anchored at the last observed point, with
  // degenerate (zero-length) segments dropped.
  std::vector<Vec2> pts{anchor};
  for (int j = 0; j < closest.means.rows(); ++j) {
    const Vec2 p = closest.means.row(j).transpose();
    if ((p - pts.back()).norm() > 1e-12) pts.push_back(p);
  }
  Vec2 endpoint;
  if (pts.size() < 2) {
    endpoint = pts.back();
  } else {
    MatX2 poly(static_cast<Eigen::Index>(pts.size()), 2);
    for (std::size_t i = 0; i < pts.size(); ++i) poly.row(static_cast<Eigen::Index>(i)) = pts[i].transpose();
    endpoint = walk_polyline(poly, gt_length);
  }
  return (endpoint - destination).norm();
}

SampleMetrics compute_sample_metrics(const MultiModalPrediction& pred,
                                     const MatX2& gt, const Vec2& anchor,
                                     const SceneMap& map) {
  SampleMetrics out;
  const auto [ade, fde] = metric_ade_fde(pred, gt);
  out.ade = ade;
  out.fde = fde;
  out.rv = metric_rv(pred, map);
  out.ct = metric_ct(pred.modes[static_cast<std::size_t>(closest_mode(pred, gt))], gt,
                     anchor);
  return out;
}

MetricsReport aggregate_metrics(
    const std::vector<std::pair<std::string, SampleMetrics>>& rows) {
  if (rows.empty()) throw std::runtime_error("aggregate_metrics: empty dataset");
  MetricsReport report;
  for (const auto& [category, m] : rows) {
    CategoryMetrics& c = report.per_category[category];
    c.ade += m.ade;
    c.fde += m.fde;
    c.rv += m.rv;
    c.ct += m.ct;
    c.samples += 1;
  }
  for (auto& [category, c] : report.per_category) {
    c.ade /= c.samples;
    c.fde /= c.samples;
    c.rv /= c.samples;
    c.ct /= c.samples;
    report.ade += c.ade;
    report.fde += c.fde;
    report.rv += c.rv;
    report.ct += c.ct;
    report.total_samples += c.samples;
  }
  const double n_cat = static_cast<double>(report.per_category.size());
  report.ade /= n_cat;
  report.fde /= n_cat;
  report.rv /= n_cat;
  report.ct /= n_cat;
  return report;
}

}  // namespace lanefuse
