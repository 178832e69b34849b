#pragma once

#include "lanefuse/losses.hpp"
#include "lanefuse/scene.hpp"
#include "lanefuse/types.hpp"

#include <map>
#include <string>
#include <vector>

namespace lanefuse {

/// Average / final displacement error of the mode closest to the ground
/// truth (mean per-step L2 distance).
std::pair<double, double> metric_ade_fde(const MultiModalPrediction& pred,
                                         const MatX2& gt);

/// Percentage of predicted mean points on non-drivable cells, averaged over
/// modes weighted by their probabilities.
double metric_rv(const MultiModalPrediction& pred, const SceneMap& map);

/// Cross-track error: walk the predicted polyline (anchored at the last
/// observed point) to the ground-truth total arc length, extrapolating
/// along the final predicted segment when the prediction is shorter, and
/// measure the distance from that retimed endpoint to the true destination.
double metric_ct(const GaussianTrajectory& closest, const MatX2& gt,
                 const Vec2& anchor);

struct SampleMetrics {
  double ade = 0.0;
  double fde = 0.0;
  double rv = 0.0;  // percent
  double ct = 0.0;
};

SampleMetrics compute_sample_metrics(const MultiModalPrediction& pred,
                                     const MatX2& gt, const Vec2& anchor,
                                     const SceneMap& map);

struct CategoryMetrics {
  double ade = 0.0, fde = 0.0, rv = 0.0, ct = 0.0;
  int samples = 0;
};

struct MetricsReport {
  double ade = 0.0, fde = 0.0, rv = 0.0, ct = 0.0;  // equal-weight category mean
  std::map<std::string, CategoryMetrics> per_category;
  int total_samples = 0;
};

/// Per-category means combined with equal category weight regardless of the
/// sample counts. Throws on empty input.
MetricsReport aggregate_metrics(
    const std::vector<std::pair<std::string, SampleMetrics>>& rows);

}  // namespace lanefuse
