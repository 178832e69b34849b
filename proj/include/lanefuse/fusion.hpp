#pragma once

#include "lanefuse/types.hpp"

#include <stdexcept>
#include <string>

namespace lanefuse {

/// How the lane prediction and the learned correction are merged.
///   kIvw            inverse-variance weighting (default)
///   kSimpleAdd      plain addition, weights (0, 1)
///   kViIndependent  IVW against an independently predicted trajectory
///   kViFixed        as kViIndependent with a fixed lane-prediction variance
enum class FusionMode { kIvw, kSimpleAdd, kViIndependent, kViFixed };

FusionMode fusion_mode_from_string(const std::string& name);
std::string to_string(FusionMode mode);

struct FusionConfig {
  FusionMode mode = FusionMode::kIvw;
  double sigma_cross = 0.0;        // cross-covariance policy, m^2
  double fixed_kd_variance = 1.0;  // kViFixed hyperparameter, m^2
};

struct DegenerateFusionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Minimum-variance convex weights for merging two scalar estimates with
/// variances var_a, var_b and cross-covariance cov. w applies to the first
/// estimate; w + w_tilde == 1 exactly. Out-of-range solutions are clamped
/// to [0, 1]. Throws DegenerateFusionError when the denominator vanishes.
struct IvwWeights {
  double w = 1.0;
  double w_tilde = 0.0;
  bool clamped = false;
};
IvwWeights ivw_weights(double var_a, double var_b, double cov);

/// Variance of the weighted sum w*A + w_tilde*B, floored at kVarianceFloor.
double merged_variance(double var_a, double var_b, double cov, double w,
                       double w_tilde);

struct FusionResult {
  GaussianTrajectory fused;
  MatX2 w;        // per (step, axis) weight on the lane prediction
  MatX2 w_tilde;  // weight on the corrected trajectory
  MatX2 var_floored;   // 1.0 where the merged variance hit the floor
  MatX2 degenerate;    // 1.0 where fusion fell back to the lane prediction
  int degenerate_count = 0;
};

/// Merge a lane prediction with a correction distribution (world frame).
/// The corrected trajectory has means kd + res and variance var_res. For
/// kViIndependent / kViFixed, res carries the difference between an
/// independent prediction and the lane means.
FusionResult fuse(const GaussianTrajectory& kd, const MatX2& res_means,
                  const MatX2& res_variances, const FusionConfig& cfg);

/// Gradients of (fused.means, fused.variances) with respect to
/// (res_means, res_variances); the lane prediction is a constant.
struct FusionGrad {
  MatX2 d_res_means;
  MatX2 d_res_variances;
};
FusionGrad fuse_backward(const GaussianTrajectory& kd, const MatX2& res_means,
                         const MatX2& res_variances, const FusionConfig& cfg,
                         const FusionResult& result, const MatX2& g_means,
                         const MatX2& g_variances);

}  // namespace lanefuse
