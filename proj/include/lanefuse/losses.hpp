#pragma once

#include "lanefuse/types.hpp"

#include <vector>

namespace lanefuse {

/// M Gaussian trajectories with mode probabilities that sum to one
/// (uniform unless stated otherwise).
struct MultiModalPrediction {
  std::vector<GaussianTrajectory> modes;
  VecX probabilities;

  int mode_count() const { return static_cast<int>(modes.size()); }
  static MultiModalPrediction Uniform(std::vector<GaussianTrajectory> m);
};

struct NllGrad {
  MatX2 d_means;
  MatX2 d_variances;
};

/// Diagonal-Gaussian negative log-likelihood summed over steps and axes:
/// 0.5 * (log(2 pi var) + (x - mu)^2 / var).
double gaussian_nll(const GaussianTrajectory& pred, const MatX2& gt,
                    NllGrad* grad = nullptr);

/// Winner-takes-all loss: the NLL of the mode whose means are closest to
/// the ground truth in mean per-step L2 distance (ties -> lowest index).
/// Gradients flow only to that mode; others receive exact zeros.
struct WtaResult {
  double loss = 0.0;
  int selected_mode = 0;
  std::vector<NllGrad> mode_grads;  // zero-filled except selected_mode
};
WtaResult wta_loss(const MultiModalPrediction& pred, const MatX2& gt,
                   bool with_grads = false);

/// Index of the mode minimizing the mean per-step L2 distance of means to
/// the ground truth; ties resolve to the lowest index.
int closest_mode(const MultiModalPrediction& pred, const MatX2& gt);

}  // namespace lanefuse
