#include "lanefuse/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace lanefuse {

MultiModalPrediction MultiModalPrediction::Uniform(std::vector<GaussianTrajectory> m) {
  MultiModalPrediction p;
  p.probabilities = VecX::Constant(static_cast<Eigen::Index>(m.size()),
                                   1.0 / static_cast<double>(m.size()));
  p.modes = std::move(m);
  return p;
}

double gaussian_nll(const GaussianTrajectory& pred, const MatX2& gt, NllGrad* grad) {
  if (pred.means.rows() != gt.rows()) {
    throw std::runtime_error("gaussian_nll: length mismatch");
  }
  if (grad != nullptr) {
    grad->d_means = MatX2::Zero(gt.rows(), 2);
    grad->d_variances = MatX2::Zero(gt.rows(), 2);
  }
  constexpr double kLog2Pi = 1.8378770664093454836;
  double nll = 0.0;
  for (int j = 0; j < gt.rows(); ++j) {
    for (int a = 0; a < 2; ++a) {
      const double var = pred.variances(j, a);
      if (var <= 0.0) throw std::runtime_error("gaussian_nll: non-positive variance");
      const double diff = gt(j, a) - pred.means(j, a);
      nll += 0.5 * (kLog2Pi + std::log(var) + diff * diff / var);
      if (grad != nullptr) {
        grad->d_means(j, a) = -diff / var;
        grad->d_variances(j, a) = 0.5 * (1.0 / var - diff * diff / (var * var));
      }
    }
  }
  return nll;
}

int closest_mode(const MultiModalPrediction& pred, const MatX2& gt) {
  int best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (int m = 0; m < pred.mode_count(); ++m) {
    const MatX2 diff = pred.modes[static_cast<std::size_t>(m)].means - gt;
    const double dist = diff.rowwise().norm().mean();
    if (dist < best_dist) {
      best_dist = dist;
      best = m;
    }
  }
  return best;
}

WtaResult wta_loss(const MultiModalPrediction& pred, const MatX2& gt,
                   bool with_grads) {
  if (pred.mode_count() < 1) throw std::runtime_error("wta_loss: no modes");
  WtaResult out;
  out.selected_mode = closest_mode(pred, gt);
  if (with_grads) {
    out.mode_grads.resize(static_cast<std::size_t>(pred.mode_count()));
    for (int m = 0; m < pred.mode_count(); ++m) {
      out.mode_grads[static_cast<std::size_t>(m)].d_means = MatX2::Zero(gt.rows(), 2);
      out.mode_grads[static_cast<std::size_t>(m)].d_variances = MatX2::Zero(gt.rows(), 2);
    }
    out.loss = gaussian_nll(pred.modes[static_cast<std::size_t>(out.selected_mode)], gt,
                            &out.mode_grads[static_cast<std::size_t>(out.selected_mode)]);
  } else {
    out.loss = gaussian_nll(pred.modes[static_cast<std::size_t>(out.selected_mode)], gt);
  }
  return out;
}

}  // namespace lanefuse
