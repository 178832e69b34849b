#include "lanefuse/fusion.hpp"

#include "lanefuse/kd.hpp"

#include <algorithm>
#include <cmath>

namespace lanefuse {

FusionMode fusion_mode_from_string(const std::string& name) {
  if (name == "ivw") return FusionMode::kIvw;
  if (name == "simple_add") return FusionMode::kSimpleAdd;
  if (name == "vi_independent") return FusionMode::kViIndependent;
  if (name == "vi_fixed") return FusionMode::kViFixed;
  throw std::runtime_error("unknown fusion mode: " + name);
}

std::string to_string(FusionMode mode) {
  switch (mode) {
    case FusionMode::kIvw: return "ivw";
    case FusionMode::kSimpleAdd: return "simple_add";
    case FusionMode::kViIndependent: return "vi_independent";
    case FusionMode::kViFixed: return "vi_fixed";
  }
  return "?";
}

IvwWeights ivw_weights(double var_a, double var_b, double cov) {
  const double denom = var_a + var_b - 2.0 * cov;
  if (std::abs(denom) <= 1e-12) {
    throw DegenerateFusionError("ivw_weights: degenerate denominator");
  }
  IvwWeights out;
  const double w_raw = (var_b - cov) / denom;
  out.w = std::clamp(w_raw, 0.0, 1.0);
  out.clamped = out.w != w_raw;
  out.w_tilde = 1.0 - out.w;  // exact by construction
  return out;
}

double merged_variance(double var_a, double var_b, double cov, double w,
                       double w_tilde) {
  const double v = w * w * var_a + w_tilde * w_tilde * var_b + 2.0 * w * w_tilde * cov;
  return std::max(v, kVarianceFloor);
}

namespace {

struct ModePolicy {
  bool simple_add = false;
  bool fixed_kd = false;
  double sigma_cross = 0.0;
};

ModePolicy policy_for(const FusionConfig& cfg) {
  ModePolicy p;
  switch (cfg.mode) {
    case FusionMode::kIvw:
      p.sigma_cross = cfg.sigma_cross;
      break;
    case FusionMode::kSimpleAdd:
      p.simple_add = true;
      break;
    case FusionMode::kViIndependent:
      break;  // independent estimates: zero cross-covariance
    case FusionMode::kViFixed:
      p.fixed_kd = true;
      break;
  }
  return p;
}

}  // namespace

FusionResult fuse(const GaussianTrajectory& kd, const MatX2& res_means,
                  const MatX2& res_variances, const FusionConfig& cfg) {
  const int steps = kd.steps();
  if (res_means.rows() != steps || res_variances.rows() != steps) {
    throw std::runtime_error("fuse: step count mismatch");
  }
  const ModePolicy pol = policy_for(cfg);

  FusionResult out;
  out.fused.means.resize(steps, 2);
  out.fused.variances.resize(steps, 2);
  out.w.resize(steps, 2);
  out.w_tilde.resize(steps, 2);
  out.var_floored = MatX2::Zero(steps, 2);
  out.degenerate = MatX2::Zero(steps, 2);

  for (int j = 0; j < steps; ++j) {
    for (int a = 0; a < 2; ++a) {
      const double var_kd = pol.fixed_kd ? cfg.fixed_kd_variance : kd.variances(j, a);
      const double var_ad = res_variances(j, a);
      double w, w_tilde;
      if (pol.simple_add) {
        w = 0.0;
        w_tilde = 1.0;
      } else {
        const double denom = var_ad + var_kd - 2.0 * pol.sigma_cross;
        if (std::abs(denom) <= 1e-12) {
          // Degenerate fusion: keep the lane prediction unchanged.
          out.degenerate(j, a) = 1.0;
          ++out.degenerate_count;
          w = 1.0;
          w_tilde = 0.0;
        } else {
          const IvwWeights iw = ivw_weights(var_kd, var_ad, pol.sigma_cross);
          w = iw.w;
          w_tilde = iw.w_tilde;
        }
      }
      out.w(j, a) = w;
      out.w_tilde(j, a) = w_tilde;
      out.fused.means(j, a) = kd.means(j, a) + w_tilde * res_means(j, a);
      if (out.degenerate(j, a) != 0.0) {
        out.fused.variances(j, a) = std::max(var_kd, kVarianceFloor);
      } else {
        const double v = merged_variance(var_kd, var_ad, pol.sigma_cross, w, w_tilde);
        out.fused.variances(j, a) = v;
        if (v == kVarianceFloor) out.var_floored(j, a) = 1.0;
      }
    }
  }
  return out;
}

FusionGrad fuse_backward(const GaussianTrajectory& kd, const MatX2& res_means,
                         const MatX2& res_variances, const FusionConfig& cfg,
                         const FusionResult& result, const MatX2& g_means,
                         const MatX2& g_variances) {
  const int steps = kd.steps();
  const ModePolicy pol = policy_for(cfg);

  FusionGrad grad;
  grad.d_res_means = MatX2::Zero(steps, 2);
  grad.d_res_variances = MatX2::Zero(steps, 2);

  for (int j = 0; j < steps; ++j) {
    for (int a = 0; a < 2; ++a) {
      const double w = result.w(j, a);
      const double wt = result.w_tilde(j, a);
      grad.d_res_means(j, a) = wt * g_means(j, a);
      if (result.degenerate(j, a) != 0.0) continue;

      const double var_kd = pol.fixed_kd ? cfg.fixed_kd_variance : kd.variances(j, a);
      const double var_ad = res_variances(j, a);
      const double c = pol.sigma_cross;

      // d w_tilde / d var_ad; zero where the closed form was clamped or in
      // the simple-add mode, where the weights are constants.
      double beta = 0.0;
      if (!pol.simple_add) {
        const double denom = var_ad + var_kd - 2.0 * c;
        const double w_raw = (var_ad - c) / denom;
        const bool clamped = w_raw < 0.0 || w_raw > 1.0;
        if (!clamped) beta = (var_kd - c) / (denom * denom);  // = dw/dvar_ad
      }
      // The fused mean depends on var_ad through w_tilde.
      grad.d_res_variances(j, a) += g_means(j, a) * res_means(j, a) * (-beta);

      if (result.var_floored(j, a) != 0.0) continue;
      // d var_ref / d var_ad through both the direct term and the weights.
      const double direct = wt * wt;
      const double through_w =
          2.0 * beta * (w * var_kd - wt * var_ad + c * (wt - w));
      grad.d_res_variances(j, a) += g_variances(j, a) * (direct + through_w);
    }
  }
  return grad;
}

}  // namespace lanefuse
