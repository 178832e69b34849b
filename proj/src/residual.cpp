#include "lanefuse/residual.hpp"

#include "lanefuse/kd.hpp"
#include "lanefuse/scene.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lanefuse {

Vec2 EgoFrame::to_ego(const Vec2& world) const {
  const double c = std::cos(-heading);
  const double s = std::sin(-heading);
  const Vec2 d = world - origin;
  return Vec2(c * d.x() - s * d.y(), s * d.x() + c * d.y());
}

Vec2 EgoFrame::to_world(const Vec2& ego) const {
  const double c = std::cos(heading);
  const double s = std::sin(heading);
  return origin + Vec2(c * ego.x() - s * ego.y(), s * ego.x() + c * ego.y());
}

MatX2 EgoFrame::rows_to_ego(const MatX2& world) const {
  MatX2 shifted = world;
  shifted.col(0).array() -= origin.x();
  shifted.col(1).array() -= origin.y();
  return rotate_rows(shifted, -heading);
}

MatX2 EgoFrame::rows_to_world(const MatX2& ego) const {
  MatX2 out = rotate_rows(ego, heading);
  out.col(0).array() += origin.x();
  out.col(1).array() += origin.y();
  return out;
}

EgoFrame make_ego_frame(const AgentHistory& ego) {
  EgoFrame f;
  f.origin = ego.position(ego.size() - 1);
  f.heading = ego_heading(ego);
  return f;
}

NormalizedScene to_ego_frame(const ScenarioState& state) {
  NormalizedScene out;
  out.frame = make_ego_frame(state.ego);
  out.ego_history = out.frame.rows_to_ego(state.ego.positions());
  for (const auto& other : state.others) {
    out.other_histories.push_back(out.frame.rows_to_ego(other.positions()));
    out.other_ids.push_back(other.agent_id);
  }
  return out;
}

InteractionSet preprocess_interactions(const NormalizedScene& scene, int k_front) {
  const int t_obs = static_cast<int>(scene.ego_history.rows());
  struct Candidate {
    double distance;
    std::size_t index;
  };
  std::vector<Candidate> front;
  for (std::size_t i = 0; i < scene.other_histories.size(); ++i) {
    const MatX2& hist = scene.other_histories[i];
    const Vec2 last = hist.row(hist.rows() - 1).transpose();
    if (last.x() < 0.0) continue;  // behind the ego; abeam counts as front
    front.push_back({last.norm(), i});
  }
  std::stable_sort(front.begin(), front.end(),
                   [](const Candidate& a, const Candidate& b) {
                     return a.distance < b.distance;
                   });

  InteractionSet ia;
  ia.slot_inputs = MatX::Zero(k_front, 2 * t_obs);
  ia.mask = VecX::Zero(k_front);
  const int kept = std::min<int>(k_front, static_cast<int>(front.size()));
  for (int s = 0; s < kept; ++s) {
    const MatX2& hist = scene.other_histories[front[static_cast<std::size_t>(s)].index];
    for (int t = 0; t < t_obs; ++t) {
      ia.slot_inputs(s, 2 * t) = hist(t, 0);
      ia.slot_inputs(s, 2 * t + 1) = hist(t, 1);
    }
    ia.mask(s) = 1.0;
    ia.agent_ids.push_back(scene.other_ids[front[static_cast<std::size_t>(s)].index]);
  }
  return ia;
}

ResidualModel make_model(ModelKind kind, const ModelArch& arch, int modes,
                         std::uint64_t seed) {
  if (modes < 1) throw std::runtime_error("make_model: modes must be >= 1");
  ResidualModel m;
  m.kind = kind;
  m.arch = arch;

  auto widths = [](int in, const std::vector<int>& hidden, int out) {
    std::vector<int> w;
    w.push_back(in);
    w.insert(w.end(), hidden.begin(), hidden.end());
    if (out > 0) w.push_back(out);
    return w;
  };

  // The last listed encoder width is the feature itself; no extra head.
  MlpSpec hist_spec{widths(arch.history_input(), arch.encoder_hidden, 0),
                    Activation::kNone};
  MlpSpec int_spec{widths(arch.interaction_input(), arch.encoder_hidden, 0),
                   Activation::kNone};
  m.hist_enc = init_params(hist_spec, stable_hash(seed ^ 0x68697374ull));
  m.int_enc = init_params(int_spec, stable_hash(seed ^ 0x696e7472ull));

  int feature_total = 2 * arch.feature_size();
  if (kind == ModelKind::kResidualCorrection) {
    MlpSpec kd_spec{widths(arch.kd_input(), arch.kd_encoder_hidden, 0),
                    Activation::kNone};
    m.kd_enc = init_params(kd_spec, stable_hash(seed ^ 0x6b642020ull));
    feature_total += arch.kd_encoder_hidden.back();
  }

  MlpSpec dec_spec{widths(feature_total, arch.decoder_hidden, arch.decoder_output()),
                   Activation::kNone};
  for (int mode = 0; mode < modes; ++mode) {
    m.decoders.push_back(
        init_params(dec_spec, stable_hash(seed ^ (0xdec0ull + static_cast<std::uint64_t>(mode)))));
  }
  return m;
}

VecX flatten_history(const MatX2& history) {
  VecX v(2 * history.rows());
  for (int t = 0; t < history.rows(); ++t) {
    v(2 * t) = history(t, 0);
    v(2 * t + 1) = history(t, 1);
  }
  return v;
}

VecX flatten_interactions(const InteractionSet& ia) {
  const int k = static_cast<int>(ia.slot_inputs.rows());
  const int per_slot = static_cast<int>(ia.slot_inputs.cols());
  VecX v(k * per_slot + k);
  for (int s = 0; s < k; ++s) {
    v.segment(s * per_slot, per_slot) = ia.slot_inputs.row(s).transpose();
  }
  v.tail(k) = ia.mask;
  return v;
}

ResidualDistribution decode_heads(const VecX& raw, int t_pred, double confinement_c,
                                  bool confine) {
  ResidualDistribution d;
  d.means.resize(t_pred, 2);
  d.variances.resize(t_pred, 2);
  for (int j = 0; j < t_pred; ++j) {
    for (int a = 0; a < 2; ++a) {
      const double m_raw = raw(2 * j + a);
      d.means(j, a) = confine ? confinement_c * std::tanh(m_raw) : m_raw;
      const double lv = raw(2 * t_pred + 2 * j + a);
      d.variances(j, a) =
          std::clamp(std::exp(lv), kVarianceFloor, kVarianceCeil);
    }
  }
  return d;
}

ModelForward model_forward(const ResidualModel& model, const ScenarioState& state,
                           const std::vector<MatX2>& kd_means_world,
                           double confinement_c) {
  const ModelArch& arch = model.arch;
  ModelForward fwd;
  fwd.scene = to_ego_frame(state);
  fwd.interactions = preprocess_interactions(fwd.scene, arch.k_front);
  fwd.hist_in = flatten_history(fwd.scene.ego_history);
  fwd.int_in = flatten_interactions(fwd.interactions);
  fwd.confinement_c = confinement_c;
  fwd.e_hist = mlp_forward(model.hist_enc, fwd.hist_in, &fwd.hist_tape);
  fwd.e_int = mlp_forward(model.int_enc, fwd.int_in, &fwd.int_tape);

  const bool correction = model.kind == ModelKind::kResidualCorrection;
  if (correction && static_cast<int>(kd_means_world.size()) != model.modes()) {
    throw std::runtime_error("model_forward: one lane prediction per mode required");
  }

  for (int mode = 0; mode < model.modes(); ++mode) {
    ModelForward::ModeForward mf;
    if (correction) {
      const MatX2 kd_ego = fwd.scene.frame.rows_to_ego(kd_means_world[static_cast<std::size_t>(mode)]);
      mf.kd_in = flatten_history(kd_ego);
      mf.e_kd = mlp_forward(model.kd_enc, mf.kd_in, &mf.kd_tape);
      mf.features.resize(fwd.e_hist.size() + fwd.e_int.size() + mf.e_kd.size());
      mf.features << fwd.e_hist, fwd.e_int, mf.e_kd;
    } else {
      mf.features.resize(fwd.e_hist.size() + fwd.e_int.size());
      mf.features << fwd.e_hist, fwd.e_int;
    }
    mf.raw = mlp_forward(model.decoders[static_cast<std::size_t>(mode)], mf.features,
                         &mf.dec_tape);
    mf.dist = decode_heads(mf.raw, arch.t_pred, confinement_c,
                           correction && arch.confine);
    if (correction) {
      // Correction offsets rotate with the frame but do not translate.
      mf.means_world = rotate_rows(mf.dist.means, fwd.scene.frame.heading);
    } else {
      mf.means_world = fwd.scene.frame.rows_to_world(mf.dist.means);
    }
    mf.variances_world =
        rotate_diag_variances(mf.dist.variances, fwd.scene.frame.heading);
    fwd.modes.push_back(std::move(mf));
  }
  return fwd;
}

void model_backward(ResidualModel& model, const ModelForward& fwd, int mode,
                    const MatX2& grad_means_world, const MatX2& grad_vars_world) {
  const ModelArch& arch = model.arch;
  const ModelForward::ModeForward& mf = fwd.modes[static_cast<std::size_t>(mode)];
  const double heading = fwd.scene.frame.heading;
  const bool correction = model.kind == ModelKind::kResidualCorrection;

  // World-frame gradients back into the ego frame. The translation part of
  // the direct model has unit Jacobian, so both kinds reduce to rotations;
  // the marginal variance map is symmetric, hence self-transposed.
  const MatX2 g_mu_ego = rotate_rows(grad_means_world, -heading);
  const MatX2 g_var_ego = rotate_diag_variances(grad_vars_world, heading);

  VecX g_raw = VecX::Zero(arch.decoder_output());
  const int t_pred = arch.t_pred;
  for (int j = 0; j < t_pred; ++j) {
    for (int a = 0; a < 2; ++a) {
      const double m_raw = mf.raw(2 * j + a);
      double dmean;
      if (correction && arch.confine) {
        const double th = std::tanh(m_raw);
        dmean = fwd.confinement_c * (1.0 - th * th);
      } else {
        dmean = 1.0;
      }
      g_raw(2 * j + a) = g_mu_ego(j, a) * dmean;

      const double var = mf.dist.variances(j, a);
      const bool clamped = var <= kVarianceFloor || var >= kVarianceCeil;
      g_raw(2 * t_pred + 2 * j + a) = clamped ? 0.0 : g_var_ego(j, a) * var;
    }
  }

  const VecX g_features = mlp_backward(model.decoders[static_cast<std::size_t>(mode)],
                                       mf.dec_tape, g_raw);
  const int f = arch.feature_size();
  mlp_backward(model.hist_enc, fwd.hist_tape, g_features.segment(0, f));
  mlp_backward(model.int_enc, fwd.int_tape, g_features.segment(f, f));
  if (correction) {
    const int kd_f = arch.kd_encoder_hidden.back();
    mlp_backward(model.kd_enc, mf.kd_tape, g_features.segment(2 * f, kd_f));
  }
}

}  // namespace lanefuse
