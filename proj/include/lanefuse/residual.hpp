#pragma once

#include "lanefuse/mlp.hpp"
#include "lanefuse/types.hpp"

#include <vector>

namespace lanefuse {

/// Coordinate frame anchored at the ego's last observed pose. All network
/// inputs are normalized into it; residual outputs live in it until they
/// are rotated back to the world frame.
struct EgoFrame {
  Vec2 origin = Vec2::Zero();
  double heading = 0.0;  // (-pi, pi]

  Vec2 to_ego(const Vec2& world) const;
  Vec2 to_world(const Vec2& ego) const;
  MatX2 rows_to_ego(const MatX2& world) const;
  MatX2 rows_to_world(const MatX2& ego) const;
};

EgoFrame make_ego_frame(const AgentHistory& ego);

struct NormalizedScene {
  EgoFrame frame;
  MatX2 ego_history;                   // t_obs x 2, ego frame
  std::vector<MatX2> other_histories;  // each t_obs x 2, ego frame
  std::vector<std::int64_t> other_ids;
};

NormalizedScene to_ego_frame(const ScenarioState& state);

/// Up to k_front agents ahead of the ego (longitudinal coordinate >= 0),
/// nearest first. Absent slots are zero-filled with mask 0.
struct InteractionSet {
  MatX slot_inputs;  // k_front x (2 * t_obs)
  VecX mask;         // k_front
  std::vector<std::int64_t> agent_ids;  // ids of the retained agents
};

InteractionSet preprocess_interactions(const NormalizedScene& scene, int k_front);

/// Residual mean and variance per step, in the ego frame. Means are bounded
/// by the scene's confinement parameter when the model is confined.
struct ResidualDistribution {
  MatX2 means;      // |component| <= C when confined
  MatX2 variances;  // clamped to [kVarianceFloor, kVarianceCeil]
};

enum class ModelKind {
  kResidualCorrection,  // outputs a correction added to the lane prediction
  kDirectRegression,    // plain encoder-decoder, outputs the trajectory itself
};

struct ModelArch {
  int t_obs = kObsLen;
  int t_pred = kPredLen;
  int k_front = 3;
  bool confine = true;  // tanh * C bound on residual means
  std::vector<int> encoder_hidden = {32, 32, 64};  // history & interaction
  std::vector<int> kd_encoder_hidden = {32, 64};
  std::vector<int> decoder_hidden = {256, 128, 128, 64};

  int history_input() const { return 2 * t_obs; }
  int interaction_input() const { return k_front * 2 * t_obs + k_front; }
  int kd_input() const { return 2 * t_pred; }
  int feature_size() const { return encoder_hidden.back(); }
  int decoder_output() const { return 4 * t_pred; }
};

/// Shared history/interaction encoders, a lane-prediction encoder for the
/// correction model, and one decoder per prediction mode.
struct ResidualModel {
  ModelKind kind = ModelKind::kResidualCorrection;
  ModelArch arch;
  MlpBundle hist_enc;
  MlpBundle int_enc;
  MlpBundle kd_enc;                 // unused for kDirectRegression
  std::vector<MlpBundle> decoders;  // one per mode

  int modes() const { return static_cast<int>(decoders.size()); }
};

ResidualModel make_model(ModelKind kind, const ModelArch& arch, int modes,
                         std::uint64_t seed);

VecX flatten_history(const MatX2& history);
VecX flatten_interactions(const InteractionSet& ia);

/// Forward activations of one scenario through the model, retained for the
/// backward pass.
struct ModelForward {
  NormalizedScene scene;
  InteractionSet interactions;
  VecX hist_in, int_in;
  ForwardTape hist_tape, int_tape;
  VecX e_hist, e_int;
  double confinement_c = 1.0;

  struct ModeForward {
    VecX kd_in;  // normalized lane prediction (correction model only)
    ForwardTape kd_tape;
    VecX e_kd;
    VecX features;
    ForwardTape dec_tape;
    VecX raw;  // decoder output, [mean raw | log-variance raw]
    ResidualDistribution dist;  // ego frame
    MatX2 means_world;          // offsets (correction) or positions (direct)
    MatX2 variances_world;
  };
  std::vector<ModeForward> modes;
};

/// Run encoders once and each mode's decoder. For the correction model,
/// kd_means_world carries one lane prediction per mode; means_world are
/// world-frame correction offsets. For direct regression kd_means_world is
/// ignored and means_world are absolute world positions.
ModelForward model_forward(const ResidualModel& model, const ScenarioState& state,
                           const std::vector<MatX2>& kd_means_world,
                           double confinement_c);

/// Backpropagate world-frame gradients of one mode through heads, decoder
/// and encoders, accumulating parameter gradients.
void model_backward(ResidualModel& model, const ModelForward& fwd, int mode,
                    const MatX2& grad_means_world, const MatX2& grad_vars_world);

/// Standalone head application used by tests: split a raw decoder output
/// into a confined residual distribution.
ResidualDistribution decode_heads(const VecX& raw, int t_pred, double confinement_c,
                                  bool confine);

}  // namespace lanefuse
