#pragma once

#include "lanefuse/types.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace lanefuse {

enum class Activation { kNone, kTanh };

struct MlpSpec {
  std::vector<int> layer_widths;  // input width, hidden widths..., output width
  Activation output_activation = Activation::kNone;

  int input_size() const { return layer_widths.front(); }
  int output_size() const { return layer_widths.back(); }
};

struct MlpLayer {
  MatX w;   // out x in
  VecX b;
  MatX gw;  // gradient accumulators, same shapes
  VecX gb;
  MatX mw, vw;  // adaptive-moment buffers
  VecX mb, vb;
};

/// Parameters + gradient and optimizer state of one feed-forward network.
/// `revision` increments on every parameter update so a tape recorded
/// before an update is rejected by mlp_backward.
struct MlpBundle {
  MlpSpec spec;
  std::uint64_t seed = 0;
  std::vector<MlpLayer> layers;
  std::int64_t adam_steps = 0;
  std::uint64_t revision = 0;

  void zero_gradients();
  double gradient_norm() const;
  double parameter_norm() const;
  std::int64_t parameter_count() const;
  bool all_finite() const;
};

/// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero; deterministic
/// in (spec, seed).
MlpBundle init_params(const MlpSpec& spec, std::uint64_t seed);

/// Activation record of one forward pass, consumed by mlp_backward.
struct ForwardTape {
  VecX input;
  std::vector<VecX> pre;   // pre-activation per layer
  std::vector<VecX> post;  // post-activation per layer
  std::uint64_t revision = 0;
};

/// Affine + ReLU per hidden layer; output activation per spec.
VecX mlp_forward(const MlpBundle& net, const VecX& input, ForwardTape* tape = nullptr);

/// Reverse-mode gradients; accumulates into the bundle's gradient buffers
/// and returns the gradient with respect to the input.
VecX mlp_backward(MlpBundle& net, const ForwardTape& tape, const VecX& output_grad);

/// Adaptive-moment update (beta1 0.9, beta2 0.999, eps 1e-8, bias
/// correction). Clears gradients; throws if any parameter turns non-finite.
void adam_step(MlpBundle& net, double lr);

/// Named-bundle checkpoint file with a free-form metadata string. The
/// round trip is bit-exact. Version or truncation problems raise errors
/// that name the failure.
void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, const MlpBundle*>>& bundles,
                     const std::string& meta);

struct CheckpointData {
  std::map<std::string, MlpBundle> bundles;
  std::string meta;
};
CheckpointData load_checkpoint(const std::string& path);

}  // namespace lanefuse
