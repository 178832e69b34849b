#pragma once

#include "lanefuse/fusion.hpp"
#include "lanefuse/kd.hpp"
#include "lanefuse/losses.hpp"
#include "lanefuse/residual.hpp"
#include "lanefuse/scene_io.hpp"

#include <string>
#include <vector>

namespace lanefuse {

struct TrainConfig {
  int epochs = 50;
  int batch_size = 32;
  double learning_rate = 1e-3;
  int lr_halving_period = 10;  // epochs between halvings
  std::uint64_t seed = 0;
};

/// Learning rate at a zero-based epoch index: halved every
/// lr_halving_period epochs.
double scheduled_lr(const TrainConfig& cfg, int epoch);

enum class SplitMode { kSceneOverfit, kSceneGeneralization };
SplitMode split_mode_from_string(const std::string& name);

struct DataSplit {
  std::vector<const ScenarioState*> train;
  std::vector<const ScenarioState*> test;
};

/// kSceneOverfit: 80/20 by a stable hash of the scenario id.
/// kSceneGeneralization: the held-out category becomes the test set.
DataSplit split_dataset(const std::vector<ScenarioState>& states, SplitMode mode,
                        const std::string& holdout_category);

/// Knowledge-driven predictor selected by name: lin | cv | kd1 | kd2.
GaussianTrajectory predict_kd_by_name(const std::string& name,
                                      const ScenarioState& state,
                                      const KdVariancePrior& prior,
                                      const KdParams& params);

/// Lane predictions for a multi-mode model: branch enumeration for kd1/kd2,
/// repeated single predictions otherwise; padded by repeating the first
/// mode when fewer branches exist than modes.
std::vector<GaussianTrajectory> kd_modes_by_name(const std::string& name,
                                                 const ScenarioState& state,
                                                 int modes,
                                                 const KdVariancePrior& prior,
                                                 const KdParams& params);

struct ModelSelections {
  ModelKind kind = ModelKind::kResidualCorrection;
  std::string kd_name = "kd1";
  FusionConfig fusion;
  KdParams kd_params;
  ModelArch arch;
  int modes = 1;
  std::uint64_t init_seed = 0;
};

/// A trained pipeline: the network, its selections and the fitted
/// lane-prediction variance prior.
struct PipelineModel {
  ModelSelections sel;
  ResidualModel model;
  KdVariancePrior prior;
};

struct TrainOutput {
  PipelineModel pipeline;
  std::vector<double> epoch_losses;
};

/// Fit the variance prior on the training set, then run seeded mini-batch
/// training of the winner-takes-all likelihood loss.
TrainOutput train_model(const std::vector<const ScenarioState*>& train_set,
                        const ModelSelections& sel, const TrainConfig& cfg);

/// Full-pipeline prediction with this model: lane modes, learned
/// correction, fusion (or direct regression), uniform mode probabilities.
/// kd_override swaps the lane predictor without retraining.
MultiModalPrediction model_predict(const PipelineModel& pm, const ScenarioState& state,
                                   const std::string& kd_override = "");

void save_pipeline(const std::string& path, const PipelineModel& pm);
PipelineModel load_pipeline(const std::string& path);

void write_loss_curve_csv(const std::string& path, const std::vector<double>& losses);

}  // namespace lanefuse
