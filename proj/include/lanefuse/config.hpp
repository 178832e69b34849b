#pragma once

#include "lanefuse/mpc.hpp"
#include "lanefuse/synthetic.hpp"
#include "lanefuse/train.hpp"

#include <map>
#include <string>
#include <vector>

namespace lanefuse {

/// Run configuration: JSON file with flag overrides (flags win). Unknown
/// keys are rejected so typos fail loudly.
struct RunConfig {
  std::uint64_t seed = 7;
  std::string output_dir = "out";

  // dataset
  std::string dataset_source = "synthetic";  // synthetic | csv
  std::string dataset_dir;                   // default: <output_dir>/data
  std::vector<std::pair<std::string, int>> templates = {
      {"straight", 80}, {"t_intersection", 80}, {"curve", 80}};
  SyntheticSpec synthetic;
  std::string csv_map_file;
  std::vector<std::string> csv_track_files;

  // split
  SplitMode split_mode = SplitMode::kSceneGeneralization;
  std::string holdout_category = "curve";

  ModelSelections selections;
  TrainConfig train;
  MpcConfig mpc;

  // eval
  std::vector<std::string> pipelines = {"lin", "cv", "kd1", "kd2"};
  int jobs = 1;
  bool use_mpc = true;
  double vi_fixed_variance = 1.0;

  std::string resolved_dataset_dir() const {
    return dataset_dir.empty() ? output_dir + "/data" : dataset_dir;
  }
};

RunConfig load_run_config(const std::string& path);

/// Generate the configured synthetic dataset on disk (map document, one
/// track CSV per scene, manifest). Returns (scenes, states) counts.
std::pair<int, int> generate_dataset_files(const RunConfig& cfg,
                                           const std::string& dir);

}  // namespace lanefuse
