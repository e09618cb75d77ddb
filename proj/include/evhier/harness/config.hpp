#pragma once

#include "evhier/common.hpp"

#include "json.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace evhier::harness {

struct DataConfig {
  int n_episodes = 2000;
  double train_fraction = 0.9;
  std::array<double, 3> mix = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
};

struct FimConfig {
  /// One gated run per value; the first feeds nothing special.
  std::vector<double> lambdas = {0.0, 1.0, 5.0, 10.0};
  bool include_gru = true;
  double beta = 0.5;
  double lr = 5e-4;
  int batch_size = 192;
  int max_epochs = 200;
  int patience = 20;
  int checkpoint_every = 10;
};

struct SkipStageConfig {
  /// Which gated run feeds segmentation and the skip network.
  double lambda = 1.0;
  double lr = 1e-4;
  int batch_size = 192;
  int epochs = 100;
  int probe_every = 10;
  int segmentation_tolerance = 2;
};

struct GazeStageConfig {
  bool enabled = true;
  double lambda = 1.0;
  int n_episodes = 2000;
  int fim_epochs = 200;
  int checkpoint_every = 10;
  /// FIM epochs at which a skip network is trained and gaze is evaluated.
  std::vector<int> eval_epochs = {0, 50, 100, 200};
  int skip_epochs = 50;
  /// Held-out episodes per type (reach-grasp-transport, pointing) for gaze runs.
  int eval_episodes = 100;
  std::vector<Index> relevant_dims = {0, 1, 2};
  double mask_sigma = 0.05;
};

/// One experiment: every stage for every seed.
struct ExperimentConfig {
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  DataConfig data;
  FimConfig fim;
  SkipStageConfig skip;
  GazeStageConfig gaze;
  std::filesystem::path output_dir = "runs/desk";

  void validate() const;
  /// Hash of everything that affects results (output_dir excluded), as 16 hex digits.
  std::string hash() const;
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);

ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const ExperimentConfig& c);

/// FNV-1a 64 over bytes, as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view bytes);

/// Name of a FIM run directory: "lambda_1", "lambda_0.5", "gru".
std::string fim_run_name(bool gru, double lambda);

}  // namespace evhier::harness
