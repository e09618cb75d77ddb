#pragma once

#include "evhier/model/sensorimotor.hpp"
#include "evhier/numcore/adam.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace evhier::model {

struct TrainConfig {
  LossWeights weights;
  numcore::AdamConfig adam;  // lr 5e-4, eps 1e-4, clip 0.1
  int batch_size = 192;
  int max_epochs = 200;
  /// Stop after this many epochs without a better held-out loss; 0 disables.
  int patience = 20;
  /// Write a checkpoint every N epochs (and at epoch 0); 0 disables.
  int checkpoint_every = 10;
  std::uint64_t seed = 0;
  double mask_sigma = 0.05;
};

/// One row of the learning-curve CSV. MSEs are per entry of the predicted
/// mean; NLLs are per predicted step, summed over dims.
struct EpochMetrics {
  int epoch = 0;
  double obs_mse = 0.0;
  double act_mse = 0.0;
  double gate_open_rate = 0.0;
  double nll_obs = 0.0;
  double nll_act = 0.0;
  /// Plain Gaussian NLL of obs + act per episode. The beta-NLL is not
  /// comparable across epochs because its scale follows the variances.
  double test_loss = 0.0;
};

/// Held-out evaluation over `indices`, in fixed chunks. In gaze mode the
/// masking noise comes from a stream seeded with `mask_seed`.
EpochMetrics evaluate(const SensorimotorModel& model, std::span<const env::Episode> episodes,
                      std::span<const std::size_t> indices, const LossWeights& weights, std::uint64_t mask_seed,
                      double mask_sigma = 0.05);

struct TrainResult {
  std::vector<EpochMetrics> curve;  // epoch 0 is the untrained model
  std::vector<std::filesystem::path> checkpoints;
  int epochs_run = 0;
  bool stopped_early = false;
};

/// Minibatch BPTT with Adam. The model is trained in place and the final
/// model is kept. If `checkpoint_dir` is set, checkpoints
/// `fim_epoch_NNNN.bin` are written there.
TrainResult train_fim(SensorimotorModel& model, std::span<const env::Episode> train,
                      std::span<const env::Episode> test, const TrainConfig& config,
                      const std::optional<std::filesystem::path>& checkpoint_dir = std::nullopt,
                      const std::function<void(const EpochMetrics&)>& on_epoch = {});

void write_learning_curve(const std::filesystem::path& path, std::span<const EpochMetrics> curve);
std::vector<EpochMetrics> read_learning_curve(const std::filesystem::path& path);

}  // namespace evhier::model
