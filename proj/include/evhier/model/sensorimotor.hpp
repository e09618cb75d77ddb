#pragma once

#include "evhier/cell/recurrent_cell.hpp"
#include "evhier/env/scripted_env.hpp"
#include "evhier/numcore/adam.hpp"
#include "evhier/numcore/layers.hpp"

#include "json.hpp"

#include <filesystem>
#include <memory>
#include <span>
#include <vector>

namespace evhier::model {

using numcore::GaussianBatch;

struct ModelConfig {
  cell::CellType cell_type = cell::CellType::gatel0rd;
  /// 16 for the gated cell, 32 for the GRU ablation.
  Index latent_width = 16;
  bool gaze_mode = false;
  /// Feature layers of f_init, f_FM and f_IM (tanh).
  std::vector<Index> feature_widths = {64, 32, 16};
  /// Hidden layers of the cell's r and g subnetworks (their last layer is latent_width).
  std::vector<Index> cell_hidden_widths = {64, 32};
  Index cell_output_width = 16;
  Index multiplicative_width = 16;
  /// Std of the Gaussian noise added to gate pre-activations while training.
  double gate_noise = 0.1;
  /// Constant added to the predicted variances of both heads.
  double min_variance = 1e-5;
  /// Keep the variance readouts from back-propagating into the shared
  /// features; only the mean path shapes them.
  bool detach_variance = true;
  /// Initial offset of the variance readout bias (ELU + 1 of -4 is about 0.018).
  double variance_bias_init = -4.0;

  Index obs_width() const { return env::kObsDim; }
  Index act_width() const { return env::kActDim; }
  Index focus_width() const { return gaze_mode ? env::kFocusDim : 0; }
  Index input_width() const { return obs_width() + act_width() + focus_width(); }

  static ModelConfig for_cell(cell::CellType type, bool gaze_mode = false);
  void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

/// Time-major minibatch: entry t of each vector holds step t of every
/// episode, one column per episode.
struct Batch {
  std::vector<Matrix> obs_in;    // observation fed to the model (masked in gaze mode)
  std::vector<Matrix> obs_true;  // ground-truth observation (prediction target)
  std::vector<Matrix> act;
  std::vector<Matrix> focus;     // empty unless gaze mode

  int steps() const { return static_cast<int>(obs_true.size()); }
  Index size() const { return obs_true.empty() ? 0 : obs_true.front().cols(); }
  bool has_focus() const { return !focus.empty(); }
};

/// Builds a batch from episodes[indices]. In gaze mode observations are
/// masked by each episode's attention sequence with noise from `mask_rng`.
Batch make_batch(std::span<const env::Episode> episodes, std::span<const std::size_t> indices, bool gaze_mode,
                 Rng* mask_rng, double mask_sigma = 0.05);

/// Penalty per open gate entry and step for lambda = 1. With this unit
/// lambda = 1 opens about 1e-2 of the gate entries at desk scale.
inline constexpr double kGatePenaltyUnit = 0.2;

struct LossWeights {
  double lambda = 1.0;
  double beta = 0.5;
};

/// Unrolled, teacher-forced pass over a batch. Losses are averaged over the
/// batch and summed over steps and dims.
struct ModelRollout {
  Matrix h0;
  std::vector<Matrix> latents;  // h_t after consuming step t
  std::vector<Matrix> gates;
  std::vector<Matrix> outputs;
  std::vector<GaussianBatch> obs_pred;  // step t predicts obs t+1 (t < T-1)
  std::vector<GaussianBatch> act_pred;  // step t predicts act t+1 (t < T-1)

  double obs_loss = 0.0;   // beta-NLL
  double act_loss = 0.0;
  double reg_loss = 0.0;   // lambda * kGatePenaltyUnit * open gates
  double total_loss() const { return obs_loss + act_loss + reg_loss; }

  // Evaluation statistics, summed over the batch.
  double open_gates = 0.0;
  double gate_entries = 0.0;
  double obs_sq_err = 0.0;
  double act_sq_err = 0.0;
  double obs_nll = 0.0;  // plain Gaussian NLL
  double act_nll = 0.0;
  double pred_steps = 0.0;  // (T-1) * B
};

/// Forward model, inverse model and initializer around a recurrent cell.
class SensorimotorModel {
 public:
  explicit SensorimotorModel(ModelConfig config);
  SensorimotorModel(const SensorimotorModel& other);
  SensorimotorModel& operator=(const SensorimotorModel& other);
  SensorimotorModel(SensorimotorModel&&) noexcept = default;
  SensorimotorModel& operator=(SensorimotorModel&&) noexcept = default;

  const ModelConfig& config() const { return config_; }
  cell::RecurrentCell& cell() { return *cell_; }
  const cell::RecurrentCell& cell() const { return *cell_; }

  void initialize(Rng& rng);
  numcore::ParamRefs parameters();

  /// Cell input [obs; act; focus].
  Matrix cell_input(const Matrix& obs, const Matrix& act, const Matrix* focus) const;

  /// h_0 = f_init(x_1).
  Matrix init_latent(const Matrix& first_input) const;
  cell::StepOutput step(const Matrix& x, const Matrix& h_prev) const;
  /// N(obs + mu_delta, var) over the next observation.
  GaussianBatch predict_observation(const Matrix& cell_output, const Matrix& obs) const;
  /// Distribution over the next action from the next observation and the latent.
  GaussianBatch predict_action(const Matrix& next_obs, const Matrix* next_focus, const Matrix& latent) const;

  /// Forward pass only.
  ModelRollout rollout(const Batch& batch, const LossWeights& weights) const;

  /// Forward + BPTT. Zeroes and fills parameter gradients for the
  /// batch-averaged loss. Gate noise is drawn from `gate_noise_rng` when
  /// non-null and the configured noise is positive.
  ModelRollout accumulate_gradients(const Batch& batch, const LossWeights& weights, Rng* gate_noise_rng);

  nlohmann::json metadata() const;

 private:
  struct Tape;
  ModelRollout forward(const Batch& batch, const LossWeights& weights, Rng* gate_noise_rng, Tape* tape) const;
  void backward(const Batch& batch, const LossWeights& weights, Tape& tape);

  ModelConfig config_;
  numcore::Mlp init_net_;
  std::unique_ptr<cell::RecurrentCell> cell_;
  numcore::Mlp fm_body_;
  numcore::GaussianHead fm_head_;
  numcore::MultiplicativeLayer im_mult_;
  numcore::Mlp im_body_;
  numcore::GaussianHead im_head_;
};

void save_model(const std::filesystem::path& path, SensorimotorModel& model, const numcore::Adam* optimizer = nullptr);
SensorimotorModel load_model(const std::filesystem::path& path);

}  // namespace evhier::model
