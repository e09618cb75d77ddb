#pragma once

#include "evhier/env/scripted_env.hpp"
#include "evhier/model/sensorimotor.hpp"
#include "evhier/numcore/adam.hpp"
#include "evhier/numcore/layers.hpp"

#include "json.hpp"

#include <array>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

namespace evhier::skip {

/// Skip-network samples in column form. Column k pairs the input
/// (o_t, h_t[, focus_t]) of step `step[k]` with the clean observation at
/// `target_step[k]`, the next boundary after it. Steps are 1-based.
struct SkipDataset {
  Matrix obs;     // kObsDim x N, as the model saw it (masked in gaze mode)
  Matrix latent;  // H x N
  Matrix focus;   // kFocusDim x N, or 0 x N
  Matrix target;  // kObsDim x N
  std::vector<std::uint64_t> episode;
  std::vector<int> step;
  std::vector<int> target_step;

  std::size_t size() const { return step.size(); }
  bool has_focus() const { return focus.rows() > 0; }
};

/// Per-episode rollout of a frozen model (no gate noise). `obs_in` is the
/// observation sequence fed to the model.
struct EpisodeTrace {
  Matrix obs_in;   // kObsDim x T
  Matrix latents;  // H x T, column t-1 is h_t
  Matrix gates;    // H x T
  std::vector<int> boundaries;
};

/// Rolls episodes through the model in fixed chunks. In gaze mode each
/// episode is masked with noise seeded from (mask_seed, episode id).
std::vector<EpisodeTrace> trace_episodes(const model::SensorimotorModel& model, std::span<const env::Episode> episodes,
                                         std::uint64_t mask_seed, double mask_sigma = 0.05);

/// One sample per step t < T with target o_{next_boundary(t)}. In gaze mode
/// the episode's attention focus is part of the input.
SkipDataset build_skip_dataset(std::span<const env::Episode> episodes, std::span<const EpisodeTrace> traces,
                               bool gaze_mode);

void write_skip_dataset(const std::filesystem::path& path, const SkipDataset& data);
SkipDataset read_skip_dataset(const std::filesystem::path& path);

struct SkipConfig {
  Index latent_width = 16;
  bool gaze_mode = false;
  std::vector<Index> widths = {512, 256, 128, 64, 32};
  double min_variance = 1e-5;
  bool detach_variance = true;
  double variance_bias_init = -4.0;

  Index input_width() const { return env::kObsDim + latent_width + (gaze_mode ? env::kFocusDim : 0); }
  void validate() const;
};

void to_json(nlohmann::json& j, const SkipConfig& c);
void from_json(const nlohmann::json& j, SkipConfig& c);

/// Deep MLP with a Gaussian head over the observation at the next boundary.
class SkipNetwork {
 public:
  explicit SkipNetwork(SkipConfig config);

  const SkipConfig& config() const { return config_; }
  void initialize(Rng& rng);
  numcore::ParamRefs parameters();

  Matrix input(const Matrix& obs, const Matrix& latent, const Matrix* focus) const;
  numcore::GaussianBatch forward(const Matrix& input) const;
  /// Zeroes and fills gradients of the batch-averaged beta-NLL; returns the loss.
  double accumulate_gradients(const Matrix& input, const Matrix& target, double beta);

  nlohmann::json metadata() const;

 private:
  SkipConfig config_;
  numcore::Mlp body_;
  numcore::GaussianHead head_;
};

void save_skip(const std::filesystem::path& path, SkipNetwork& net);
SkipNetwork load_skip(const std::filesystem::path& path);

/// Mean distance of a predicted entity position to the current hand,
/// object and goal positions.
struct EntityDistances {
  double hand = 0.0;
  double object = 0.0;
  double goal = 0.0;
  int count = 0;

  double of(env::Entity e) const;
  env::Entity nearest() const;
};

/// Held-out probes of the skip network.
struct SkipProbe {
  /// Predicted hand at query step 2, per episode type.
  std::array<EntityDistances, 3> hand_at_t2;
  /// Predicted object at the first transport step of reach-grasp-transport episodes.
  EntityDistances object_at_grasp;
};

SkipProbe probe_skip(const SkipNetwork& net, std::span<const env::Episode> episodes,
                     std::span<const EpisodeTrace> traces, int query_step = 2);

struct SkipTrainConfig {
  numcore::AdamConfig adam{1e-4, 0.9, 0.999, 1e-4, 0.1};
  int batch_size = 192;
  int epochs = 100;
  double beta = 0.5;
  std::uint64_t seed = 0;
  /// Run the probe every N epochs (and at epoch 0).
  int probe_every = 10;
};

struct SkipEpoch {
  int epoch = 0;
  double test_nll = 0.0;
  SkipProbe probe;
};

/// Minibatch training on `train`; the probe uses the held-out episodes.
std::vector<SkipEpoch> train_skip(SkipNetwork& net, const SkipDataset& train, const SkipDataset& test,
                                  std::span<const env::Episode> probe_episodes,
                                  std::span<const EpisodeTrace> probe_traces, const SkipTrainConfig& config,
                                  const std::function<void(const SkipEpoch&)>& on_probe = {});

/// Plain Gaussian NLL per sample over a whole dataset.
double skip_nll(const SkipNetwork& net, const SkipDataset& data);

/// Columns: epoch, episode_type, d_hand, d_object, d_goal (predicted hand at t=2).
void write_skip_curve(const std::filesystem::path& path, std::span<const SkipEpoch> curve);

/// Per-episode, per-step skip predictions for plotting.
void write_skip_predictions(const std::filesystem::path& path, const SkipNetwork& net,
                            std::span<const env::Episode> episodes, std::span<const EpisodeTrace> traces);

}  // namespace evhier::skip
