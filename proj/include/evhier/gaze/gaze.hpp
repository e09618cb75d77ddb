#pragma once

#include "evhier/env/scripted_env.hpp"
#include "evhier/model/sensorimotor.hpp"
#include "evhier/skip/skip_network.hpp"

#include <array>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

namespace evhier::gaze {

enum class UncertaintyMode { intra_only, inter_only, combined };

std::string_view to_string(UncertaintyMode m);
UncertaintyMode uncertainty_mode_from_string(std::string_view s);

struct UncertaintyConfig {
  /// Observation dims whose predicted variances are summed (hand position by default).
  std::vector<Index> relevant_dims = {0, 1, 2};
  UncertaintyMode mode = UncertaintyMode::combined;
  double mask_sigma = 0.05;

  void validate() const;
};

/// Sum of the variances at `dims`.
double uncertainty(const Eigen::Ref<const Vector>& var, std::span<const Index> dims);

/// Index of the smallest value; the earliest wins ties.
std::size_t argmin_first(std::span<const double> values);

struct CandidateEval {
  double intra = 0.0;
  double inter = 0.0;
  double score = 0.0;
};

/// One attention decision. Column e of the matrices belongs to candidate
/// focus e (hand, object, goal).
struct AttentionStep {
  env::Entity focus = env::Entity::hand;
  std::array<CandidateEval, 3> candidates;
  Matrix masked_obs;  // kObsDim x 3
  Matrix actions;     // kActDim x 3
  Matrix latents;     // H x 3, h_t per candidate
  Matrix gates;       // H x 3
};

/// Scores the three one-hot foci at step t and picks the argmin. Every
/// candidate sees the same noise draw from a copy of `mask_rng`; the
/// caller's generator is advanced once.
///   h_prev: h_{t-1}, or nullptr at t = 1 (then h_0 = f_init(x_1) per candidate)
///   action: a_t if given, otherwise the inverse model's mean from
///           (masked o_t, focus, h_{t-1})
/// The skip network may be null when mode is intra_only.
AttentionStep select_attention(const model::SensorimotorModel& fim, const skip::SkipNetwork* skip_net,
                               const Vector& obs, const Vector* action, const Vector* h_prev,
                               const UncertaintyConfig& config, Rng& mask_rng);

/// First-attend step per entity (1-based, T if never attended), the
/// scripted first phase switch t_EB, and the model's own first boundary.
struct GazeTrace {
  std::vector<env::Entity> focus;
  std::array<int, 3> first_attend{};
  int t_eb = 0;
  int model_boundary = 0;

  int relative(env::Entity e) const { return first_attend[static_cast<std::size_t>(e)] - t_eb; }
};

/// Closed loop over one episode: only a_1 is taken from the episode.
GazeTrace run_gaze_episode(const env::Episode& episode, const model::SensorimotorModel& fim,
                           const skip::SkipNetwork* skip_net, const UncertaintyConfig& config,
                           std::uint64_t noise_seed);

std::vector<GazeTrace> run_gaze(std::span<const env::Episode> episodes, const model::SensorimotorModel& fim,
                                const skip::SkipNetwork* skip_net, const UncertaintyConfig& config,
                                std::uint64_t noise_seed);

/// Mean and standard error of t_e - t_EB over a set of traces.
struct RelativeTimes {
  std::array<double, 3> mean{};
  std::array<double, 3> stderr_{};
  std::array<double, 3> mean_first_attend{};
  int count = 0;
};

RelativeTimes summarize(std::span<const GazeTrace> traces);

/// One row of the gaze learning curve.
struct GazeCurveRow {
  int checkpoint = 0;
  env::Entity entity = env::Entity::hand;
  double mean_rel_attend_time = 0.0;
  double stderr_ = 0.0;
};

/// Pools traces per checkpoint (e.g. across seeds) into curve rows.
std::vector<GazeCurveRow> curve_rows(int checkpoint, std::span<const GazeTrace> traces);

/// Columns: checkpoint, entity, mean_rel_attend_time, stderr.
void write_gaze_curve(const std::filesystem::path& path, std::span<const GazeCurveRow> rows);
std::vector<GazeCurveRow> read_gaze_curve(const std::filesystem::path& path);

}  // namespace evhier::gaze
