#pragma once

#include "evhier/common.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string_view>
#include <vector>

namespace evhier::env {

inline constexpr Index kObsDim = 11;
inline constexpr Index kActDim = 4;
inline constexpr Index kFocusDim = 3;
inline constexpr int kEpisodeLength = 25;

// Observation layout: [hand(3), object(3), goal(3), finger_left, finger_right].
inline constexpr Index kHandOffset = 0;
inline constexpr Index kObjectOffset = 3;
inline constexpr Index kGoalOffset = 6;
inline constexpr Index kFingerOffset = 9;

enum class EpisodeType { reach_grasp_transport = 0, pointing = 1, stretching = 2 };
enum class Entity { hand = 0, object = 1, goal = 2 };

std::string_view to_string(EpisodeType t);
EpisodeType episode_type_from_string(std::string_view s);
std::string_view to_string(Entity e);

/// Observation dimensions owned by an entity (fingers belong to the hand).
std::vector<Index> entity_dims(Entity e);

// Phase labels.
namespace phase {
inline constexpr int reach = 0;
inline constexpr int grasp = 1;
inline constexpr int transport = 2;
inline constexpr int hold = 3;
// pointing: reach -> hold (label 1); stretching: single phase 0.
inline constexpr int point_hold = 1;
}  // namespace phase

using Vec3 = Eigen::Vector3d;

struct SceneConfig {
  double table_height = 0.4;
  Vec3 object_start = Vec3::Zero();
  Vec3 goal_pos = Vec3::Zero();
  Vec3 hand_start = Vec3::Zero();
  EpisodeType episode_type = EpisodeType::reach_grasp_transport;
  std::uint64_t seed = 0;
  /// Stretching only: the repeated command before noise.
  std::optional<std::array<double, 4>> stretch_command;
};

/// Kinematic abstraction of the scripted manipulator. Units are meters;
/// one unit of action moves the hand `step_scale` meters.
struct EnvParams {
  double motor_noise = 0.05;
  double step_scale = 0.1;
  double gain = 5.0;
  double max_speed = 1.0;
  double decel_radius = 0.1;
  /// Hand-target distance that counts as "object between the fingers" / "arrived".
  double reach_tolerance = 0.02;
  double object_half_width = 0.025;
  double finger_open = 0.04;
  double finger_rate = 0.01;
  double table_min = 0.35;
  double table_max = 0.45;
  double half_extent_xy = 0.3;
  double height_z = 0.4;
  double min_separation = 0.1;
  double stretch_command_max = 0.8;
};

struct Episode {
  std::uint64_t id = 0;
  SceneConfig scene;
  Matrix observations;  // kObsDim x T
  Matrix actions;       // kActDim x T
  std::vector<int> phase_labels;
  std::optional<Matrix> attention;  // kFocusDim x T, one-hot columns
  /// False if a goal-directed episode did not finish within T steps.
  bool completed = true;

  int length() const { return static_cast<int>(observations.cols()); }
  EpisodeType type() const { return scene.episode_type; }
};

/// Proportional controller: gain * (target - hand), norm-capped at a
/// speed that tapers linearly to zero inside the deceleration radius.
Vec3 controller_command(const Vec3& hand, const Vec3& target, const EnvParams& params);

SceneConfig sample_scene(EpisodeType type, std::uint64_t seed, const EnvParams& params = {});

/// Runs the script for kEpisodeLength steps. Motor noise is drawn from a
/// stream seeded by scene.seed.
Episode generate_episode(const SceneConfig& scene, const EnvParams& params = {});

/// Unattended entities receive i.i.d. Gaussian noise; the attended one is
/// returned unchanged.
Vector apply_attention_mask(const Vector& obs, Entity focus, Rng& rng, double sigma = 0.05);
Vector apply_attention_mask(const Vector& obs, Entity focus, std::uint64_t seed, double sigma = 0.05);
/// Batched form: column j of `obs` masked by column j of `focus` (one-hot).
Matrix apply_attention_mask(const Matrix& obs, const Matrix& focus, Rng& rng, double sigma = 0.05);

Entity focus_entity(const Eigen::Ref<const Vector>& one_hot);
Vector one_hot(Entity e);

struct DatasetSpec {
  int n = 1;
  std::array<double, 3> mix = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  bool gaze_mode = false;
  std::uint64_t seed = 0;
  int attention_shifts = 5;
  EnvParams env;

  void validate() const;
};

/// Generates n episodes with exact type counts (rounded) in seeded random
/// order. Episodes that fail to finish are regenerated with a new sub-seed.
std::vector<Episode> generate_dataset(const DatasetSpec& spec);

/// Random focus sequence: uniform start, then `shifts` switches to a
/// different entity at distinct uniformly chosen steps.
Matrix random_attention(int length, int shifts, Rng& rng);

/// First step index (0-based) whose label differs from the first label; -1 if none.
int first_phase_switch(const std::vector<int>& labels);
/// All 0-based indices t > 0 with labels[t] != labels[t-1].
std::vector<int> phase_switches(const std::vector<int>& labels);

}  // namespace evhier::env
