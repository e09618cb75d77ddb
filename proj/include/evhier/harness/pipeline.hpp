#pragma once

#include "evhier/gaze/gaze.hpp"
#include "evhier/harness/config.hpp"
#include "evhier/harness/segmentation.hpp"
#include "evhier/model/training.hpp"
#include "evhier/skip/skip_network.hpp"

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace evhier::harness {

namespace fs = std::filesystem;

enum class StageStatus { pending, done, failed };

struct StageRecord {
  std::string name;
  StageStatus status = StageStatus::pending;
  std::vector<std::string> artifacts;  // relative to the seed directory
  std::string error;
};

/// Per-seed record of completed stages. Written after every stage.
struct RunManifest {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<StageRecord> stages;

  const StageRecord* find(const std::string& name) const;
  StageRecord& upsert(const std::string& name);
};

void to_json(nlohmann::json& j, const RunManifest& m);
void from_json(const nlohmann::json& j, RunManifest& m);
void write_manifest(const fs::path& path, const RunManifest& m);
RunManifest read_manifest(const fs::path& path);

/// Progress lines; empty function = silent.
using Logger = std::function<void(const std::string&)>;

fs::path seed_dir(const ExperimentConfig& config, std::uint64_t seed);

/// Runs every stage for one seed in dependency order. Stages already
/// recorded as done (same config hash, artifacts present) are skipped. A
/// failing stage is recorded and rethrown.
RunManifest run_seed(const ExperimentConfig& config, std::uint64_t seed, const Logger& log = {});

/// All seeds, `jobs` at a time; the config is saved next to the seed dirs.
std::vector<RunManifest> run_pipeline(const ExperimentConfig& config, int jobs = 1, const Logger& log = {});

// Single stages, also used by the command line tools.

struct Split {
  std::vector<env::Episode> train;
  std::vector<env::Episode> test;
};

/// Seeded dataset with a train/test split (the first `train_fraction` go to training).
Split generate_split(int n, std::array<double, 3> mix, double train_fraction, bool gaze_mode, std::uint64_t seed);

struct FimRun {
  bool gru = false;
  double lambda = 1.0;
  bool gaze_mode = false;
};

/// Trains one forward-inverse model; writes curve.csv, final.bin and
/// checkpoints/ under `dir`. Returns the learning curve.
model::TrainResult train_fim_run(const FimRun& run, std::span<const env::Episode> train,
                                 std::span<const env::Episode> test, const model::TrainConfig& train_config,
                                 std::uint64_t init_seed, const fs::path& dir);

/// Trains a skip network on traces of a frozen model. Writes curve.csv,
/// probe.csv and the network to `net_path`.
skip::SkipNetwork train_skip_run(const model::SensorimotorModel& fim, std::span<const env::Episode> train,
                                 std::span<const env::Episode> test, const skip::SkipTrainConfig& train_config,
                                 std::uint64_t init_seed, std::uint64_t mask_seed, double mask_sigma,
                                 const fs::path& net_path, const fs::path& curve_path, const fs::path& probe_path);

/// Columns: probe, episode_type, d_hand, d_object, d_goal, count. Probe is
/// "hand_at_t2" (one row per type) or "object_at_grasp".
void write_skip_probe(const fs::path& path, const skip::SkipProbe& probe);

/// Columns: episode, episode_type, switches, boundaries (';'-separated 1-based steps).
void write_boundaries(const fs::path& path, std::span<const env::Episode> episodes,
                      std::span<const skip::EpisodeTrace> traces);

/// One gaze evaluation pass over a checkpoint directory holding
/// fim_epoch_NNNN.bin and skip_epoch_NNNN.bin pairs.
struct GazeSummaryRow {
  int checkpoint = 0;
  gaze::UncertaintyMode mode = gaze::UncertaintyMode::combined;
  env::EpisodeType type = env::EpisodeType::reach_grasp_transport;
  gaze::RelativeTimes times;
};

std::vector<int> checkpoint_epochs(const fs::path& dir, const std::string& prefix);

std::vector<GazeSummaryRow> eval_gaze_checkpoints(const fs::path& checkpoint_dir, std::span<const int> epochs,
                                                  std::span<const gaze::UncertaintyMode> modes,
                                                  std::span<const env::Episode> episodes,
                                                  const gaze::UncertaintyConfig& base, std::uint64_t noise_seed);

/// Columns: checkpoint, mode, episode_type, entity, mean_rel_attend_time,
/// stderr, mean_first_attend, count.
void write_gaze_summary(const fs::path& path, std::span<const GazeSummaryRow> rows);

struct ExportReport {
  std::vector<std::string> tables;   // file names written
  std::vector<std::string> missing;  // "seed_N/relative/path" not found
};

/// Merges per-seed CSVs into `out_dir` (with a leading seed column) and
/// writes <table>_summary.csv with per-group mean and sample std over seeds.
/// Missing per-seed files are listed and skipped; no seeds or no tables is an error.
ExportReport export_metrics(const fs::path& run_dir, const fs::path& out_dir);

/// Preset configs: "desk" (full acceptance scale) and "smoke" (seconds).
ExperimentConfig preset(const std::string& name);

}  // namespace evhier::harness
