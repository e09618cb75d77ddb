#pragma once

#include "evhier/env/scripted_env.hpp"
#include "evhier/skip/skip_network.hpp"

#include <array>
#include <filesystem>
#include <span>
#include <vector>

namespace evhier::harness {

/// Alignment of model boundaries with scripted phase switches for one
/// episode type. Switch steps are the 1-based first steps of a new phase;
/// only interior boundaries (< T) take part.
struct SegmentationStats {
  int episodes = 0;
  int switches = 0;
  int switches_hit = 0;      // a boundary within the tolerance
  int boundaries = 0;        // interior boundaries
  int boundaries_near = 0;   // interior boundaries within the tolerance of a switch
  /// Hits by switch index (first, second, third switch of an episode).
  std::array<int, 3> switch_count{};
  std::array<int, 3> switch_hits{};

  double recall() const { return switches ? static_cast<double>(switches_hit) / switches : 0.0; }
  double precision() const { return boundaries ? static_cast<double>(boundaries_near) / boundaries : 0.0; }
  double mean_interior_boundaries() const { return episodes ? static_cast<double>(boundaries) / episodes : 0.0; }
};

struct SegmentationReport {
  int tolerance = 2;
  std::array<SegmentationStats, 3> by_type;
};

/// 1-based steps at which the phase label changes.
std::vector<int> switch_steps(const std::vector<int>& phase_labels);

SegmentationReport eval_segmentation(std::span<const env::Episode> episodes,
                                     std::span<const std::vector<int>> boundaries, int tolerance = 2);
SegmentationReport eval_segmentation(std::span<const env::Episode> episodes,
                                     std::span<const skip::EpisodeTrace> traces, int tolerance = 2);

/// Columns: episode_type, episodes, switches, switches_hit, recall,
/// boundaries, boundaries_near, precision, mean_interior_boundaries,
/// hit_rate_switch1..3.
void write_segmentation(const std::filesystem::path& path, const SegmentationReport& report);

}  // namespace evhier::harness
