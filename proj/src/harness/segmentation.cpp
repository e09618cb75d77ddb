#include "evhier/harness/segmentation.hpp"

#include "evhier/util/csv.hpp"

#include <cstdlib>
#include <string>

namespace evhier::harness {

std::vector<int> switch_steps(const std::vector<int>& phase_labels) {
  std::vector<int> out;
  for (int t : env::phase_switches(phase_labels)) out.push_back(t + 1);
  return out;
}

SegmentationReport eval_segmentation(std::span<const env::Episode> episodes,
                                     std::span<const std::vector<int>> boundaries, int tolerance) {
  if (episodes.size() != boundaries.size()) throw InputError("segmentation: one boundary set per episode required");
  if (tolerance < 0) throw ConfigError("segmentation: negative tolerance");
  SegmentationReport r;
  r.tolerance = tolerance;
  auto near = [tolerance](int a, int b) { return std::abs(a - b) <= tolerance; };
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    const auto& ep = episodes[e];
    SegmentationStats& s = r.by_type[static_cast<std::size_t>(ep.type())];
    const int T = ep.length();
    std::vector<int> interior;
    for (int b : boundaries[e]) {
      if (b < T) interior.push_back(b);
    }
    const std::vector<int> sw = switch_steps(ep.phase_labels);
    ++s.episodes;
    for (std::size_t k = 0; k < sw.size(); ++k) {
      bool hit = false;
      for (int b : interior) hit = hit || near(b, sw[k]);
      ++s.switches;
      s.switches_hit += hit;
      if (k < 3) {
        ++s.switch_count[k];
        s.switch_hits[k] += hit;
      }
    }
    for (int b : interior) {
      bool close = false;
      for (int w : sw) close = close || near(b, w);
      ++s.boundaries;
      s.boundaries_near += close;
    }
  }
  return r;
}

SegmentationReport eval_segmentation(std::span<const env::Episode> episodes,
                                     std::span<const skip::EpisodeTrace> traces, int tolerance) {
  std::vector<std::vector<int>> b;
  b.reserve(traces.size());
  for (const auto& t : traces) b.push_back(t.boundaries);
  return eval_segmentation(episodes, b, tolerance);
}

void write_segmentation(const std::filesystem::path& path, const SegmentationReport& report) {
  util::CsvWriter w(path, {"episode_type", "episodes", "switches", "switches_hit", "recall", "boundaries",
                           "boundaries_near", "precision", "mean_interior_boundaries", "hit_rate_switch1",
                           "hit_rate_switch2", "hit_rate_switch3"});
  for (int type = 0; type < 3; ++type) {
    const auto& s = report.by_type[static_cast<std::size_t>(type)];
    auto rate = [&](std::size_t k) {
      return s.switch_count[k] ? static_cast<double>(s.switch_hits[k]) / s.switch_count[k] : 0.0;
    };
    w.row(std::string(env::to_string(static_cast<env::EpisodeType>(type))), s.episodes, s.switches, s.switches_hit,
          s.recall(), s.boundaries, s.boundaries_near, s.precision(), s.mean_interior_boundaries(), rate(0), rate(1),
          rate(2));
  }
}

}  // namespace evhier::harness
