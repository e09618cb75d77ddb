#include "evhier/skip/boundaries.hpp"

#include <algorithm>
#include <string>

namespace evhier::skip {

std::vector<int> extract_boundaries(const Matrix& gates) {
  const int T = static_cast<int>(gates.cols());
  if (T < 1) throw InputError("boundaries: empty gate sequence");
  std::vector<int> out;
  for (int t = 1; t < T; ++t) {
    if ((gates.col(t - 1).array() > 0.0).any()) out.push_back(t);
  }
  out.push_back(T);
  return out;
}

int next_boundary(int t, std::span<const int> boundaries) {
  if (boundaries.empty()) throw InputError("next_boundary: empty boundary set");
  const int T = boundaries.back();
  if (t < 0 || t >= T) throw InputError("next_boundary: step " + std::to_string(t) + " outside [0, " + std::to_string(T) + ")");
  return *std::upper_bound(boundaries.begin(), boundaries.end(), t);
}

std::vector<int> skip_targets(std::span<const int> boundaries) {
  if (boundaries.empty()) throw InputError("skip_targets: empty boundary set");
  const int T = boundaries.back();
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(std::max(T - 1, 0)));
  auto it = boundaries.begin();
  for (int t = 1; t < T; ++t) {
    while (*it <= t) ++it;
    out.push_back(*it);
  }
  return out;
}

int interior_boundary_count(std::span<const int> boundaries) {
  return boundaries.empty() ? 0 : static_cast<int>(boundaries.size()) - 1;
}

}  // namespace evhier::skip
