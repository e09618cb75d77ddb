#pragma once

// Naive reference implementations, written without the library's helpers.

#include "evhier/common.hpp"

#include <vector>

namespace evhier::testing {

/// Scans every step and every dimension; steps are 1-based.
inline std::vector<int> naive_boundaries(const Matrix& gates) {
  const int T = static_cast<int>(gates.cols());
  std::vector<int> out;
  for (int t = 1; t <= T; ++t) {
    bool open = t == T;
    for (Index i = 0; i < gates.rows(); ++i) {
      if (gates(i, t - 1) > 0.0) open = true;
    }
    if (open) out.push_back(t);
  }
  return out;
}

/// For each t in 1..T-1, walks forward until a step with an open gate or T.
inline std::vector<int> naive_skip_targets(const Matrix& gates) {
  const int T = static_cast<int>(gates.cols());
  std::vector<int> out;
  for (int t = 1; t < T; ++t) {
    int u = t + 1;
    while (u < T && !(gates.col(u - 1).array() > 0.0).any()) ++u;
    out.push_back(u);
  }
  return out;
}

/// Random gate matrix: each entry is open with probability `p_open`, and
/// closed entries are exactly 0 or slightly negative.
inline Matrix random_gates(Index latent, int steps, double p_open, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix g(latent, steps);
  for (Index k = 0; k < g.size(); ++k) {
    const double r = u(rng);
    if (r < p_open) {
      g.data()[k] = 1e-12 + u(rng) * 0.99;
    } else {
      g.data()[k] = u(rng) < 0.5 ? 0.0 : -0.0;
    }
  }
  return g;
}

}  // namespace evhier::testing
