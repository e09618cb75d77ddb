#pragma once

#include "evhier/common.hpp"

#include <span>
#include <vector>

namespace evhier::skip {

// Steps are 1-based here: column t-1 of a gate matrix is the gate of step t,
// and a boundary set over T steps is a sorted subset of {1..T}.

/// Steps with at least one strictly positive gate, plus T.
std::vector<int> extract_boundaries(const Matrix& gates);

/// Smallest boundary strictly after t. Throws InputError unless 0 <= t < T.
int next_boundary(int t, std::span<const int> boundaries);

/// For every step t in 1..T-1, the step whose observation is the skip target.
std::vector<int> skip_targets(std::span<const int> boundaries);

/// Boundaries strictly inside the episode (excluding T).
int interior_boundary_count(std::span<const int> boundaries);

}  // namespace evhier::skip
