#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace evhier {

// Batched activations are stored feature-major: one column per sample.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;
using Rng = std::mt19937_64;

/// Malformed configuration, shape or width mismatch.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid user input (empty dataset, out-of-range step, bad file).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A value left its numeric domain (non-positive variance, NaN loss).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Stable sub-seed derivation: FNV-1a over the tag, mixed with the root
/// through splitmix64. Independent of the standard library's std::hash.
std::uint64_t derive_seed(std::uint64_t root, std::string_view tag);
std::uint64_t derive_seed(std::uint64_t root, std::string_view tag, std::uint64_t index);

}  // namespace evhier
