#pragma once

#include "evhier/numcore/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace evhier::numcore {

struct AdamConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-4;
  /// Maximum global L2 norm of the gradient; <= 0 disables clipping.
  double clip_norm = 0.1;
};

/// Adam with global gradient-norm clipping. Moments are bound to the
/// parameter order of the first step and checked by name afterwards.
class Adam {
 public:
  Adam() = default;
  explicit Adam(AdamConfig config) : config_(config) {}

  /// Clips, updates every parameter in place and returns the pre-clip norm.
  double step(const ParamRefs& params);

  const AdamConfig& config() const { return config_; }
  std::int64_t step_count() const { return step_count_; }

  // Checkpoint access.
  struct Moment {
    std::string name;
    Matrix first;
    Matrix second;
  };
  const std::vector<Moment>& moments() const { return moments_; }
  void restore(std::int64_t step_count, std::vector<Moment> moments);

 private:
  void bind(const ParamRefs& params);

  AdamConfig config_;
  std::int64_t step_count_ = 0;
  std::vector<Moment> moments_;
};

/// Scales all gradients so their global norm is at most max_norm; returns
/// the norm before scaling.
double clip_grad_norm(const ParamRefs& params, double max_norm);

}  // namespace evhier::numcore
