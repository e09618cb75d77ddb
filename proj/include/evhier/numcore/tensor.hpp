#pragma once

#include "evhier/common.hpp"

#include <string>
#include <vector>

namespace evhier::numcore {

/// A named learnable tensor with its accumulated gradient. Vectors are
/// stored as single-column matrices.
struct ParamTensor {
  std::string name;
  Matrix value;
  Matrix grad;

  ParamTensor() = default;
  ParamTensor(std::string tensor_name, Index rows, Index cols)
      : name(std::move(tensor_name)), value(Matrix::Zero(rows, cols)), grad(Matrix::Zero(rows, cols)) {}

  std::vector<Index> shape() const {
    if (value.cols() == 1) return {value.rows()};
    return {value.rows(), value.cols()};
  }
  Index size() const { return value.size(); }
  void zero_grad() { grad.setZero(); }
};

/// Non-owning view over every parameter of a model, in a fixed order.
using ParamRefs = std::vector<ParamTensor*>;

inline void zero_grads(const ParamRefs& params) {
  for (auto* p : params) p->zero_grad();
}

inline double grad_norm(const ParamRefs& params) {
  double sq = 0.0;
  for (const auto* p : params) sq += p->grad.squaredNorm();
  return std::sqrt(sq);
}

inline Index parameter_count(const ParamRefs& params) {
  Index n = 0;
  for (const auto* p : params) n += p->size();
  return n;
}

}  // namespace evhier::numcore
