#pragma once

#include "evhier/common.hpp"
#include "evhier/numcore/tensor.hpp"

#include <memory>
#include <string_view>

namespace evhier::cell {

enum class CellType { gatel0rd, gru };

std::string_view to_string(CellType t);
CellType cell_type_from_string(std::string_view s);

/// Per-step values a cell needs for its backward pass.
struct CellTrace {
  virtual ~CellTrace() = default;
};

/// One batched step. `gate` holds the per-dimension update gate (Lambda
/// for the gated cell, the update gate u for the GRU); `proposal` is the
/// candidate latent the gate interpolates towards.
struct StepOutput {
  Matrix h;
  Matrix y;
  Matrix gate;
  Matrix proposal;
};

struct StepGrad {
  Matrix dx;
  Matrix dh_prev;
};

class RecurrentCell {
 public:
  virtual ~RecurrentCell() = default;

  virtual CellType type() const = 0;
  virtual Index input_width() const = 0;
  virtual Index latent_width() const = 0;
  virtual Index output_width() const = 0;

  virtual void initialize(Rng& rng) = 0;

  /// `gate_noise`, if given, is added to the gate pre-activation (training
  /// only). `trace`, if given, receives what backward() needs.
  virtual StepOutput forward(const Matrix& x, const Matrix& h_prev, const Matrix* gate_noise,
                             std::unique_ptr<CellTrace>* trace) const = 0;

  /// dh: dL/dh_t from later steps and heads, dy: dL/dy_t. reg_weight scales
  /// the surrogate gradient of the gate-opening penalty (ignored by cells
  /// without a sparsity penalty).
  virtual StepGrad backward(const Matrix& dh, const Matrix& dy, const CellTrace& trace, double reg_weight) = 0;

  virtual void collect(numcore::ParamRefs& out) = 0;
  virtual std::unique_ptr<RecurrentCell> clone() const = 0;
};

}  // namespace evhier::cell
