#pragma once

#include "evhier/cell/recurrent_cell.hpp"
#include "evhier/numcore/layers.hpp"

#include <vector>

namespace evhier::cell {

struct GateL0rdConfig {
  Index input_width = 15;
  Index latent_width = 16;
  std::vector<Index> hidden_widths = {64, 32};
  Index output_width = 16;
};

/// Sparsely-gated recurrent cell. Given x_t and h_{t-1}:
///
///   proposal = r([x, h_{t-1}])                       (tanh MLP)
///   Lambda   = max(0, tanh(g([x, h_{t-1}]) + noise))  (update gate)
///   h_t      = Lambda * proposal + (1 - Lambda) * h_{t-1}
///   y_t      = tanh(Wa [x, h_t]) * sigmoid(Wb [x, h_t])
///
/// A dimension whose gate is exactly zero keeps its value bit-for-bit.
class GateL0rdCell final : public RecurrentCell {
 public:
  explicit GateL0rdCell(const GateL0rdConfig& config, const std::string& name = "cell");

  CellType type() const override { return CellType::gatel0rd; }
  Index input_width() const override { return config_.input_width; }
  Index latent_width() const override { return config_.latent_width; }
  Index output_width() const override { return config_.output_width; }
  const GateL0rdConfig& config() const { return config_; }

  void initialize(Rng& rng) override;
  StepOutput forward(const Matrix& x, const Matrix& h_prev, const Matrix* gate_noise,
                     std::unique_ptr<CellTrace>* trace) const override;
  StepGrad backward(const Matrix& dh, const Matrix& dy, const CellTrace& trace, double reg_weight) override;
  void collect(numcore::ParamRefs& out) override;
  std::unique_ptr<RecurrentCell> clone() const override { return std::make_unique<GateL0rdCell>(*this); }

  numcore::Mlp& recommendation() { return recommend_; }
  numcore::Mlp& gating() { return gate_; }
  numcore::MultiplicativeLayer& output() { return output_; }

 private:
  GateL0rdConfig config_;
  numcore::Mlp recommend_;
  numcore::Mlp gate_;
  numcore::MultiplicativeLayer output_;
};

/// h = lambda * proposal + (1 - lambda) * h_prev, elementwise.
Matrix gated_update(const Matrix& lambda, const Matrix& proposal, const Matrix& h_prev);

}  // namespace evhier::cell
