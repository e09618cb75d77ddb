#pragma once

#include "evhier/cell/recurrent_cell.hpp"
#include "evhier/numcore/layers.hpp"

namespace evhier::cell {

struct GruConfig {
  Index input_width = 15;
  Index latent_width = 32;
  Index output_width = 16;
};

/// Standard GRU used as the unregularized ablation. The update gate u
/// interpolates towards the candidate exactly like the gated cell does:
///
///   r = sigmoid(Wxr x + Whr h + b)     u = sigmoid(Wxu x + Whu h + b)
///   n = tanh(Wxn x + bxn + r * (Whn h + bhn))
///   h' = u * n + (1 - u) * h
///
/// The output head is the gated cell's multiplicative output on [x, h'].
class GruCell final : public RecurrentCell {
 public:
  explicit GruCell(const GruConfig& config, const std::string& name = "cell");

  CellType type() const override { return CellType::gru; }
  Index input_width() const override { return config_.input_width; }
  Index latent_width() const override { return config_.latent_width; }
  Index output_width() const override { return config_.output_width; }
  const GruConfig& config() const { return config_; }

  void initialize(Rng& rng) override;
  StepOutput forward(const Matrix& x, const Matrix& h_prev, const Matrix* gate_noise,
                     std::unique_ptr<CellTrace>* trace) const override;
  StepGrad backward(const Matrix& dh, const Matrix& dy, const CellTrace& trace, double reg_weight) override;
  void collect(numcore::ParamRefs& out) override;
  std::unique_ptr<RecurrentCell> clone() const override { return std::make_unique<GruCell>(*this); }

  // Rows are [reset; update; candidate].
  numcore::Dense& input_projection() { return x_proj_; }
  numcore::Dense& latent_projection() { return h_proj_; }
  numcore::MultiplicativeLayer& output() { return output_; }

 private:
  GruConfig config_;
  numcore::Dense x_proj_;
  numcore::Dense h_proj_;
  numcore::MultiplicativeLayer output_;
};

}  // namespace evhier::cell
