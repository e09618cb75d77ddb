#include "evhier/cell/gatel0rd.hpp"

namespace evhier::cell {

using numcore::Activation;
using numcore::Mlp;
using numcore::MlpConfig;

namespace {

struct GateL0rdTrace final : CellTrace {
  Matrix h_prev;
  Matrix proposal;
  Matrix gate_pre;  // includes training noise
  Matrix gate;
  Mlp::Cache recommend;
  Mlp::Cache gating;
  numcore::MultiplicativeLayer::Cache output;
};

Matrix stack(const Matrix& top, const Matrix& bottom) {
  Matrix out(top.rows() + bottom.rows(), top.cols());
  out.topRows(top.rows()) = top;
  out.bottomRows(bottom.rows()) = bottom;
  return out;
}

MlpConfig subnet_config(const GateL0rdConfig& c, Activation head) {
  MlpConfig m;
  m.input_width = c.input_width + c.latent_width;
  m.layer_widths = c.hidden_widths;
  m.layer_widths.push_back(c.latent_width);
  m.hidden = Activation::tanh;
  m.head = head;
  return m;
}

}  // namespace

std::string_view to_string(CellType t) { return t == CellType::gru ? "gru" : "gatel0rd"; }

CellType cell_type_from_string(std::string_view s) {
  if (s == "gatel0rd") return CellType::gatel0rd;
  if (s == "gru") return CellType::gru;
  throw ConfigError("unknown cell type '" + std::string(s) + "'");
}

Matrix gated_update(const Matrix& lambda, const Matrix& proposal, const Matrix& h_prev) {
  Matrix h(h_prev.rows(), h_prev.cols());
  for (Index j = 0; j < h.cols(); ++j) {
    for (Index i = 0; i < h.rows(); ++i) {
      const double l = lambda(i, j);
      h(i, j) = l > 0.0 ? l * proposal(i, j) + (1.0 - l) * h_prev(i, j) : h_prev(i, j);
    }
  }
  return h;
}

GateL0rdCell::GateL0rdCell(const GateL0rdConfig& config, const std::string& name)
    : config_(config),
      recommend_(name + ".r", subnet_config(config, Activation::tanh)),
      gate_(name + ".g", subnet_config(config, Activation::linear)),
      output_(name + ".o", config.input_width + config.latent_width, config.input_width + config.latent_width,
              config.output_width, Activation::tanh, Activation::sigmoid) {
  if (config.input_width <= 0 || config.latent_width <= 0 || config.output_width <= 0) {
    throw ConfigError("gated cell: widths must be positive");
  }
}

void GateL0rdCell::initialize(Rng& rng) {
  recommend_.initialize(rng);
  gate_.initialize(rng);
  output_.initialize(rng);
}

StepOutput GateL0rdCell::forward(const Matrix& x, const Matrix& h_prev, const Matrix* gate_noise,
                                 std::unique_ptr<CellTrace>* trace) const {
  if (x.rows() != config_.input_width) {
    throw ConfigError("gated cell: input width " + std::to_string(x.rows()) + " != " +
                      std::to_string(config_.input_width));
  }
  if (h_prev.rows() != config_.latent_width || h_prev.cols() != x.cols()) {
    throw ConfigError("gated cell: latent shape mismatch");
  }
  std::unique_ptr<GateL0rdTrace> t;
  if (trace) t = std::make_unique<GateL0rdTrace>();

  const Matrix xh = stack(x, h_prev);
  StepOutput out;
  out.proposal = recommend_.forward(xh, t ? &t->recommend : nullptr);
  Matrix gate_pre = gate_.forward(xh, t ? &t->gating : nullptr);
  if (gate_noise) gate_pre += *gate_noise;
  out.gate = numcore::retanh(gate_pre);
  out.h = gated_update(out.gate, out.proposal, h_prev);
  const Matrix xh_new = stack(x, out.h);
  out.y = output_.forward(xh_new, xh_new, t ? &t->output : nullptr);

  if (t) {
    t->h_prev = h_prev;
    t->proposal = out.proposal;
    t->gate_pre = std::move(gate_pre);
    t->gate = out.gate;
    *trace = std::move(t);
  }
  return out;
}

StepGrad GateL0rdCell::backward(const Matrix& dh, const Matrix& dy, const CellTrace& trace_base,
                                double reg_weight) {
  const auto& t = static_cast<const GateL0rdTrace&>(trace_base);
  const Index in = config_.input_width;

  auto [da, db] = output_.backward(dy, t.output);
  Matrix dxh_out = da + db;
  Matrix dh_total = dh + dxh_out.bottomRows(config_.latent_width);

  Matrix dgate = dh_total.cwiseProduct(t.proposal - t.h_prev);
  Matrix dproposal = dh_total.cwiseProduct(t.gate);
  Matrix dh_prev = dh_total.cwiseProduct((1.0 - t.gate.array()).matrix());

  // retanh derivative; the Heaviside penalty passes a unit slope through.
  const Matrix active_slope =
      t.gate_pre.binaryExpr(t.gate, [](double z, double l) { return z > 0.0 ? 1.0 - l * l : 0.0; });
  Matrix dgate_pre = (dgate.array() + reg_weight).matrix().cwiseProduct(active_slope);

  Matrix dxh = recommend_.backward(dproposal, t.recommend);
  dxh += gate_.backward(dgate_pre, t.gating);

  StepGrad g;
  g.dx = dxh.topRows(in) + dxh_out.topRows(in);
  g.dh_prev = dh_prev + dxh.bottomRows(config_.latent_width);
  return g;
}

void GateL0rdCell::collect(numcore::ParamRefs& out) {
  recommend_.collect(out);
  gate_.collect(out);
  output_.collect(out);
}

}  // namespace evhier::cell
