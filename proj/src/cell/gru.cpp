#include "evhier/cell/gru.hpp"

#include "evhier/numcore/activations.hpp"

namespace evhier::cell {

using numcore::Activation;

namespace {

struct GruTrace final : CellTrace {
  Matrix x;
  Matrix h_prev;
  Matrix reset, update, candidate;
  Matrix h_candidate_proj;  // Whn h + bhn
  numcore::MultiplicativeLayer::Cache output;
};

Matrix sigmoid(const Matrix& z) { return (1.0 / (1.0 + (-z.array()).exp())).matrix(); }

Matrix stack(const Matrix& top, const Matrix& bottom) {
  Matrix out(top.rows() + bottom.rows(), top.cols());
  out.topRows(top.rows()) = top;
  out.bottomRows(bottom.rows()) = bottom;
  return out;
}

}  // namespace

GruCell::GruCell(const GruConfig& config, const std::string& name)
    : config_(config),
      x_proj_(name + ".wx", config.input_width, 3 * config.latent_width),
      h_proj_(name + ".wh", config.latent_width, 3 * config.latent_width),
      output_(name + ".o", config.input_width + config.latent_width, config.input_width + config.latent_width,
              config.output_width, Activation::tanh, Activation::sigmoid) {}

void GruCell::initialize(Rng& rng) {
  x_proj_.initialize(rng);
  h_proj_.initialize(rng);
  output_.initialize(rng);
}

StepOutput GruCell::forward(const Matrix& x, const Matrix& h_prev, const Matrix* /*gate_noise*/,
                            std::unique_ptr<CellTrace>* trace) const {
  if (x.rows() != config_.input_width) throw ConfigError("gru: input width mismatch");
  if (h_prev.rows() != config_.latent_width || h_prev.cols() != x.cols()) {
    throw ConfigError("gru: latent shape mismatch");
  }
  const Index H = config_.latent_width;
  const Matrix xp = x_proj_.forward(x);
  const Matrix hp = h_proj_.forward(h_prev);
  Matrix reset = sigmoid(xp.topRows(H) + hp.topRows(H));
  Matrix update = sigmoid(xp.middleRows(H, H) + hp.middleRows(H, H));
  Matrix hn = hp.bottomRows(H);
  Matrix candidate = numcore::fast_tanh(xp.bottomRows(H) + reset.cwiseProduct(hn));

  StepOutput out;
  out.h = update.cwiseProduct(candidate) + (1.0 - update.array()).matrix().cwiseProduct(h_prev);
  std::unique_ptr<GruTrace> t;
  if (trace) t = std::make_unique<GruTrace>();
  const Matrix xh = stack(x, out.h);
  out.y = output_.forward(xh, xh, t ? &t->output : nullptr);
  out.gate = update;
  out.proposal = candidate;
  if (t) {
    t->x = x;
    t->h_prev = h_prev;
    t->reset = std::move(reset);
    t->update = std::move(update);
    t->candidate = std::move(candidate);
    t->h_candidate_proj = std::move(hn);
    *trace = std::move(t);
  }
  return out;
}

StepGrad GruCell::backward(const Matrix& dh, const Matrix& dy, const CellTrace& trace_base,
                           double /*reg_weight*/) {
  const auto& t = static_cast<const GruTrace&>(trace_base);
  const Index H = config_.latent_width;
  const Index in = config_.input_width;

  auto [da, db] = output_.backward(dy, t.output);
  const Matrix dxh_out = da + db;
  const Matrix dh_total = dh + dxh_out.bottomRows(H);

  const Matrix dcand = dh_total.cwiseProduct(t.update);
  const Matrix dupdate = dh_total.cwiseProduct(t.candidate - t.h_prev);
  Matrix dh_prev = dh_total.cwiseProduct((1.0 - t.update.array()).matrix());

  const Matrix dcand_pre = dcand.cwiseProduct((1.0 - t.candidate.array().square()).matrix());
  const Matrix dupdate_pre = dupdate.cwiseProduct((t.update.array() * (1.0 - t.update.array())).matrix());
  const Matrix dreset = dcand_pre.cwiseProduct(t.h_candidate_proj);
  const Matrix dreset_pre = dreset.cwiseProduct((t.reset.array() * (1.0 - t.reset.array())).matrix());

  Matrix dxp(3 * H, dh.cols());
  dxp << dreset_pre, dupdate_pre, dcand_pre;
  Matrix dhp(3 * H, dh.cols());
  dhp << dreset_pre, dupdate_pre, dcand_pre.cwiseProduct(t.reset);

  StepGrad g;
  g.dx = x_proj_.backward(t.x, dxp) + dxh_out.topRows(in);
  g.dh_prev = dh_prev + h_proj_.backward(t.h_prev, dhp);
  return g;
}

void GruCell::collect(numcore::ParamRefs& out) {
  x_proj_.collect(out);
  h_proj_.collect(out);
  output_.collect(out);
}

}  // namespace evhier::cell
