#include "doctest.h"

#include "evhier/cell/gatel0rd.hpp"
#include "evhier/cell/gru.hpp"
#include "evhier/cell/regularizer.hpp"

#include "../support/gradcheck.hpp"

#include <cmath>
#include <vector>

using namespace evhier;
using namespace evhier::cell;

namespace {

Matrix random_matrix(Index r, Index c, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  return Matrix::NullaryExpr(r, c, [&] { return n(rng); });
}

GateL0rdConfig small_config() {
  GateL0rdConfig c;
  c.input_width = 4;
  c.latent_width = 5;
  c.hidden_widths = {7, 6};
  c.output_width = 3;
  return c;
}

void close_all_gates(GateL0rdCell& cell) {
  numcore::ParamRefs g;
  cell.gating().collect(g);
  for (auto* p : g) p->value.setZero();
  g.back()->value.setConstant(-1.0);  // head bias
}

// Runs `steps` cells forward with a quadratic loss on y and on the last h,
// plus reg * sum(gate). Returns the loss; accumulates gradients if asked.
double unrolled_loss(RecurrentCell& cell, const std::vector<Matrix>& xs, const Matrix& h0,
                     const std::vector<Matrix>& targets, const Matrix& h_weight, const std::vector<Matrix>& noise,
                     double reg, bool backprop) {
  std::vector<std::unique_ptr<CellTrace>> traces(xs.size());
  std::vector<StepOutput> outs;
  Matrix h = h0;
  double loss = 0.0;
  for (std::size_t t = 0; t < xs.size(); ++t) {
    outs.push_back(cell.forward(xs[t], h, noise.empty() ? nullptr : &noise[t], backprop ? &traces[t] : nullptr));
    h = outs.back().h;
    loss += 0.5 * (outs.back().y - targets[t]).squaredNorm();
    loss += reg * outs.back().gate.sum();
  }
  loss += h.cwiseProduct(h_weight).sum();
  if (backprop) {
    Matrix dh = h_weight;
    for (std::size_t t = xs.size(); t-- > 0;) {
      const StepGrad g = cell.backward(dh, outs[t].y - targets[t], *traces[t], reg);
      dh = g.dh_prev;
    }
  }
  return loss;
}

}  // namespace

TEST_CASE("gated update arithmetic") {
  const Matrix lambda = (Matrix(3, 1) << 0.0, 0.5, 0.999).finished();
  const Matrix proposal = (Matrix(3, 1) << 4.0, 1.0, 2.0).finished();
  const Matrix h_prev = (Matrix(3, 1) << -0.3, 0.0, 1.0).finished();
  const Matrix h = gated_update(lambda, proposal, h_prev);
  CHECK(h(0) == h_prev(0));
  CHECK(h(1) == 0.5);
  // The limit Lambda -> 1 approaches the proposal.
  CHECK(std::abs(h(2) - proposal(2)) < 2e-3);
  CHECK(gated_update(Matrix::Constant(3, 1, 1.0), proposal, h_prev) == proposal);
}

TEST_CASE("closed gates keep the latent bit-for-bit") {
  GateL0rdCell cell(small_config());
  Rng rng(1);
  cell.initialize(rng);
  close_all_gates(cell);
  Matrix h = random_matrix(5, 3, rng);
  for (int t = 0; t < 10; ++t) {
    const StepOutput out = cell.forward(random_matrix(4, 3, rng), h, nullptr, nullptr);
    CHECK(out.gate.isZero());
    CHECK(out.h == h);
    h = out.h;
  }
}

TEST_CASE("piecewise constancy and gate range on random weights") {
  GateL0rdCell cell(small_config());
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    cell.initialize(rng);
    Matrix h = random_matrix(5, 8, rng);
    for (int t = 0; t < 25; ++t) {
      const Matrix noise = random_matrix(5, 8, rng, 3.0);
      const StepOutput out = cell.forward(random_matrix(4, 8, rng, 3.0), h, &noise, nullptr);
      CHECK((out.gate.array() >= 0.0).all());
      CHECK((out.gate.array() < 1.0).all());
      for (Index j = 0; j < h.cols(); ++j) {
        for (Index i = 0; i < h.rows(); ++i) {
          if (out.gate(i, j) == 0.0) CHECK(out.h(i, j) == h(i, j));
        }
      }
      h = out.h;
    }
  }
}

TEST_CASE("width mismatch is a configuration error") {
  GateL0rdCell cell(small_config());
  CHECK_THROWS_AS(cell.forward(Matrix::Zero(3, 1), Matrix::Zero(5, 1), nullptr, nullptr), ConfigError);
  CHECK_THROWS_AS(cell.forward(Matrix::Zero(4, 1), Matrix::Zero(6, 1), nullptr, nullptr), ConfigError);
  GruCell gru(GruConfig{4, 6, 3});
  CHECK_THROWS_AS(gru.forward(Matrix::Zero(5, 1), Matrix::Zero(6, 1), nullptr, nullptr), ConfigError);
}

TEST_CASE("gate regularizer") {
  SUBCASE("all closed") {
    const std::vector<Matrix> g(25, Matrix::Zero(16, 1));
    CHECK(gate_regularizer(g) == 0.0);
    CHECK(gate_open_rate(g) == 0.0);
  }
  SUBCASE("strict positivity") {
    const std::vector<Matrix> g{(Matrix(3, 1) << 0.0, 0.0, 0.3).finished()};
    CHECK(gate_regularizer(g) == 1.0);
  }
  SUBCASE("four single-dimension openings over 25 x 16") {
    std::vector<Matrix> g(25, Matrix::Zero(16, 1));
    g[2](0) = 0.2;
    g[9](4) = 0.7;
    g[14](4) = 0.01;
    g[20](15) = 0.5;
    CHECK(gate_regularizer(g) == 4.0);
    CHECK(gate_open_rate(g) == doctest::Approx(0.01).epsilon(1e-12));
  }
  SUBCASE("surrogate backward") {
    const Matrix pre = (Matrix(3, 1) << -2.0, 0.5, 0.0).finished();
    const Matrix d = gate_regularizer_backward(pre, 1.0);
    CHECK(d(0) == 0.0);
    CHECK(d(1) == doctest::Approx(1.0 - std::tanh(0.5) * std::tanh(0.5)).epsilon(1e-14));
    CHECK(d(1) == doctest::Approx(0.7864).epsilon(1e-4));
    CHECK(d(2) == 0.0);
    CHECK(gate_regularizer_backward(pre, 0.0).isZero());
  }
}

TEST_CASE("gated cell 5-step BPTT gradient check") {
  Rng rng(31);
  GateL0rdCell cell(small_config());
  cell.initialize(rng);
  // Bias the gate so a mix of open and closed entries appears.
  numcore::ParamRefs g;
  cell.gating().collect(g);
  g.back()->value.setConstant(0.05);

  const Index B = 3;
  std::vector<Matrix> xs, targets, noise;
  for (int t = 0; t < 5; ++t) {
    xs.push_back(random_matrix(4, B, rng));
    targets.push_back(random_matrix(3, B, rng));
    noise.push_back(random_matrix(5, B, rng, 0.1));
  }
  const Matrix h0 = random_matrix(5, B, rng, 0.5);
  const Matrix h_weight = random_matrix(5, B, rng);

  numcore::ParamRefs params;
  cell.collect(params);

  for (double reg : {0.0, 0.7}) {
    CAPTURE(reg);
    numcore::zero_grads(params);
    unrolled_loss(cell, xs, h0, targets, h_weight, noise, reg, true);
    // With the Heaviside replaced by its straight-through surrogate, the
    // penalty term differentiates like reg * sum(Lambda).
    auto loss = [&] { return unrolled_loss(cell, xs, h0, targets, h_weight, noise, reg, false); };
    const auto report = testing::check_gradients(params, loss, 1e-6);
    INFO(report.worst_tensor);
    CHECK(report.worst_relative_error < 1e-4);
  }

  // Some gates must be open and some closed for the check to mean anything.
  Matrix h = h0;
  double open = 0.0, total = 0.0;
  for (int t = 0; t < 5; ++t) {
    const StepOutput out = cell.forward(xs[t], h, &noise[t], nullptr);
    open += (out.gate.array() > 0.0).count();
    total += static_cast<double>(out.gate.size());
    h = out.h;
  }
  CHECK(open > 0.0);
  CHECK(open < total);
}

TEST_CASE("gru 5-step BPTT gradient check") {
  Rng rng(32);
  GruCell cell(GruConfig{4, 6, 3});
  cell.initialize(rng);
  std::vector<Matrix> xs, targets;
  for (int t = 0; t < 5; ++t) {
    xs.push_back(random_matrix(4, 2, rng));
    targets.push_back(random_matrix(3, 2, rng));
  }
  const Matrix h0 = random_matrix(6, 2, rng, 0.5);
  const Matrix h_weight = random_matrix(6, 2, rng);
  numcore::ParamRefs params;
  cell.collect(params);
  numcore::zero_grads(params);
  unrolled_loss(cell, xs, h0, targets, h_weight, {}, 0.0, true);
  auto loss = [&] { return unrolled_loss(cell, xs, h0, targets, h_weight, {}, 0.0, false); };
  const auto report = testing::check_gradients(params, loss, 1e-6);
  INFO(report.worst_tensor);
  CHECK(report.worst_relative_error < 1e-4);
}

namespace {

// Textbook GRU on single vectors with the weights split per gate.
Vector reference_gru(const Vector& x, const Vector& h, const Matrix& wx, const Vector& bx, const Matrix& wh,
                     const Vector& bh) {
  const Index H = h.size();
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  Vector out(H);
  for (Index i = 0; i < H; ++i) {
    double r = bx(i) + bh(i), u = bx(H + i) + bh(H + i), nx = bx(2 * H + i), nh = bh(2 * H + i);
    for (Index k = 0; k < x.size(); ++k) {
      r += wx(i, k) * x(k);
      u += wx(H + i, k) * x(k);
      nx += wx(2 * H + i, k) * x(k);
    }
    for (Index k = 0; k < H; ++k) {
      r += wh(i, k) * h(k);
      u += wh(H + i, k) * h(k);
      nh += wh(2 * H + i, k) * h(k);
    }
    r = sig(r);
    u = sig(u);
    const double n = std::tanh(nx + r * nh);
    out(i) = u * n + (1.0 - u) * h(i);
  }
  return out;
}

}  // namespace

TEST_CASE("gru matches a reference recurrence") {
  Rng rng(8);
  GruCell cell(GruConfig{4, 6, 3});
  cell.initialize(rng);
  auto& px = cell.input_projection();
  auto& ph = cell.latent_projection();
  Vector h = random_matrix(6, 1, rng).col(0);
  for (int t = 0; t < 5; ++t) {
    const Vector x = random_matrix(4, 1, rng).col(0);
    const Vector expected = reference_gru(x, h, px.weight.value, px.bias.value.col(0), ph.weight.value,
                                          ph.bias.value.col(0));
    const StepOutput out = cell.forward(x, h, nullptr, nullptr);
    CHECK((out.h.col(0) - expected).cwiseAbs().maxCoeff() < 1e-10);
    h = out.h.col(0);
  }
}

TEST_CASE("gru special cases") {
  GruCell cell(GruConfig{4, 6, 3});
  Rng rng(9);
  cell.initialize(rng);
  const Matrix x = random_matrix(4, 2, rng);
  const Matrix h = random_matrix(6, 2, rng);

  SUBCASE("update gate saturated at zero carries the latent") {
    cell.input_projection().bias.value.middleRows(6, 6).setConstant(-800.0);
    const StepOutput out = cell.forward(x, h, nullptr, nullptr);
    CHECK(out.h == h);
  }
  SUBCASE("zero weights") {
    cell.input_projection().weight.value.setZero();
    cell.latent_projection().weight.value.setZero();
    const Vector bx = cell.input_projection().bias.value.col(0);
    const Vector bh = cell.latent_projection().bias.value.col(0);
    const StepOutput out = cell.forward(x, h, nullptr, nullptr);
    for (Index j = 0; j < 2; ++j) {
      for (Index i = 0; i < 6; ++i) {
        const double r = 1.0 / (1.0 + std::exp(-(bx(i) + bh(i))));
        const double u = 1.0 / (1.0 + std::exp(-(bx(6 + i) + bh(6 + i))));
        const double n = std::tanh(bx(12 + i) + r * bh(12 + i));
        CHECK(out.h(i, j) == doctest::Approx(u * n + (1 - u) * h(i, j)).epsilon(1e-14));
      }
    }
    // The candidate is the same constant for every input.
    CHECK((out.proposal.col(0) - out.proposal.col(1)).isZero());
  }
}

TEST_CASE("cell clones are independent") {
  GateL0rdCell cell(small_config());
  Rng rng(3);
  cell.initialize(rng);
  auto copy = cell.clone();
  numcore::ParamRefs a, b;
  cell.collect(a);
  copy->collect(b);
  a[0]->value.setZero();
  CHECK_FALSE(b[0]->value.isZero());
}
