#include "doctest.h"

#include "evhier/numcore/activations.hpp"
#include "evhier/numcore/adam.hpp"
#include "evhier/numcore/checkpoint.hpp"
#include "evhier/numcore/layers.hpp"
#include "evhier/numcore/losses.hpp"

#include "../support/gradcheck.hpp"

#include <cmath>
#include <filesystem>
#include <numbers>

using namespace evhier;
using namespace evhier::numcore;

namespace {

Matrix random_matrix(Index r, Index c, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  return Matrix::NullaryExpr(r, c, [&] { return n(rng); });
}

}  // namespace

TEST_CASE("dense_forward") {
  const Matrix w = (Matrix(2, 2) << 1, 2, 3, 4).finished();
  SUBCASE("hand multiply") {
    const Vector y = dense_forward(Vector::Ones(2), w, Vector::Zero(2));
    CHECK(y[0] == 3.0);
    CHECK(y[1] == 7.0);
  }
  SUBCASE("zero weights give the bias") {
    const Vector b = (Vector(2) << 0.5, -1.5).finished();
    CHECK(dense_forward((Vector(2) << 9, -4).finished(), Matrix::Zero(2, 2), b) == b);
  }
  SUBCASE("identity map") {
    const Vector x = (Vector(2) << 0.25, -3.0).finished();
    CHECK(dense_forward(x, Matrix::Identity(2, 2), Vector::Zero(2)) == x);
  }
  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(dense_forward(Vector::Ones(3), w, Vector::Zero(2)), ConfigError);
    Dense d("d", 3, 2);
    CHECK_THROWS_AS(d.forward(Matrix::Ones(2, 1)), ConfigError);
  }
}

TEST_CASE("retanh and elu_plus_one") {
  const Matrix x = (Matrix(4, 1) << 0.0, -3.0, 2.0, 0.5).finished();
  const Matrix r = retanh(x);
  CHECK(r(0) == 0.0);
  CHECK(r(1) == 0.0);
  CHECK(r(2) == doctest::Approx(0.9640).epsilon(1e-4));

  const Matrix e = elu_plus_one((Matrix(4, 1) << 0.0, 5.0, -20.0, -1000.0).finished());
  CHECK(e(0) == 1.0);
  CHECK(e(1) == 6.0);
  CHECK(e(2) == doctest::Approx(std::exp(-20.0)).epsilon(1e-12));
  CHECK(e(2) > 0.0);
  CHECK(e(3) > 0.0);

  // Range property on random inputs.
  Rng rng(3);
  const Matrix z = random_matrix(64, 64, rng, 10.0);
  CHECK((retanh(z).array() >= 0.0).all());
  CHECK((retanh(z).array() < 1.0).all());
  CHECK((elu_plus_one(z).array() > 0.0).all());
}

TEST_CASE("activation derivatives match finite differences") {
  Rng rng(11);
  const Matrix z = random_matrix(10, 3, rng, 2.0);
  for (Activation a : {Activation::linear, Activation::tanh, Activation::sigmoid, Activation::retanh,
                       Activation::elu_plus_one}) {
    const Matrix d = derivative(a, z, apply(a, z));
    for (Index i = 0; i < z.size(); ++i) {
      Matrix up = z, down = z;
      up.data()[i] += 1e-6;
      down.data()[i] -= 1e-6;
      const double fd = (apply(a, up).data()[i] - apply(a, down).data()[i]) / 2e-6;
      CHECK(d.data()[i] == doctest::Approx(fd).epsilon(1e-6));
    }
  }
}

TEST_CASE("multiplicative layer") {
  MultiplicativeLayer m("m", 2, 2, 2);
  m.proj_a().weight.value = Matrix::Identity(2, 2);
  m.proj_b().weight.value = Matrix::Identity(2, 2);
  m.proj_a().bias.value.setZero();
  m.proj_b().bias.value.setZero();

  SUBCASE("hand elementwise product") {
    const Matrix out = m.forward((Matrix(2, 1) << 2, 3).finished(), (Matrix(2, 1) << 4, 5).finished());
    CHECK(out(0) == 8.0);
    CHECK(out(1) == 15.0);
  }
  SUBCASE("annihilation") {
    m.proj_b().weight.value.setZero();
    CHECK(m.forward(Matrix::Ones(2, 1), (Matrix(2, 1) << 4, 5).finished()).isZero());
  }
  SUBCASE("unit factor passes the other projection") {
    m.proj_a().weight.value.setZero();
    m.proj_a().bias.value.setOnes();
    const Matrix b = (Matrix(2, 1) << -1.5, 7).finished();
    CHECK(m.forward(Matrix::Ones(2, 1), b) == b);
  }
  SUBCASE("width mismatch") {
    CHECK_THROWS_AS(m.forward(Matrix::Ones(3, 1), Matrix::Ones(2, 1)), ConfigError);
  }
}

TEST_CASE("beta_nll") {
  const Matrix zero = Matrix::Zero(1, 1);
  const Matrix one = Matrix::Ones(1, 1);

  SUBCASE("closed form at the mode") {
    const auto r = beta_nll(zero, one, zero, 0.5);
    CHECK(r.loss == doctest::Approx(0.5 * std::log(2.0 * std::numbers::pi)).epsilon(1e-12));
    CHECK(r.loss == doctest::Approx(0.9189).epsilon(1e-4));
  }
  SUBCASE("beta = 0 is the plain Gaussian NLL, value and gradient") {
    Rng rng(5);
    const Matrix mean = random_matrix(4, 6, rng);
    const Matrix var = elu_plus_one(random_matrix(4, 6, rng));
    const Matrix target = random_matrix(4, 6, rng);
    const auto r = beta_nll(mean, var, target, 0.0);
    CHECK(r.loss == doctest::Approx(gaussian_nll(mean, var, target)).epsilon(1e-14));
    for (Index i = 0; i < mean.size(); ++i) {
      const double m = mean.data()[i], v = var.data()[i], y = target.data()[i];
      const double nll_dm = (m - y) / v;
      const double nll_dv = 0.5 / v - (y - m) * (y - m) / (2 * v * v);
      CHECK(r.d_mean.data()[i] == doctest::Approx(nll_dm).epsilon(1e-14));
      CHECK(r.d_var.data()[i] == doctest::Approx(nll_dv).epsilon(1e-14));
    }
  }
  SUBCASE("beta = 1 learns the mean like MSE") {
    const Matrix mean = (Matrix(3, 1) << 0.2, -1.0, 3.0).finished();
    const Matrix var = (Matrix(3, 1) << 0.01, 2.0, 0.5).finished();
    const Matrix target = (Matrix(3, 1) << 1.0, 1.0, 1.0).finished();
    const auto r = beta_nll(mean, var, target, 1.0);
    for (Index i = 0; i < 3; ++i) CHECK(r.d_mean(i) == doctest::Approx(-(target(i) - mean(i))).epsilon(1e-12));
  }
  SUBCASE("non-positive variance") {
    CHECK_THROWS_AS(beta_nll(zero, zero, zero, 0.5), NumericError);
    CHECK_THROWS_AS(beta_nll(zero, -one, zero, 0.5), NumericError);
  }
  SUBCASE("gradients match finite differences with the scale held fixed") {
    Rng rng(9);
    const Matrix mean = random_matrix(3, 2, rng);
    const Matrix var = elu_plus_one(random_matrix(3, 2, rng));
    const Matrix target = random_matrix(3, 2, rng);
    const double beta = 0.5;
    const auto r = beta_nll(mean, var, target, beta);
    // The detached factor: differentiate the NLL at fixed scale var^beta.
    auto loss_at = [&](const Matrix& m, const Matrix& v) {
      double total = 0.0;
      for (Index i = 0; i < m.size(); ++i) {
        const double s = std::pow(var.data()[i], beta);
        const double e = target.data()[i] - m.data()[i];
        total += s * (0.5 * std::log(2 * std::numbers::pi * v.data()[i]) + e * e / (2 * v.data()[i]));
      }
      return total;
    };
    for (Index i = 0; i < mean.size(); ++i) {
      Matrix up = mean, down = mean;
      up.data()[i] += 1e-6;
      down.data()[i] -= 1e-6;
      CHECK(r.d_mean.data()[i] == doctest::Approx((loss_at(up, var) - loss_at(down, var)) / 2e-6).epsilon(1e-6));
      Matrix vu = var, vd = var;
      vu.data()[i] += 1e-6;
      vd.data()[i] -= 1e-6;
      CHECK(r.d_var.data()[i] == doctest::Approx((loss_at(mean, vu) - loss_at(mean, vd)) / 2e-6).epsilon(1e-6));
    }
  }
}

TEST_CASE("layer gradients match finite differences") {
  Rng rng(21);
  const Matrix x = random_matrix(5, 4, rng);
  const Matrix target = random_matrix(3, 4, rng);

  SUBCASE("mlp with gaussian head under beta-nll") {
    Mlp mlp("mlp", MlpConfig{5, {8, 6}, Activation::tanh, Activation::tanh});
    GaussianHead head("head", 6, 3);
    mlp.initialize(rng);
    head.initialize(rng);
    ParamRefs params;
    mlp.collect(params);
    head.collect(params);

    // Scale held fixed at the current variances, as beta-nll prescribes.
    const GaussianBatch g0 = head.forward(mlp.forward(x));
    const Matrix scale = g0.var.array().sqrt().matrix();
    auto loss = [&] {
      const GaussianBatch g = head.forward(mlp.forward(x));
      double total = 0.0;
      for (Index i = 0; i < g.mean.size(); ++i) {
        const double e = target.data()[i] - g.mean.data()[i];
        const double v = g.var.data()[i];
        total += scale.data()[i] * (0.5 * std::log(2 * std::numbers::pi * v) + e * e / (2 * v));
      }
      return total;
    };
    zero_grads(params);
    Mlp::Cache mc;
    GaussianHead::Cache hc;
    const GaussianBatch g = head.forward(mlp.forward(x, &mc), &hc);
    const auto l = beta_nll(g.mean, g.var, target, 0.5);
    mlp.backward(head.backward(l.d_mean, l.d_var, hc), mc);
    const auto report = testing::check_gradients(params, loss);
    INFO(report.worst_tensor);
    CHECK(report.worst_relative_error < 1e-4);
  }

  SUBCASE("multiplicative layer") {
    MultiplicativeLayer m("mult", 5, 5, 3, Activation::tanh, Activation::sigmoid);
    m.initialize(rng);
    ParamRefs params;
    m.collect(params);
    const Matrix xb = random_matrix(5, 4, rng);
    auto loss = [&] { return 0.5 * (m.forward(x, xb) - target).squaredNorm(); };
    zero_grads(params);
    MultiplicativeLayer::Cache c;
    const Matrix out = m.forward(x, xb, &c);
    m.backward(out - target, c);
    const auto report = testing::check_gradients(params, loss);
    CHECK(report.worst_relative_error < 1e-4);
  }
}

TEST_CASE("gaussian head with detached variance") {
  Rng rng(4);
  GaussianHead head("head", 6, 3);
  head.set_detach_variance(true);
  head.set_variance_bias_init(-4.0);
  Rng init_a(9), init_b(9);
  head.initialize(init_a);
  GaussianHead plain("head", 6, 3);
  plain.initialize(init_b);
  CHECK((head.var_layer().bias.value.array() - plain.var_layer().bias.value.array() + 4.0).abs().maxCoeff() < 1e-15);

  const Matrix f = random_matrix(6, 5, rng);
  const Matrix dmean = random_matrix(3, 5, rng);
  const Matrix dvar = random_matrix(3, 5, rng);
  GaussianHead::Cache c;
  head.forward(f, &c);
  const Matrix df = head.backward(dmean, dvar, c);
  CHECK(df.isApprox(head.mean_layer().weight.value.transpose() * dmean, 1e-12));
  // The variance readout itself still receives its gradient.
  CHECK(head.var_layer().bias.grad.norm() > 0.0);
}

TEST_CASE("adam_step") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    ParamTensor p("p", 3, 2);
    p.value << 1, 2, 3, 4, 5, 6;
    const Matrix before = p.value;
    Adam opt(AdamConfig{});
    for (int i = 0; i < 3; ++i) opt.step({&p});
    CHECK(p.value == before);
    CHECK(opt.step_count() == 3);
  }
  SUBCASE("global norm clipped to the limit") {
    ParamTensor a("a", 2, 1), b("b", 1, 1);
    a.grad << 0.6, 0.0;
    b.grad << 0.8;
    const double norm = clip_grad_norm({&a, &b}, 0.1);
    CHECK(norm == doctest::Approx(1.0));
    CHECK(grad_norm({&a, &b}) == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(a.grad(0) / b.grad(0) == doctest::Approx(0.75));
  }
  SUBCASE("two steps match the hand-rolled recurrence") {
    const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8, g = 0.5;
    ParamTensor p("p", 1, 1);
    p.value(0) = 1.0;
    Adam opt(AdamConfig{lr, b1, b2, eps, 0.0});
    double theta = 1.0, m = 0.0, v = 0.0;
    for (int k = 1; k <= 2; ++k) {
      p.grad(0) = g;
      opt.step({&p});
      m = b1 * m + (1 - b1) * g;
      v = b2 * v + (1 - b2) * g * g;
      const double mh = m / (1 - std::pow(b1, k));
      const double vh = v / (1 - std::pow(b2, k));
      theta -= lr * mh / (std::sqrt(vh) + eps);
    }
    CHECK(p.value(0) == doctest::Approx(theta).epsilon(1e-14));
    CHECK(p.value(0) == doctest::Approx(0.8).epsilon(1e-6));
  }
  SUBCASE("parameter set must stay fixed") {
    ParamTensor a("a", 1, 1), b("b", 1, 1);
    Adam opt;
    opt.step({&a});
    CHECK_THROWS_AS(opt.step({&b}), ConfigError);
  }
}

TEST_CASE("checkpoint round trip") {
  Rng rng(4);
  Mlp net("net", MlpConfig{3, {4, 2}, Activation::tanh, Activation::linear});
  net.initialize(rng);
  ParamRefs params;
  net.collect(params);
  for (auto* p : params) p->grad = random_matrix(p->value.rows(), p->value.cols(), rng);
  Adam opt(AdamConfig{1e-3, 0.9, 0.999, 1e-4, 0.1});
  opt.step(params);
  opt.step(params);

  const auto path = std::filesystem::temp_directory_path() / "evhier_ckpt_test.bin";
  write_checkpoint(path, make_checkpoint("{\"k\":1}", params, &opt));
  const Checkpoint back = read_checkpoint(path);
  CHECK(back.metadata == "{\"k\":1}");
  REQUIRE(back.tensors.size() == params.size());
  CHECK(back.tensors[0].shape == std::vector<std::uint64_t>{4, 3});
  // Row-major layout.
  CHECK(back.tensors[0].values[1] == params[0]->value(0, 1));

  Mlp other("net", MlpConfig{3, {4, 2}, Activation::tanh, Activation::linear});
  ParamRefs other_params;
  other.collect(other_params);
  load_parameters(back, other_params);
  for (std::size_t i = 0; i < params.size(); ++i) CHECK(other_params[i]->value == params[i]->value);

  Adam restored;
  REQUIRE(load_optimizer(back, restored));
  CHECK(restored.step_count() == 2);
  CHECK(restored.config().eps == 1e-4);
  CHECK(restored.moments()[1].second == opt.moments()[1].second);

  Mlp wrong("net", MlpConfig{3, {5, 2}, Activation::tanh, Activation::linear});
  ParamRefs wrong_params;
  wrong.collect(wrong_params);
  CHECK_THROWS_AS(load_parameters(back, wrong_params), ConfigError);
  std::filesystem::remove(path);
}
