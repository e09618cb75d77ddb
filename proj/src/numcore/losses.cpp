#include "evhier/numcore/losses.hpp"

#include <cmath>
#include <numbers>

namespace evhier::numcore {

namespace {

void check_shapes(const Matrix& mean, const Matrix& var, const Matrix& target) {
  if (mean.rows() != var.rows() || mean.cols() != var.cols() || mean.rows() != target.rows() ||
      mean.cols() != target.cols()) {
    throw ConfigError("gaussian loss: mean, variance and target shapes differ");
  }
  if (!(var.array() > 0.0).all()) throw NumericError("gaussian loss: variance must be strictly positive");
}

}  // namespace

LossGrad beta_nll(const Matrix& mean, const Matrix& var, const Matrix& target, double beta) {
  check_shapes(mean, var, target);
  if (beta < 0.0 || beta > 1.0) throw ConfigError("beta_nll: beta must lie in [0, 1]");
  LossGrad out;
  out.d_mean.resize(mean.rows(), mean.cols());
  out.d_var.resize(mean.rows(), mean.cols());
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  double total = 0.0;
  for (Index j = 0; j < mean.cols(); ++j) {
    for (Index i = 0; i < mean.rows(); ++i) {
      const double v = var(i, j);
      const double err = target(i, j) - mean(i, j);
      const double scale = beta == 0.0 ? 1.0 : std::pow(v, beta);
      total += scale * (half_log_2pi + 0.5 * std::log(v) + err * err / (2.0 * v));
      out.d_mean(i, j) = -scale * err / v;
      out.d_var(i, j) = scale * (0.5 / v - err * err / (2.0 * v * v));
    }
  }
  out.loss = total;
  return out;
}

double gaussian_nll(const Matrix& mean, const Matrix& var, const Matrix& target) {
  check_shapes(mean, var, target);
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  const auto err = (target - mean).array();
  return (half_log_2pi + 0.5 * var.array().log() + err.square() / (2.0 * var.array())).sum();
}

}  // namespace evhier::numcore
