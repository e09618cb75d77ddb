#include "evhier/numcore/activations.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace evhier::numcore {

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::linear: return "linear";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
    case Activation::retanh: return "retanh";
    case Activation::elu_plus_one: return "elu_plus_one";
  }
  return "linear";
}

Activation activation_from_string(std::string_view s) {
  if (s == "linear") return Activation::linear;
  if (s == "tanh") return Activation::tanh;
  if (s == "sigmoid") return Activation::sigmoid;
  if (s == "retanh") return Activation::retanh;
  if (s == "elu_plus_one") return Activation::elu_plus_one;
  throw ConfigError("unknown activation '" + std::string(s) + "'");
}

Matrix retanh(const Matrix& x) {
  // tanh rounds to exactly 1 for large inputs; keep the gate below 1.
  static constexpr double kBelowOne = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
  return x.unaryExpr([](double v) { return v > 0.0 ? std::min(std::tanh(v), kBelowOne) : 0.0; });
}

Matrix elu_plus_one(const Matrix& x) {
  // exp underflows for very negative inputs; the smallest normal keeps the
  // result strictly positive.
  return x.unaryExpr([](double v) {
    return v > 0.0 ? v + 1.0 : std::max(std::exp(v), std::numeric_limits<double>::min());
  });
}

Matrix fast_tanh(const Matrix& x) {
  // Vectorized exp instead of scalar libm tanh; absolute error ~1e-16.
  const Eigen::ArrayXXd t = (-2.0 * x.array().abs()).exp();
  return (x.array().sign() * (1.0 - t) / (1.0 + t)).matrix();
}

Matrix apply(Activation a, const Matrix& pre) {
  switch (a) {
    case Activation::linear: return pre;
    case Activation::tanh: return fast_tanh(pre);
    case Activation::sigmoid: return (1.0 / (1.0 + (-pre.array()).exp())).matrix();
    case Activation::retanh: return retanh(pre);
    case Activation::elu_plus_one: return elu_plus_one(pre);
  }
  return pre;
}

Matrix derivative(Activation a, const Matrix& pre, const Matrix& post) {
  switch (a) {
    case Activation::linear: return Matrix::Ones(pre.rows(), pre.cols());
    case Activation::tanh: return (1.0 - post.array().square()).matrix();
    case Activation::sigmoid: return (post.array() * (1.0 - post.array())).matrix();
    case Activation::retanh:
      return pre.binaryExpr(post, [](double z, double y) { return z > 0.0 ? 1.0 - y * y : 0.0; });
    case Activation::elu_plus_one:
      return pre.binaryExpr(post, [](double z, double y) { return z > 0.0 ? 1.0 : y; });
  }
  return Matrix::Ones(pre.rows(), pre.cols());
}

}  // namespace evhier::numcore
