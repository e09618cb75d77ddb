#include "evhier/cell/regularizer.hpp"

#include <cmath>

namespace evhier::cell {

double gate_regularizer(std::span<const Matrix> gates) {
  double total = 0.0;
  for (const auto& g : gates) total += static_cast<double>((g.array() > 0.0).count());
  return total;
}

double gate_open_rate(std::span<const Matrix> gates) {
  double entries = 0.0;
  for (const auto& g : gates) entries += static_cast<double>(g.size());
  return entries > 0.0 ? gate_regularizer(gates) / entries : 0.0;
}

Matrix gate_regularizer_backward(const Matrix& gate_pre_activation, double lambda) {
  return gate_pre_activation.unaryExpr([lambda](double z) {
    if (z <= 0.0) return 0.0;
    const double t = std::tanh(z);
    return lambda * (1.0 - t * t);
  });
}

}  // namespace evhier::cell
