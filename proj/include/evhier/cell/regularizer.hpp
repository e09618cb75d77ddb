#pragma once

#include "evhier/common.hpp"

#include <span>

namespace evhier::cell {

/// Heaviside with Theta(0) = 0: a gate exactly at zero is closed.
inline double heaviside(double v) { return v > 0.0 ? 1.0 : 0.0; }

/// Number of strictly positive gate entries over all steps (each matrix is
/// one step: dims x batch).
double gate_regularizer(std::span<const Matrix> gates);

/// gate_regularizer divided by the number of gate entries.
double gate_open_rate(std::span<const Matrix> gates);

/// Straight-through surrogate of d(lambda * Theta(retanh(z))) / dz:
/// lambda * (1 - tanh(z)^2) where z > 0, zero elsewhere.
Matrix gate_regularizer_backward(const Matrix& gate_pre_activation, double lambda);

}  // namespace evhier::cell
