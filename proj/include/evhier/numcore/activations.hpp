#pragma once

#include "evhier/common.hpp"

#include <string_view>

namespace evhier::numcore {

enum class Activation { linear, tanh, sigmoid, retanh, elu_plus_one };

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view s);

/// Elementwise max(0, tanh(x)); output in [0, 1).
Matrix retanh(const Matrix& x);
/// Elementwise ELU(x) + 1; output strictly positive.
Matrix elu_plus_one(const Matrix& x);

/// tanh through the vectorized exponential.
Matrix fast_tanh(const Matrix& x);

Matrix apply(Activation a, const Matrix& pre);

/// d act / d pre, evaluated from the pre-activation and the activation output.
Matrix derivative(Activation a, const Matrix& pre, const Matrix& post);

}  // namespace evhier::numcore
