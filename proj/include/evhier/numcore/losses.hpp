#pragma once

#include "evhier/common.hpp"

namespace evhier::numcore {

struct LossGrad {
  double loss = 0.0;
  Matrix d_mean;
  Matrix d_var;
};

/// Beta-NLL of a diagonal Gaussian, summed over every entry:
///   sum  sg(var)^beta * [ 0.5 log(2 pi var) + (target - mean)^2 / (2 var) ]
/// where sg() stops the gradient. beta = 0 is the plain Gaussian NLL.
/// Throws NumericError on a non-positive variance.
LossGrad beta_nll(const Matrix& mean, const Matrix& var, const Matrix& target, double beta);

/// Plain Gaussian NLL, summed over every entry.
double gaussian_nll(const Matrix& mean, const Matrix& var, const Matrix& target);

}  // namespace evhier::numcore
