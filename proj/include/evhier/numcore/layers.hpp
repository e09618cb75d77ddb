#pragma once

#include "evhier/common.hpp"
#include "evhier/numcore/activations.hpp"
#include "evhier/numcore/tensor.hpp"

#include <string>
#include <utility>
#include <vector>

namespace evhier::numcore {

/// Affine map y = W x + b applied column-wise to a batch.
class Dense {
 public:
  Dense() = default;
  Dense(const std::string& name, Index in_width, Index out_width);

  Index in_width() const { return weight.value.cols(); }
  Index out_width() const { return weight.value.rows(); }

  /// Uniform in +-1/sqrt(fan_in) for weights and bias.
  void initialize(Rng& rng);

  Matrix forward(const Matrix& x) const;
  /// Accumulates dW and db, returns dL/dx.
  Matrix backward(const Matrix& x, const Matrix& dy);

  void collect(ParamRefs& out) { out.push_back(&weight); out.push_back(&bias); }

  ParamTensor weight;
  ParamTensor bias;
};

/// Single-vector affine map; checks widths.
Vector dense_forward(const Vector& input, const Matrix& weights, const Vector& bias);

struct MlpConfig {
  Index input_width = 0;
  std::vector<Index> layer_widths;
  Activation hidden = Activation::tanh;
  /// Activation of the last layer.
  Activation head = Activation::tanh;

  void validate() const;
};

/// Stack of dense layers. Every layer but the last uses `hidden`.
class Mlp {
 public:
  struct Cache {
    Matrix input;
    std::vector<Matrix> pre;
    std::vector<Matrix> post;
  };

  Mlp() = default;
  Mlp(const std::string& name, MlpConfig config);

  const MlpConfig& config() const { return config_; }
  Index input_width() const { return config_.input_width; }
  Index output_width() const { return config_.layer_widths.back(); }

  void initialize(Rng& rng);
  Matrix forward(const Matrix& x, Cache* cache = nullptr) const;
  Matrix backward(const Matrix& dy, const Cache& cache);
  void collect(ParamRefs& out);

 private:
  MlpConfig config_;
  std::vector<Dense> layers_;
};

/// out = act_a(proj_a(a)) * act_b(proj_b(b)), elementwise.
class MultiplicativeLayer {
 public:
  struct Cache {
    Matrix a, b;
    Matrix pre_a, pre_b, post_a, post_b;
  };

  MultiplicativeLayer() = default;
  MultiplicativeLayer(const std::string& name, Index in_a, Index in_b, Index width,
                      Activation act_a = Activation::linear, Activation act_b = Activation::linear);

  Index width() const { return proj_a_.out_width(); }
  Index in_a() const { return proj_a_.in_width(); }
  Index in_b() const { return proj_b_.in_width(); }

  void initialize(Rng& rng);
  Matrix forward(const Matrix& a, const Matrix& b, Cache* cache = nullptr) const;
  std::pair<Matrix, Matrix> backward(const Matrix& dout, const Cache& cache);
  void collect(ParamRefs& out);

  Dense& proj_a() { return proj_a_; }
  Dense& proj_b() { return proj_b_; }

 private:
  Dense proj_a_, proj_b_;
  Activation act_a_ = Activation::linear;
  Activation act_b_ = Activation::linear;
};

/// Batched diagonal Gaussian: one column per sample.
struct GaussianBatch {
  Matrix mean;
  Matrix var;
};

/// Separate read-outs for the mean (linear) and the variance (ELU + 1,
/// plus an optional constant floor).
class GaussianHead {
 public:
  struct Cache {
    Matrix features;
    Matrix var_pre;
    Matrix elu;  // ELU + 1 before the floor
  };

  GaussianHead() = default;
  GaussianHead(const std::string& name, Index in_width, Index out_width);

  Index out_width() const { return mean_.out_width(); }
  double min_variance() const { return min_var_; }
  void set_min_variance(double v);
  /// When set, the variance readout does not send gradient into the features.
  bool detach_variance() const { return detach_var_; }
  void set_detach_variance(bool on) { detach_var_ = on; }
  /// Added to the variance bias after initialization.
  void set_variance_bias_init(double b) { var_bias_init_ = b; }

  void initialize(Rng& rng);
  GaussianBatch forward(const Matrix& features, Cache* cache = nullptr) const;
  Matrix backward(const Matrix& dmean, const Matrix& dvar, const Cache& cache);
  void collect(ParamRefs& out);

  Dense& mean_layer() { return mean_; }
  Dense& var_layer() { return var_; }

 private:
  Dense mean_, var_;
  double min_var_ = 0.0;
  bool detach_var_ = false;
  double var_bias_init_ = 0.0;
};

}  // namespace evhier::numcore
