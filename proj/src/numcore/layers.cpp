#include "evhier/numcore/layers.hpp"

#include <cmath>

namespace evhier::numcore {

namespace {

void check_rows(const Matrix& m, Index expected, const char* what) {
  if (m.rows() != expected) {
    throw ConfigError(std::string(what) + ": expected width " + std::to_string(expected) + ", got " +
                      std::to_string(m.rows()));
  }
}

}  // namespace

Dense::Dense(const std::string& name, Index in_width, Index out_width)
    : weight(name + ".weight", out_width, in_width), bias(name + ".bias", out_width, 1) {
  if (in_width <= 0 || out_width <= 0) throw ConfigError("dense layer widths must be positive");
}

void Dense::initialize(Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_width()));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Index i = 0; i < weight.value.size(); ++i) weight.value.data()[i] = dist(rng);
  for (Index i = 0; i < bias.value.size(); ++i) bias.value.data()[i] = dist(rng);
}

Matrix Dense::forward(const Matrix& x) const {
  check_rows(x, in_width(), weight.name.c_str());
  Matrix y = weight.value * x;
  y.colwise() += bias.value.col(0);
  return y;
}

Matrix Dense::backward(const Matrix& x, const Matrix& dy) {
  weight.grad.noalias() += dy * x.transpose();
  bias.grad.col(0) += dy.rowwise().sum();
  return weight.value.transpose() * dy;
}

Vector dense_forward(const Vector& input, const Matrix& weights, const Vector& bias) {
  if (input.size() != weights.cols()) throw ConfigError("dense_forward: input length does not match weight columns");
  if (bias.size() != weights.rows()) throw ConfigError("dense_forward: bias length does not match weight rows");
  return weights * input + bias;
}

void MlpConfig::validate() const {
  if (input_width <= 0) throw ConfigError("mlp: input width must be positive");
  if (layer_widths.empty()) throw ConfigError("mlp: at least one layer required");
  for (Index w : layer_widths) {
    if (w <= 0) throw ConfigError("mlp: layer widths must be positive");
  }
}

Mlp::Mlp(const std::string& name, MlpConfig config) : config_(std::move(config)) {
  config_.validate();
  Index in = config_.input_width;
  for (std::size_t i = 0; i < config_.layer_widths.size(); ++i) {
    layers_.emplace_back(name + "." + std::to_string(i), in, config_.layer_widths[i]);
    in = config_.layer_widths[i];
  }
}

void Mlp::initialize(Rng& rng) {
  for (auto& l : layers_) l.initialize(rng);
}

Matrix Mlp::forward(const Matrix& x, Cache* cache) const {
  if (cache) {
    cache->input = x;
    cache->pre.resize(layers_.size());
    cache->post.resize(layers_.size());
  }
  Matrix h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Activation act = (i + 1 == layers_.size()) ? config_.head : config_.hidden;
    Matrix pre = layers_[i].forward(h);
    h = apply(act, pre);
    if (cache) {
      cache->pre[i] = std::move(pre);
      cache->post[i] = h;
    }
  }
  return h;
}

Matrix Mlp::backward(const Matrix& dy, const Cache& cache) {
  Matrix grad = dy;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    const Activation act = (k + 1 == layers_.size()) ? config_.head : config_.hidden;
    grad.array() *= derivative(act, cache.pre[k], cache.post[k]).array();
    const Matrix& in = k == 0 ? cache.input : cache.post[k - 1];
    grad = layers_[k].backward(in, grad);
  }
  return grad;
}

void Mlp::collect(ParamRefs& out) {
  for (auto& l : layers_) l.collect(out);
}

MultiplicativeLayer::MultiplicativeLayer(const std::string& name, Index in_a, Index in_b, Index width,
                                         Activation act_a, Activation act_b)
    : proj_a_(name + ".a", in_a, width), proj_b_(name + ".b", in_b, width), act_a_(act_a), act_b_(act_b) {}

void MultiplicativeLayer::initialize(Rng& rng) {
  proj_a_.initialize(rng);
  proj_b_.initialize(rng);
}

Matrix MultiplicativeLayer::forward(const Matrix& a, const Matrix& b, Cache* cache) const {
  if (a.cols() != b.cols()) throw ConfigError("multiplicative layer: batch size mismatch");
  Matrix pre_a = proj_a_.forward(a);
  Matrix pre_b = proj_b_.forward(b);
  Matrix post_a = apply(act_a_, pre_a);
  Matrix post_b = apply(act_b_, pre_b);
  Matrix out = post_a.cwiseProduct(post_b);
  if (cache) {
    cache->a = a;
    cache->b = b;
    cache->pre_a = std::move(pre_a);
    cache->pre_b = std::move(pre_b);
    cache->post_a = std::move(post_a);
    cache->post_b = std::move(post_b);
  }
  return out;
}

std::pair<Matrix, Matrix> MultiplicativeLayer::backward(const Matrix& dout, const Cache& cache) {
  Matrix dpre_a = dout.cwiseProduct(cache.post_b).cwiseProduct(derivative(act_a_, cache.pre_a, cache.post_a));
  Matrix dpre_b = dout.cwiseProduct(cache.post_a).cwiseProduct(derivative(act_b_, cache.pre_b, cache.post_b));
  Matrix da = proj_a_.backward(cache.a, dpre_a);
  Matrix db = proj_b_.backward(cache.b, dpre_b);
  return {std::move(da), std::move(db)};
}

void MultiplicativeLayer::collect(ParamRefs& out) {
  proj_a_.collect(out);
  proj_b_.collect(out);
}

GaussianHead::GaussianHead(const std::string& name, Index in_width, Index out_width)
    : mean_(name + ".mean", in_width, out_width), var_(name + ".var", in_width, out_width) {}

void GaussianHead::set_min_variance(double v) {
  if (!(v >= 0.0)) throw ConfigError("gaussian head: variance floor must be non-negative");
  min_var_ = v;
}

void GaussianHead::initialize(Rng& rng) {
  mean_.initialize(rng);
  var_.initialize(rng);
  var_.bias.value.array() += var_bias_init_;
}

GaussianBatch GaussianHead::forward(const Matrix& features, Cache* cache) const {
  GaussianBatch out;
  out.mean = mean_.forward(features);
  Matrix var_pre = var_.forward(features);
  Matrix elu = elu_plus_one(var_pre);
  out.var = min_var_ > 0.0 ? (elu.array() + min_var_).matrix() : elu;
  if (cache) {
    cache->features = features;
    cache->var_pre = std::move(var_pre);
    cache->elu = std::move(elu);
  }
  return out;
}

Matrix GaussianHead::backward(const Matrix& dmean, const Matrix& dvar, const Cache& cache) {
  Matrix dvar_pre =
      dvar.cwiseProduct(derivative(Activation::elu_plus_one, cache.var_pre, cache.elu));
  Matrix df = mean_.backward(cache.features, dmean);
  Matrix dv = var_.backward(cache.features, dvar_pre);
  if (!detach_var_) df += dv;
  return df;
}

void GaussianHead::collect(ParamRefs& out) {
  mean_.collect(out);
  var_.collect(out);
}

}  // namespace evhier::numcore
