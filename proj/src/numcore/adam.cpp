#include "evhier/numcore/adam.hpp"

#include <cmath>

namespace evhier::numcore {

double clip_grad_norm(const ParamRefs& params, double max_norm) {
  const double norm = grad_norm(params);
  if (!std::isfinite(norm)) throw NumericError("non-finite gradient norm");
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto* p : params) p->grad *= scale;
  }
  return norm;
}

void Adam::bind(const ParamRefs& params) {
  if (moments_.empty()) {
    moments_.reserve(params.size());
    for (const auto* p : params) {
      moments_.push_back({p->name, Matrix::Zero(p->value.rows(), p->value.cols()),
                          Matrix::Zero(p->value.rows(), p->value.cols())});
    }
    return;
  }
  if (moments_.size() != params.size()) throw ConfigError("adam: parameter set changed between steps");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (moments_[i].name != params[i]->name || moments_[i].first.rows() != params[i]->value.rows() ||
        moments_[i].first.cols() != params[i]->value.cols()) {
      throw ConfigError("adam: parameter '" + params[i]->name + "' does not match optimizer state");
    }
  }
}

double Adam::step(const ParamRefs& params) {
  bind(params);
  const double norm = clip_grad_norm(params, config_.clip_norm);
  ++step_count_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_count_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = moments_[i];
    const Matrix& g = params[i]->grad;
    m.first = config_.beta1 * m.first + (1.0 - config_.beta1) * g;
    m.second = config_.beta2 * m.second + (1.0 - config_.beta2) * g.cwiseProduct(g);
    params[i]->value.array() -=
        config_.lr * (m.first.array() / bc1) / ((m.second.array() / bc2).sqrt() + config_.eps);
  }
  return norm;
}

void Adam::restore(std::int64_t step_count, std::vector<Moment> moments) {
  if (step_count < 0) throw InputError("adam: negative step count");
  step_count_ = step_count;
  moments_ = std::move(moments);
}

}  // namespace evhier::numcore
