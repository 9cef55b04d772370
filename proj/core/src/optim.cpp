#include "stbp/optim.hpp"

#include <cmath>
#include <string>

#include "stbp/errors.hpp"

namespace stbp {

void SgdConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) {
    throw ConfigError("lr must be positive, got " + std::to_string(lr));
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw ConfigError("momentum must lie in [0, 1), got " +
                      std::to_string(momentum));
  }
  if (decay_every < 1) {
    throw ConfigError("lr_decay_every must be a positive epoch count");
  }
  if (!(decay_factor > 0.0 && decay_factor < 1.0)) {
    throw ConfigError("lr_decay_factor must lie in (0, 1), got " +
                      std::to_string(decay_factor));
  }
}

double SgdConfig::lr_at(int epoch) const {
  if (epoch < 1) throw ConfigError("epochs are numbered from 1");
  return lr * std::pow(decay_factor, (epoch - 1) / decay_every);
}

template <typename Real>
SgdT<Real>::SgdT(SgdConfig config) : config_(config), lr_(config.lr) {
  config_.validate();
}

template <typename Real>
void SgdT<Real>::set_lr(double lr) {
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  lr_ = lr;
}

template <typename Real>
void SgdT<Real>::step(std::span<ParamRef<Real>> params,
                      std::span<const std::vector<Real>> grads) {
  if (params.size() != grads.size()) {
    throw DimensionError("sgd_step: " + std::to_string(params.size()) +
                         " parameters but " + std::to_string(grads.size()) +
                         " gradients");
  }
  if (velocity_.empty()) {
    velocity_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      velocity_[i].assign(params[i].values.size(), Real(0));
    }
  } else if (velocity_.size() != params.size()) {
    throw DimensionError("sgd_step: parameter count changed from " +
                         std::to_string(velocity_.size()) + " to " +
                         std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].values;
    const auto& g = grads[i];
    auto& v = velocity_[i];
    if (g.size() != p.size() || v.size() != p.size()) {
      throw DimensionError("sgd_step: '" + params[i].name + "' has " +
                           std::to_string(p.size()) + " values, gradient " +
                           std::to_string(g.size()) + ", velocity " +
                           std::to_string(v.size()));
    }
  }
  const Real m = static_cast<Real>(config_.momentum);
  const Real lr = static_cast<Real>(lr_);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].values;
    const auto& g = grads[i];
    auto& v = velocity_[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      v[j] = m * v[j] + g[j];
      p[j] -= lr * v[j];
    }
  }
}

template <typename Real>
void SgdT<Real>::step(NetworkT<Real>& net, const Gradients<Real>& grads) {
  auto params = net.parameters();
  step(std::span<ParamRef<Real>>(params),
       std::span<const std::vector<Real>>(grads.params));
}

template class SgdT<float>;
template class SgdT<double>;

}  // namespace stbp
