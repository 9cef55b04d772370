#pragma once

#include <span>
#include <string>
#include <vector>

#include "stbp/network.hpp"

namespace stbp {

struct SgdConfig {
  double lr = 0.1;
  double momentum = 0.9;
  int decay_every = 35;       // epochs
  double decay_factor = 0.1;

  void validate() const;
  // Learning rate for a 1-based epoch: lr * factor^floor((epoch-1)/every).
  double lr_at(int epoch) const;
};

// SGD with heavy-ball momentum: v <- m*v + g; p <- p - lr*v.
template <typename Real>
class SgdT {
 public:
  explicit SgdT(SgdConfig config = {});

  const SgdConfig& config() const { return config_; }
  double lr() const { return lr_; }
  void set_lr(double lr);
  // Applies the schedule for a 1-based epoch.
  void set_epoch(int epoch) { set_lr(config_.lr_at(epoch)); }

  // Updates every array in `params` in place. The first call sizes the
  // velocity buffers; later calls require identical shapes.
  void step(std::span<ParamRef<Real>> params,
            std::span<const std::vector<Real>> grads);
  void step(NetworkT<Real>& net, const Gradients<Real>& grads);

  std::vector<std::vector<Real>>& velocity() { return velocity_; }
  const std::vector<std::vector<Real>>& velocity() const { return velocity_; }

 private:
  SgdConfig config_;
  double lr_ = 0.0;
  std::vector<std::vector<Real>> velocity_;
};

using Sgd = SgdT<float>;

}  // namespace stbp
