#pragma once

#include <cstddef>
#include <vector>

#include "esc/tensor.hpp"

namespace esc::ad {

// SGD with Nesterov momentum:
//   g_eff = grad + l2 * param   (decay-flagged params only)
//   v     = mu * v - lr * g_eff
//   param = param + mu * v - lr * g_eff
// Velocity slots are keyed by position in the param list, which therefore
// must stay stable across steps.
template <typename T>
class SgdNesterov {
 public:
  SgdNesterov(std::vector<Param<T>>* params, T momentum, T l2)
      : params_(params), momentum_(momentum), l2_(l2) {
    velocity_.resize(params->size());
    for (std::size_t i = 0; i < params->size(); ++i) {
      velocity_[i].assign((*params)[i].t.size(), T(0));
    }
  }

  void step(T lr);
  void zero_grad();

  const std::vector<std::vector<T>>& velocity() const { return velocity_; }

 private:
  std::vector<Param<T>>* params_;
  T momentum_;
  T l2_;
  std::vector<std::vector<T>> velocity_;
};

}  // namespace esc::ad
