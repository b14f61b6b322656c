#include "esc/optim.hpp"

#include "esc/errors.hpp"
#include "esc/kernels.hpp"

namespace esc::ad {

template <typename T>
void SgdNesterov<T>::step(T lr) {
  const auto& k = kernels::table<T>();
  for (std::size_t i = 0; i < params_->size(); ++i) {
    Param<T>& p = (*params_)[i];
    const std::size_t n = p.t.size();
    if (velocity_[i].size() != n) {
      throw ShapeError("SgdNesterov: param " + p.name + " changed size");
    }
    T* g = p.t.grad();
    if (p.decay && l2_ != T(0)) {
      k.axpy(n, l2_, p.t.data(), g);  // grad is zeroed after the step anyway
    }
    k.nesterov(n, lr, momentum_, g, velocity_[i].data(), p.t.data());
    if (!k.all_finite(n, p.t.data())) {
      throw NumericError("SgdNesterov: non-finite update of " + p.name);
    }
  }
}

template <typename T>
void SgdNesterov<T>::zero_grad() {
  for (auto& p : *params_) p.t.clear_grad();
}

template class SgdNesterov<float>;
template class SgdNesterov<double>;

}  // namespace esc::ad
