#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "esc/errors.hpp"

namespace esc::ad {

template <typename T>
struct TensorData {
  std::vector<std::size_t> shape;
  std::vector<T> v;
  std::vector<T> g;  // allocated on first use
  bool requires_grad = false;
};

// Shared handle to a dense row-major tensor. Copies alias the same storage,
// which is what the tape's backward closures rely on.
template <typename T>
class Tensor {
 public:
  Tensor() : d_(std::make_shared<TensorData<T>>()) {}

  explicit Tensor(std::vector<std::size_t> shape, T fill = T(0))
      : d_(std::make_shared<TensorData<T>>()) {
    d_->shape = std::move(shape);
    d_->v.assign(count(d_->shape), fill);
  }

  static Tensor from(std::vector<std::size_t> shape, std::vector<T> values) {
    if (count(shape) != values.size()) {
      throw ShapeError("tensor: " + std::to_string(values.size()) +
                       " values for a shape holding " +
                       std::to_string(count(shape)));
    }
    Tensor t;
    t.d_->shape = std::move(shape);
    t.d_->v = std::move(values);
    return t;
  }

  const std::vector<std::size_t>& shape() const { return d_->shape; }
  std::size_t rank() const { return d_->shape.size(); }
  std::size_t dim(std::size_t i) const { return d_->shape[i]; }
  std::size_t size() const { return d_->v.size(); }

  T* data() { return d_->v.data(); }
  const T* data() const { return d_->v.data(); }
  std::vector<T>& values() { return d_->v; }
  const std::vector<T>& values() const { return d_->v; }

  bool requires_grad() const { return d_->requires_grad; }
  void set_requires_grad(bool rg) { d_->requires_grad = rg; }

  bool has_grad() const { return !d_->g.empty(); }
  T* grad() {
    if (d_->g.empty()) d_->g.assign(d_->v.size(), T(0));
    return d_->g.data();
  }
  const std::vector<T>& grad_vec() const { return d_->g; }
  void clear_grad() {
    if (!d_->g.empty()) d_->g.assign(d_->v.size(), T(0));
  }

  bool same_storage(const Tensor& other) const { return d_ == other.d_; }

  static std::size_t count(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }

 private:
  std::shared_ptr<TensorData<T>> d_;
};

// Records backward closures in forward order; backward() runs them in exact
// reverse insertion order, then discards them.
template <typename T>
class Tape {
 public:
  void record(std::function<void()> fn) { fns_.push_back(std::move(fn)); }

  bool grad_enabled() const { return enabled_; }
  void set_grad_enabled(bool e) { enabled_ = e; }

  std::size_t size() const { return fns_.size(); }
  void clear() { fns_.clear(); }

  void backward(Tensor<T>& loss) {
    if (loss.size() != 1) {
      throw ArgumentError("backward: loss must be a scalar tensor");
    }
    loss.grad()[0] += T(1);
    for (auto it = fns_.rbegin(); it != fns_.rend(); ++it) (*it)();
    fns_.clear();
  }

 private:
  std::vector<std::function<void()>> fns_;
  bool enabled_ = true;
};

template <typename T>
class NoGradGuard {
 public:
  explicit NoGradGuard(Tape<T>& tape) : tape_(tape), prev_(tape.grad_enabled()) {
    tape_.set_grad_enabled(false);
  }
  ~NoGradGuard() { tape_.set_grad_enabled(prev_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  Tape<T>& tape_;
  bool prev_;
};

template <typename T>
struct Param {
  Tensor<T> t;
  std::string name;
  bool decay = false;  // L2 applies to multiplicative weights only
};

}  // namespace esc::ad
