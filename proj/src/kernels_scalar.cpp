// Scalar reference kernels. These define the semantics the AVX2 variants are
// tested against; keep them simple enough to audit by eye.

#include <cmath>
#include <cstddef>

#include "esc/kernels.hpp"

namespace esc::kernels {
namespace {

template <typename T>
void matmul_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
               bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    if (!accumulate) {
      for (std::size_t j = 0; j < n; ++j) crow[j] = T(0);
    }
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
void matmul_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
               bool accumulate) {
  if (!accumulate) {
    for (std::size_t i = 0; i < k * n; ++i) c[i] = T(0);
  }
  for (std::size_t r = 0; r < m; ++r) {
    const T* arow = a + r * k;
    const T* brow = b + r * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      T* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
void matmul_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
               bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T* brow = b + p * n;
      T acc = T(0);
      for (std::size_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
      if (accumulate)
        c[i * k + p] += acc;
      else
        c[i * k + p] = acc;
    }
  }
}

template <typename T>
void add(std::size_t n, const T* a, const T* b, T* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

template <typename T>
void sub(std::size_t n, const T* a, const T* b, T* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a[i] - b[i];
}

template <typename T>
void mul(std::size_t n, const T* a, const T* b, T* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a[i] * b[i];
}

template <typename T>
void axpy(std::size_t n, T alpha, const T* x, T* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
void scale(std::size_t n, T alpha, const T* x, T* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] = alpha * x[i];
}

template <typename T>
T dot(std::size_t n, const T* a, const T* b) {
  T acc = T(0);
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <typename T>
T sum(std::size_t n, const T* a) {
  T acc = T(0);
  for (std::size_t i = 0; i < n; ++i) acc += a[i];
  return acc;
}

template <typename T>
void relu(std::size_t n, const T* x, T* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
void relu_bwd(std::size_t n, const T* y, const T* dy, T* dx) {
  for (std::size_t i = 0; i < n; ++i) {
    if (y[i] > T(0)) dx[i] += dy[i];
  }
}

template <typename T>
void nesterov(std::size_t n, T lr, T mu, const T* g, T* v, T* p) {
  for (std::size_t i = 0; i < n; ++i) {
    const T vn = mu * v[i] - lr * g[i];
    v[i] = vn;
    p[i] += mu * vn - lr * g[i];
  }
}

template <typename T>
bool all_finite(std::size_t n, const T* x) {
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(x[i])) return false;
  }
  return true;
}

template <typename T>
Table<T> make_table() {
  Table<T> t;
  t.matmul_nn = &matmul_nn<T>;
  t.matmul_tn = &matmul_tn<T>;
  t.matmul_nt = &matmul_nt<T>;
  t.add = &add<T>;
  t.sub = &sub<T>;
  t.mul = &mul<T>;
  t.axpy = &axpy<T>;
  t.scale = &scale<T>;
  t.dot = &dot<T>;
  t.sum = &sum<T>;
  t.relu = &relu<T>;
  t.relu_bwd = &relu_bwd<T>;
  t.nesterov = &nesterov<T>;
  t.all_finite = &all_finite<T>;
  return t;
}

}  // namespace

namespace detail {
Table<float> scalar_f32 = make_table<float>();
Table<double> scalar_f64 = make_table<double>();
}  // namespace detail

}  // namespace esc::kernels
