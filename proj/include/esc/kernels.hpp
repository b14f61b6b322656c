#pragma once

#include <cstddef>
#include <string>

namespace esc::kernels {

// Dense inner loops used by the tensor engine. Every entry has a scalar
// reference implementation and, on x86 with AVX2+FMA, a vectorized variant.
// The active table is chosen once at startup from CPU capabilities and can be
// overridden with set_backend() or the ESC_KERNELS env var (scalar|avx2).
//
// The two backends are equivalence-tested against each other; they are not
// bit-identical (FMA and different summation orders), so comparisons use a
// relative tolerance.

enum class Backend { scalar, avx2 };

bool avx2_supported();
Backend active_backend();
void set_backend(Backend b);  // throws ArgumentError if unsupported
std::string backend_name(Backend b);

template <typename T>
struct Table {
  // C[M x N] = A[M x K] * B[K x N]; accumulate adds into C instead of overwriting.
  void (*matmul_nn)(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b,
                    T* c, bool accumulate);
  // C[K x N] = A^T * B with A[M x K], B[M x N].
  void (*matmul_tn)(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b,
                    T* c, bool accumulate);
  // C[M x K] = A * B^T with A[M x N], B[K x N].
  void (*matmul_nt)(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b,
                    T* c, bool accumulate);

  void (*add)(std::size_t n, const T* a, const T* b, T* y);
  void (*sub)(std::size_t n, const T* a, const T* b, T* y);
  void (*mul)(std::size_t n, const T* a, const T* b, T* y);
  void (*axpy)(std::size_t n, T alpha, const T* x, T* y);   // y += alpha * x
  void (*scale)(std::size_t n, T alpha, const T* x, T* y);  // y = alpha * x
  T (*dot)(std::size_t n, const T* a, const T* b);
  T (*sum)(std::size_t n, const T* a);

  void (*relu)(std::size_t n, const T* x, T* y);
  // dx += dy where the saved output y is positive.
  void (*relu_bwd)(std::size_t n, const T* y, const T* dy, T* dx);

  // v = mu*v - lr*g; p += mu*v - lr*g  (look-ahead momentum form)
  void (*nesterov)(std::size_t n, T lr, T mu, const T* g, T* v, T* p);

  bool (*all_finite)(std::size_t n, const T* x);
};

namespace detail {
extern Table<float> scalar_f32;
extern Table<double> scalar_f64;
extern Table<float> avx2_f32;
extern Table<double> avx2_f64;
extern const bool avx2_compiled;
}  // namespace detail

const Table<float>& table_f32();
const Table<double>& table_f64();

template <typename T>
const Table<T>& table();

template <>
inline const Table<float>& table<float>() {
  return table_f32();
}
template <>
inline const Table<double>& table<double>() {
  return table_f64();
}

// Direct access to a specific backend (equivalence tests).
template <typename T>
const Table<T>& table_for(Backend b);

template <>
const Table<float>& table_for<float>(Backend b);
template <>
const Table<double>& table_for<double>(Backend b);

}  // namespace esc::kernels
