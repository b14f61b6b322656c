// AVX2+FMA kernel variants. This translation unit is the only one compiled
// with -mavx2 -mfma; it is reached solely through the dispatch table after a
// runtime CPU check. Results differ from the scalar reference in rounding
// (FMA contraction, vectorized summation order), never in semantics.

#include <cstddef>

#include "esc/kernels.hpp"

#if defined(__AVX2__) && defined(__FMA__)

#include <immintrin.h>

namespace esc::kernels {
namespace {

template <typename T>
struct V;

template <>
struct V<float> {
  using reg = __m256;
  static constexpr std::size_t lanes = 8;
  static reg load(const float* p) { return _mm256_loadu_ps(p); }
  static void store(float* p, reg v) { _mm256_storeu_ps(p, v); }
  static reg set1(float v) { return _mm256_set1_ps(v); }
  static reg zero() { return _mm256_setzero_ps(); }
  static reg add(reg a, reg b) { return _mm256_add_ps(a, b); }
  static reg sub(reg a, reg b) { return _mm256_sub_ps(a, b); }
  static reg mul(reg a, reg b) { return _mm256_mul_ps(a, b); }
  static reg fmadd(reg a, reg b, reg c) { return _mm256_fmadd_ps(a, b, c); }
  static reg fnmadd(reg a, reg b, reg c) { return _mm256_fnmadd_ps(a, b, c); }
  static reg max(reg a, reg b) { return _mm256_max_ps(a, b); }
  static float hsum(reg v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    __m128 sh = _mm_movehdup_ps(lo);
    __m128 s = _mm_add_ps(lo, sh);
    sh = _mm_movehl_ps(sh, s);
    s = _mm_add_ss(s, sh);
    return _mm_cvtss_f32(s);
  }
  static bool finite_mask_all(reg x) {
    // finite(x) <=> (x - x) == 0; NaN and Inf both yield NaN on the left.
    const reg d = _mm256_sub_ps(x, x);
    const reg m = _mm256_cmp_ps(d, _mm256_setzero_ps(), _CMP_EQ_OQ);
    return _mm256_movemask_ps(m) == 0xFF;
  }
};

template <>
struct V<double> {
  using reg = __m256d;
  static constexpr std::size_t lanes = 4;
  static reg load(const double* p) { return _mm256_loadu_pd(p); }
  static void store(double* p, reg v) { _mm256_storeu_pd(p, v); }
  static reg set1(double v) { return _mm256_set1_pd(v); }
  static reg zero() { return _mm256_setzero_pd(); }
  static reg add(reg a, reg b) { return _mm256_add_pd(a, b); }
  static reg sub(reg a, reg b) { return _mm256_sub_pd(a, b); }
  static reg mul(reg a, reg b) { return _mm256_mul_pd(a, b); }
  static reg fmadd(reg a, reg b, reg c) { return _mm256_fmadd_pd(a, b, c); }
  static reg fnmadd(reg a, reg b, reg c) { return _mm256_fnmadd_pd(a, b, c); }
  static reg max(reg a, reg b) { return _mm256_max_pd(a, b); }
  static double hsum(reg v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d sh = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
  }
  static bool finite_mask_all(reg x) {
    const reg d = _mm256_sub_pd(x, x);
    const reg m = _mm256_cmp_pd(d, _mm256_setzero_pd(), _CMP_EQ_OQ);
    return _mm256_movemask_pd(m) == 0xF;
  }
};

// --- matmul_nn: R-row x 2-vector microkernel over the K loop -------------

template <typename T, int R>
void mm_nn_tile(std::size_t n, std::size_t k, const T* a, std::size_t lda, const T* b, T* c,
                std::size_t ldc, std::size_t j, bool accumulate) {
  using W = V<T>;
  constexpr std::size_t L = W::lanes;
  typename W::reg acc[R][2];
  for (int r = 0; r < R; ++r) {
    if (accumulate) {
      acc[r][0] = W::load(c + r * ldc + j);
      acc[r][1] = W::load(c + r * ldc + j + L);
    } else {
      acc[r][0] = W::zero();
      acc[r][1] = W::zero();
    }
  }
  for (std::size_t p = 0; p < k; ++p) {
    const typename W::reg b0 = W::load(b + p * n + j);
    const typename W::reg b1 = W::load(b + p * n + j + L);
    for (int r = 0; r < R; ++r) {
      const typename W::reg av = W::set1(a[r * lda + p]);
      acc[r][0] = W::fmadd(av, b0, acc[r][0]);
      acc[r][1] = W::fmadd(av, b1, acc[r][1]);
    }
  }
  for (int r = 0; r < R; ++r) {
    W::store(c + r * ldc + j, acc[r][0]);
    W::store(c + r * ldc + j + L, acc[r][1]);
  }
}

template <typename T>
void mm_nn_rows(std::size_t rows, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
                bool accumulate) {
  using W = V<T>;
  constexpr std::size_t L = W::lanes;
  std::size_t j = 0;
  for (; j + 2 * L <= n; j += 2 * L) {
    switch (rows) {
      case 4: mm_nn_tile<T, 4>(n, k, a, k, b, c, n, j, accumulate); break;
      case 3: mm_nn_tile<T, 3>(n, k, a, k, b, c, n, j, accumulate); break;
      case 2: mm_nn_tile<T, 2>(n, k, a, k, b, c, n, j, accumulate); break;
      default: mm_nn_tile<T, 1>(n, k, a, k, b, c, n, j, accumulate); break;
    }
  }
  // one-vector column block
  for (; j + L <= n; j += L) {
    for (std::size_t r = 0; r < rows; ++r) {
      typename W::reg acc = accumulate ? W::load(c + r * n + j) : W::zero();
      for (std::size_t p = 0; p < k; ++p)
        acc = W::fmadd(W::set1(a[r * k + p]), W::load(b + p * n + j), acc);
      W::store(c + r * n + j, acc);
    }
  }
  // scalar tail columns
  for (; j < n; ++j) {
    for (std::size_t r = 0; r < rows; ++r) {
      T acc = accumulate ? c[r * n + j] : T(0);
      for (std::size_t p = 0; p < k; ++p) acc += a[r * k + p] * b[p * n + j];
      c[r * n + j] = acc;
    }
  }
}

template <typename T>
void matmul_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
               bool accumulate) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) mm_nn_rows<T>(4, n, k, a + i * k, b, c + i * n, accumulate);
  if (i < m) mm_nn_rows<T>(m - i, n, k, a + i * k, b, c + i * n, accumulate);
}

// --- matmul_tn: rank-1 updates, C[p,:] += A[r,p] * B[r,:] -----------------

template <typename T>
void matmul_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
               bool accumulate) {
  using W = V<T>;
  constexpr std::size_t L = W::lanes;
  if (!accumulate) {
    for (std::size_t i = 0; i < k * n; ++i) c[i] = T(0);
  }
  for (std::size_t r = 0; r < m; ++r) {
    const T* arow = a + r * k;
    const T* brow = b + r * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      if (av == T(0)) continue;
      T* crow = c + p * n;
      const typename W::reg va = W::set1(av);
      std::size_t j = 0;
      for (; j + L <= n; j += L)
        W::store(crow + j, W::fmadd(va, W::load(brow + j), W::load(crow + j)));
      for (; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// --- matmul_nt: dot products of contiguous rows, 4 B-rows per pass --------

template <typename T>
void matmul_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
               bool accumulate) {
  using W = V<T>;
  constexpr std::size_t L = W::lanes;
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * n;
    std::size_t p = 0;
    for (; p + 4 <= k; p += 4) {
      typename W::reg acc0 = W::zero(), acc1 = W::zero(), acc2 = W::zero(), acc3 = W::zero();
      std::size_t j = 0;
      for (; j + L <= n; j += L) {
        const typename W::reg va = W::load(arow + j);
        acc0 = W::fmadd(va, W::load(b + (p + 0) * n + j), acc0);
        acc1 = W::fmadd(va, W::load(b + (p + 1) * n + j), acc1);
        acc2 = W::fmadd(va, W::load(b + (p + 2) * n + j), acc2);
        acc3 = W::fmadd(va, W::load(b + (p + 3) * n + j), acc3);
      }
      T s0 = W::hsum(acc0), s1 = W::hsum(acc1), s2 = W::hsum(acc2), s3 = W::hsum(acc3);
      for (; j < n; ++j) {
        const T av = arow[j];
        s0 += av * b[(p + 0) * n + j];
        s1 += av * b[(p + 1) * n + j];
        s2 += av * b[(p + 2) * n + j];
        s3 += av * b[(p + 3) * n + j];
      }
      T* cp = c + i * k + p;
      if (accumulate) {
        cp[0] += s0; cp[1] += s1; cp[2] += s2; cp[3] += s3;
      } else {
        cp[0] = s0; cp[1] = s1; cp[2] = s2; cp[3] = s3;
      }
    }
    for (; p < k; ++p) {
      typename W::reg acc = W::zero();
      std::size_t j = 0;
      for (; j + L <= n; j += L) acc = W::fmadd(W::load(arow + j), W::load(b + p * n + j), acc);
      T s = W::hsum(acc);
      for (; j < n; ++j) s += arow[j] * b[p * n + j];
      if (accumulate)
        c[i * k + p] += s;
      else
        c[i * k + p] = s;
    }
  }
}

// --- elementwise -----------------------------------------------------------

template <typename T, typename F, typename G>
void ew2(std::size_t n, const T* a, const T* b, T* y, F vec, G sca) {
  using W = V<T>;
  constexpr std::size_t L = W::lanes;
  std::size_t i = 0;
  for (; i + L <= n; i += L) W::store(y + i, vec(W::load(a + i), W::load(b + i)));
  for (; i < n; ++i) y[i] = sca(a[i], b[i]);
}

template <typename T>
void add(std::size_t n, const T* a, const T* b, T* y) {
  ew2<T>(n, a, b, y, [](auto x, auto z) { return V<T>::add(x, z); },
         [](T x, T z) { return x + z; });
}
template <typename T>
void sub(std::size_t n, const T* a, const T* b, T* y) {
  ew2<T>(n, a, b, y, [](auto x, auto z) { return V<T>::sub(x, z); },
         [](T x, T z) { return x - z; });
}
template <typename T>
void mul(std::size_t n, const T* a, const T* b, T* y) {
  ew2<T>(n, a, b, y, [](auto x, auto z) { return V<T>::mul(x, z); },
         [](T x, T z) { return x * z; });
}

template <typename T>
void axpy(std::size_t n, T alpha, const T* x, T* y) {
  using W = V<T>;
  constexpr std::size_t L = W::lanes;
  const typename W::reg va = W::set1(alpha);
  std::size_t i = 0;
  for (; i + L <= n; i += L) W::store(y + i, W::fmadd(va, W::load(x + i), W::load(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
void scale(std::size_t n, T alpha, const T* x, T* y) {
  using W = V<T>;
  constexpr std::size_t L = W::lanes;
  const typename W::reg va = W::set1(alpha);
  std::size_t i = 0;
  for (; i + L <= n; i += L) W::store(y + i, W::mul(va, W::load(x + i)));
  for (; i < n; ++i) y[i] = alpha * x[i];
}

template <typename T>
T dot(std::size_t n, const T* a, const T* b) {
  using W = V<T>;
  constexpr std::size_t L = W::lanes;
  typename W::reg acc0 = W::zero(), acc1 = W::zero();
  std::size_t i = 0;
  for (; i + 2 * L <= n; i += 2 * L) {
    acc0 = W::fmadd(W::load(a + i), W::load(b + i), acc0);
    acc1 = W::fmadd(W::load(a + i + L), W::load(b + i + L), acc1);
  }
  for (; i + L <= n; i += L) acc0 = W::fmadd(W::load(a + i), W::load(b + i), acc0);
  T s = W::hsum(W::add(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

template <typename T>
T sum(std::size_t n, const T* a) {
  using W = V<T>;
  constexpr std::size_t L = W::lanes;
  typename W::reg acc0 = W::zero(), acc1 = W::zero();
  std::size_t i = 0;
  for (; i + 2 * L <= n; i += 2 * L) {
    acc0 = W::add(acc0, W::load(a + i));
    acc1 = W::add(acc1, W::load(a + i + L));
  }
  for (; i + L <= n; i += L) acc0 = W::add(acc0, W::load(a + i));
  T s = W::hsum(W::add(acc0, acc1));
  for (; i < n; ++i) s += a[i];
  return s;
}

template <typename T>
void relu(std::size_t n, const T* x, T* y) {
  using W = V<T>;
  constexpr std::size_t L = W::lanes;
  const typename W::reg z = W::zero();
  std::size_t i = 0;
  for (; i + L <= n; i += L) W::store(y + i, W::max(W::load(x + i), z));
  for (; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
void relu_bwd(std::size_t n, const T* y, const T* dy, T* dx) {
  for (std::size_t i = 0; i < n; ++i) {
    if (y[i] > T(0)) dx[i] += dy[i];
  }
}

template <typename T>
void nesterov(std::size_t n, T lr, T mu, const T* g, T* v, T* p) {
  using W = V<T>;
  constexpr std::size_t L = W::lanes;
  const typename W::reg vlr = W::set1(lr);
  const typename W::reg vmu = W::set1(mu);
  std::size_t i = 0;
  for (; i + L <= n; i += L) {
    const typename W::reg vg = W::load(g + i);
    const typename W::reg vn = W::fnmadd(vlr, vg, W::mul(vmu, W::load(v + i)));
    W::store(v + i, vn);
    const typename W::reg step = W::fnmadd(vlr, vg, W::mul(vmu, vn));
    W::store(p + i, W::add(W::load(p + i), step));
  }
  for (; i < n; ++i) {
    const T vn = mu * v[i] - lr * g[i];
    v[i] = vn;
    p[i] += mu * vn - lr * g[i];
  }
}

template <typename T>
bool all_finite(std::size_t n, const T* x) {
  using W = V<T>;
  constexpr std::size_t L = W::lanes;
  std::size_t i = 0;
  for (; i + L <= n; i += L) {
    if (!W::finite_mask_all(W::load(x + i))) return false;
  }
  for (; i < n; ++i) {
    const T d = x[i] - x[i];
    if (!(d == T(0))) return false;
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
Table<float> avx2_f32 = make_table<float>();
Table<double> avx2_f64 = make_table<double>();
const bool avx2_compiled = true;
}  // namespace detail

}  // namespace esc::kernels

#else  // built without AVX2/FMA: tables stay empty and are never selected

namespace esc::kernels::detail {
Table<float> avx2_f32{};
Table<double> avx2_f64{};
const bool avx2_compiled = false;
}  // namespace esc::kernels::detail

#endif
