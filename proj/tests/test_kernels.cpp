#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "esc/kernels.hpp"
#include "esc/rng.hpp"

namespace k = esc::kernels;
using esc::Rng;

namespace {

template <typename T>
std::vector<T> random_vec(Rng& rng, std::size_t n) {
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(rng.uniform(-1.0, 1.0));
  return v;
}

// Plain reference products, independent of the kernel layer.
template <typename T>
void ref_nn(std::size_t m, std::size_t n, std::size_t kk, const T* a,
            const T* b, T* c) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < kk; ++p)
        acc += double(a[i * kk + p]) * double(b[p * n + j]);
      c[i * n + j] = static_cast<T>(acc);
    }
}

template <typename T>
void ref_tn(std::size_t m, std::size_t n, std::size_t kk, const T* a,
            const T* b, T* c) {
  // A is [m x kk], B is [m x n], C = A^T B is [kk x n].
  for (std::size_t i = 0; i < kk; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < m; ++p)
        acc += double(a[p * kk + i]) * double(b[p * n + j]);
      c[i * n + j] = static_cast<T>(acc);
    }
}

template <typename T>
void ref_nt(std::size_t m, std::size_t n, std::size_t kk, const T* a,
            const T* b, T* c) {
  // A is [m x n], B is [kk x n], C = A B^T is [m x kk].
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < kk; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < n; ++p)
        acc += double(a[i * n + p]) * double(b[j * n + p]);
      c[i * kk + j] = static_cast<T>(acc);
    }
}

template <typename T>
T max_rel_err(const std::vector<T>& got, const std::vector<T>& want) {
  REQUIRE(got.size() == want.size());
  T worst = 0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    T denom = std::max(T(1), std::abs(want[i]));
    worst = std::max(worst, std::abs(got[i] - want[i]) / denom);
  }
  return worst;
}

template <typename T>
T tol();
template <>
float tol<float>() {
  return 1e-4f;
}
template <>
double tol<double>() {
  return 1e-12;
}

const std::size_t kSizes[][3] = {
    {1, 1, 1},  {3, 5, 7},   {17, 1, 9},  {1, 31, 4},  {64, 64, 64},
    {13, 29, 37}, {8, 128, 1}, {33, 65, 129}, {100, 7, 51},
};

template <typename T>
void check_matmuls(const k::Table<T>& tab) {
  Rng rng(2024);
  for (const auto& s : kSizes) {
    std::size_t m = s[0], n = s[1], kk = s[2];
    auto a = random_vec<T>(rng, m * kk);
    auto b = random_vec<T>(rng, kk * n);

    std::vector<T> got(m * n), want(m * n);
    tab.matmul_nn(m, n, kk, a.data(), b.data(), got.data(), false);
    ref_nn(m, n, kk, a.data(), b.data(), want.data());
    CHECK(max_rel_err(got, want) < tol<T>());

    // accumulate adds on top of existing contents
    std::vector<T> acc_got = want, acc_want(m * n);
    tab.matmul_nn(m, n, kk, a.data(), b.data(), acc_got.data(), true);
    for (std::size_t i = 0; i < m * n; ++i) acc_want[i] = want[i] * T(2);
    CHECK(max_rel_err(acc_got, acc_want) < tol<T>());

    auto bt = random_vec<T>(rng, m * n);
    std::vector<T> got_tn(kk * n), want_tn(kk * n);
    tab.matmul_tn(m, n, kk, a.data(), bt.data(), got_tn.data(), false);
    ref_tn(m, n, kk, a.data(), bt.data(), want_tn.data());
    CHECK(max_rel_err(got_tn, want_tn) < tol<T>());

    auto an = random_vec<T>(rng, m * n);
    auto bn = random_vec<T>(rng, kk * n);
    std::vector<T> got_nt(m * kk), want_nt(m * kk);
    tab.matmul_nt(m, n, kk, an.data(), bn.data(), got_nt.data(), false);
    ref_nt(m, n, kk, an.data(), bn.data(), want_nt.data());
    CHECK(max_rel_err(got_nt, want_nt) < tol<T>());
  }
}

template <typename T>
void check_elementwise(const k::Table<T>& tab) {
  Rng rng(7);
  for (std::size_t n : {std::size_t(1), std::size_t(7), std::size_t(64),
                        std::size_t(103), std::size_t(1024)}) {
    auto x = random_vec<T>(rng, n);
    auto y = random_vec<T>(rng, n);
    std::vector<T> out(n), want(n);

    tab.add(n, x.data(), y.data(), out.data());
    for (std::size_t i = 0; i < n; ++i) want[i] = x[i] + y[i];
    CHECK(max_rel_err(out, want) < tol<T>());

    tab.sub(n, x.data(), y.data(), out.data());
    for (std::size_t i = 0; i < n; ++i) want[i] = x[i] - y[i];
    CHECK(max_rel_err(out, want) < tol<T>());

    tab.mul(n, x.data(), y.data(), out.data());
    for (std::size_t i = 0; i < n; ++i) want[i] = x[i] * y[i];
    CHECK(max_rel_err(out, want) < tol<T>());

    std::vector<T> yy = y;
    tab.axpy(n, T(0.37), x.data(), yy.data());
    for (std::size_t i = 0; i < n; ++i) want[i] = y[i] + T(0.37) * x[i];
    CHECK(max_rel_err(yy, want) < tol<T>());

    std::vector<T> xs(n);
    tab.scale(n, T(-1.25), x.data(), xs.data());
    for (std::size_t i = 0; i < n; ++i) want[i] = x[i] * T(-1.25);
    CHECK(max_rel_err(xs, want) < tol<T>());

    double dot_want = 0.0, sum_want = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      dot_want += double(x[i]) * double(y[i]);
      sum_want += double(x[i]);
    }
    CHECK(std::abs(double(tab.dot(n, x.data(), y.data())) - dot_want) <
          double(tol<T>()) * std::max(1.0, std::abs(dot_want)));
    CHECK(std::abs(double(tab.sum(n, x.data())) - sum_want) <
          double(tol<T>()) * std::max(1.0, std::abs(sum_want)));

    tab.relu(n, x.data(), out.data());
    for (std::size_t i = 0; i < n; ++i) want[i] = x[i] > T(0) ? x[i] : T(0);
    CHECK(max_rel_err(out, want) < tol<T>());

    // relu_bwd: gradient passes where the output was positive
    std::vector<T> relu_y(n), dy = random_vec<T>(rng, n), dx(n, T(0.5));
    tab.relu(n, x.data(), relu_y.data());
    std::vector<T> dx_want = dx;
    tab.relu_bwd(n, relu_y.data(), dy.data(), dx.data());
    for (std::size_t i = 0; i < n; ++i)
      if (relu_y[i] > T(0)) dx_want[i] += dy[i];
    CHECK(max_rel_err(dx, dx_want) < tol<T>());
  }
}

template <typename T>
void check_nesterov(const k::Table<T>& tab) {
  Rng rng(19);
  const std::size_t n = 257;
  auto g = random_vec<T>(rng, n);
  auto v = random_vec<T>(rng, n);
  auto p = random_vec<T>(rng, n);
  std::vector<T> v_want = v, p_want = p;
  const T lr = T(0.01), mu = T(0.9);

  tab.nesterov(n, lr, mu, g.data(), v.data(), p.data());
  for (std::size_t i = 0; i < n; ++i) {
    v_want[i] = mu * v_want[i] - lr * g[i];
    p_want[i] += mu * v_want[i] - lr * g[i];
  }
  CHECK(max_rel_err(v, v_want) < tol<T>());
  CHECK(max_rel_err(p, p_want) < tol<T>());
}

template <typename T>
void check_all_finite(const k::Table<T>& tab) {
  Rng rng(23);
  for (std::size_t n : {std::size_t(1), std::size_t(8), std::size_t(33),
                        std::size_t(1000)}) {
    auto x = random_vec<T>(rng, n);
    CHECK(tab.all_finite(n, x.data()));
    for (T bad : {std::numeric_limits<T>::quiet_NaN(),
                  std::numeric_limits<T>::infinity(),
                  -std::numeric_limits<T>::infinity()}) {
      auto y = x;
      y[n / 2] = bad;
      CHECK_FALSE(tab.all_finite(n, y.data()));
    }
  }
  CHECK(tab.all_finite(0, nullptr));
}

template <typename T>
void run_suite(const k::Table<T>& tab) {
  check_matmuls(tab);
  check_elementwise(tab);
  check_nesterov(tab);
  check_all_finite(tab);
}

}  // namespace

TEST_CASE("scalar f32 kernels match plain references") {
  run_suite(k::table_for<float>(k::Backend::scalar));
}

TEST_CASE("scalar f64 kernels match plain references") {
  run_suite(k::table_for<double>(k::Backend::scalar));
}

TEST_CASE("avx2 f32 kernels match plain references") {
  if (!k::avx2_supported()) {
    MESSAGE("avx2 not available; skipping");
    return;
  }
  run_suite(k::table_for<float>(k::Backend::avx2));
}

TEST_CASE("avx2 f64 kernels match plain references") {
  if (!k::avx2_supported()) {
    MESSAGE("avx2 not available; skipping");
    return;
  }
  run_suite(k::table_for<double>(k::Backend::avx2));
}

TEST_CASE("backend switch changes the active table") {
  k::Backend original = k::active_backend();
  k::set_backend(k::Backend::scalar);
  CHECK(&k::table_f32() == &k::table_for<float>(k::Backend::scalar));
  if (k::avx2_supported()) {
    k::set_backend(k::Backend::avx2);
    CHECK(&k::table_f32() == &k::table_for<float>(k::Backend::avx2));
    CHECK(&k::table_f64() == &k::table_for<double>(k::Backend::avx2));
  }
  k::set_backend(original);
}

TEST_CASE("backend names round-trip") {
  CHECK(k::backend_name(k::Backend::scalar) == "scalar");
  CHECK(k::backend_name(k::Backend::avx2) == "avx2");
}
