#include <atomic>
#include <cstdlib>
#include <string>

#include "esc/errors.hpp"
#include "esc/kernels.hpp"

namespace esc::kernels {

namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(_M_X64) || defined(__i386__)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend default_backend() {
  if (const char* env = std::getenv("ESC_KERNELS")) {
    const std::string s(env);
    if (s == "scalar") return Backend::scalar;
    if (s == "avx2" && detail::avx2_compiled && cpu_has_avx2()) return Backend::avx2;
    if (s == "avx2") return Backend::scalar;  // requested but unavailable
  }
  return (detail::avx2_compiled && cpu_has_avx2()) ? Backend::avx2 : Backend::scalar;
}

std::atomic<Backend> g_backend{default_backend()};

}  // namespace

bool avx2_supported() { return detail::avx2_compiled && cpu_has_avx2(); }

Backend active_backend() { return g_backend.load(std::memory_order_relaxed); }

void set_backend(Backend b) {
  if (b == Backend::avx2 && !avx2_supported())
    throw ArgumentError("kernels: AVX2 backend not available on this host");
  g_backend.store(b, std::memory_order_relaxed);
}

std::string backend_name(Backend b) { return b == Backend::avx2 ? "avx2" : "scalar"; }

const Table<float>& table_f32() {
  return active_backend() == Backend::avx2 ? detail::avx2_f32 : detail::scalar_f32;
}

const Table<double>& table_f64() {
  return active_backend() == Backend::avx2 ? detail::avx2_f64 : detail::scalar_f64;
}

template <>
const Table<float>& table_for<float>(Backend b) {
  return b == Backend::avx2 ? detail::avx2_f32 : detail::scalar_f32;
}

template <>
const Table<double>& table_for<double>(Backend b) {
  return b == Backend::avx2 ? detail::avx2_f64 : detail::scalar_f64;
}

}  // namespace esc::kernels
