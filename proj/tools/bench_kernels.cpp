// Micro benchmark for the kernel layer: prints GFLOP/s per backend.
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "esc/kernels.hpp"
#include "esc/rng.hpp"

namespace k = esc::kernels;

namespace {

double bench_nn(const k::Table<float>& tab, std::size_t m, std::size_t n,
                std::size_t kk, int reps) {
  esc::Rng rng(1);
  std::vector<float> a(m * kk), b(kk * n), c(m * n);
  for (auto& x : a) x = float(rng.uniform(-1, 1));
  for (auto& x : b) x = float(rng.uniform(-1, 1));

  tab.matmul_nn(m, n, kk, a.data(), b.data(), c.data(), false);  // warm
  auto t0 = std::chrono::steady_clock::now();
  for (int r = 0; r < reps; ++r)
    tab.matmul_nn(m, n, kk, a.data(), b.data(), c.data(), false);
  auto t1 = std::chrono::steady_clock::now();
  double sec = std::chrono::duration<double>(t1 - t0).count();
  double flops = 2.0 * double(m) * double(n) * double(kk) * reps;
  return flops / sec / 1e9;
}

}  // namespace

int main(int argc, char** argv) {
  int reps = argc > 1 ? std::atoi(argv[1]) : 20;
  const std::size_t shapes[][3] = {
      {128, 128, 128},   // generic
      {5376, 32, 18},    // early conv im2col
      {98, 256, 1152},   // late conv im2col
      {64, 768, 1280},   // gru gates, batch 64
      {256, 256, 256},
  };
  for (k::Backend be : {k::Backend::scalar, k::Backend::avx2}) {
    if (be == k::Backend::avx2 && !k::avx2_supported()) continue;
    const auto& tab = k::table_for<float>(be);
    for (const auto& s : shapes) {
      double g = bench_nn(tab, s[0], s[1], s[2], reps);
      std::printf("%-6s nn %5zu x %4zu x %4zu  %7.2f GFLOP/s\n",
                  k::backend_name(be).c_str(), s[0], s[1], s[2], g);
    }
  }
  return 0;
}
