#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace esc::fft {

// In-place radix-2 complex FFT. n must be a power of two.
// inverse=true applies conjugate twiddles and a 1/n scale.
void transform(std::complex<double>* a, std::size_t n, bool inverse);

inline void transform(std::vector<std::complex<double>>& a, bool inverse) {
  transform(a.data(), a.size(), inverse);
}

constexpr bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

}  // namespace esc::fft
