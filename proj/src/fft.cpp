#include "esc/fft.hpp"

#include <cmath>

#include "esc/errors.hpp"

namespace esc::fft {

void transform(std::complex<double>* a, std::size_t n, bool inverse) {
  if (!is_pow2(n)) {
    throw ArgumentError("fft: length must be a power of two, got " +
                        std::to_string(n));
  }
  if (n == 1) return;

  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }

  const double sign = inverse ? 1.0 : -1.0;
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = sign * 2.0 * M_PI / double(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t j = 0; j < len / 2; ++j) {
        std::complex<double> u = a[i + j];
        std::complex<double> v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wl;
      }
    }
  }

  if (inverse) {
    const double inv = 1.0 / double(n);
    for (std::size_t i = 0; i < n; ++i) a[i] *= inv;
  }
}

}  // namespace esc::fft
