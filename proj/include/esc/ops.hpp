#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "esc/errors.hpp"
#include "esc/kernels.hpp"
#include "esc/rng.hpp"
#include "esc/tensor.hpp"

// Differentiable ops over Tensor<T>. Every op validates shapes, checks its
// output for non-finite values, and records a backward closure on the tape
// when gradients are enabled and some input requires them. Ops are defined
// here rather than in a .cpp because GCC cannot explicitly instantiate
// function templates that store local lambdas in std::function.

namespace esc::ad {

namespace detail {

inline std::string shape_str(const std::vector<std::size_t>& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

template <typename T>
void check_finite(Tensor<T> t, const char* op) {
  if (!kernels::table<T>().all_finite(t.size(), t.data())) {
    throw NumericError(std::string(op) + ": non-finite values in output");
  }
}

template <typename T>
bool track(const Tape<T>& tape,
           std::initializer_list<const Tensor<T>*> inputs) {
  if (!tape.grad_enabled()) return false;
  for (const auto* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

template <typename T>
void require_same_shape(Tensor<T> a, Tensor<T> b,
                        const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shapes differ, " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

// im2col for NHWC 'same'-padded convolution; one sample at a time.
template <typename T>
void im2col(const T* x, std::size_t H, std::size_t W, std::size_t C,
            std::size_t kh, std::size_t kw, std::size_t sh, std::size_t sw,
            long pt, long pl, std::size_t OH, std::size_t OW, T* cols) {
  const std::size_t row_len = kh * kw * C;
  for (std::size_t oh = 0; oh < OH; ++oh) {
    for (std::size_t ow = 0; ow < OW; ++ow) {
      T* dst = cols + (oh * OW + ow) * row_len;
      for (std::size_t ki = 0; ki < kh; ++ki) {
        const long ih = long(oh * sh) - pt + long(ki);
        for (std::size_t kj = 0; kj < kw; ++kj) {
          const long iw = long(ow * sw) - pl + long(kj);
          T* d = dst + (ki * kw + kj) * C;
          if (ih < 0 || ih >= long(H) || iw < 0 || iw >= long(W)) {
            std::fill(d, d + C, T(0));
          } else {
            const T* s = x + (std::size_t(ih) * W + std::size_t(iw)) * C;
            std::copy(s, s + C, d);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, std::size_t H, std::size_t W, std::size_t C,
                std::size_t kh, std::size_t kw, std::size_t sh, std::size_t sw,
                long pt, long pl, std::size_t OH, std::size_t OW, T* dx) {
  const std::size_t row_len = kh * kw * C;
  for (std::size_t oh = 0; oh < OH; ++oh) {
    for (std::size_t ow = 0; ow < OW; ++ow) {
      const T* src = cols + (oh * OW + ow) * row_len;
      for (std::size_t ki = 0; ki < kh; ++ki) {
        const long ih = long(oh * sh) - pt + long(ki);
        if (ih < 0 || ih >= long(H)) continue;
        for (std::size_t kj = 0; kj < kw; ++kj) {
          const long iw = long(ow * sw) - pl + long(kj);
          if (iw < 0 || iw >= long(W)) continue;
          const T* s = src + (ki * kw + kj) * C;
          T* d = dx + (std::size_t(ih) * W + std::size_t(iw)) * C;
          for (std::size_t c = 0; c < C; ++c) d[c] += s[c];
        }
      }
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------- Elementwise

template <typename T>
Tensor<T> add(Tape<T>& tape, Tensor<T> a, Tensor<T> b) {
  detail::require_same_shape(a, b, "add");
  const std::size_t n = a.size();
  Tensor<T> out(a.shape());
  kernels::table<T>().add(n, a.data(), b.data(), out.data());
  detail::check_finite(out, "add");
  if (detail::track(tape, {&a, &b})) {
    out.set_requires_grad(true);
    tape.record([a, b, out, n]() mutable {
      if (!out.has_grad()) return;
      const auto& k = kernels::table<T>();
      if (a.requires_grad()) k.axpy(n, T(1), out.grad(), a.grad());
      if (b.requires_grad()) k.axpy(n, T(1), out.grad(), b.grad());
    });
  }
  return out;
}

template <typename T>
Tensor<T> sub(Tape<T>& tape, Tensor<T> a, Tensor<T> b) {
  detail::require_same_shape(a, b, "sub");
  const std::size_t n = a.size();
  Tensor<T> out(a.shape());
  kernels::table<T>().sub(n, a.data(), b.data(), out.data());
  detail::check_finite(out, "sub");
  if (detail::track(tape, {&a, &b})) {
    out.set_requires_grad(true);
    tape.record([a, b, out, n]() mutable {
      if (!out.has_grad()) return;
      const auto& k = kernels::table<T>();
      if (a.requires_grad()) k.axpy(n, T(1), out.grad(), a.grad());
      if (b.requires_grad()) k.axpy(n, T(-1), out.grad(), b.grad());
    });
  }
  return out;
}

template <typename T>
Tensor<T> mul(Tape<T>& tape, Tensor<T> a, Tensor<T> b) {
  detail::require_same_shape(a, b, "mul");
  const std::size_t n = a.size();
  Tensor<T> out(a.shape());
  kernels::table<T>().mul(n, a.data(), b.data(), out.data());
  detail::check_finite(out, "mul");
  if (detail::track(tape, {&a, &b})) {
    out.set_requires_grad(true);
    tape.record([a, b, out, n]() mutable {
      if (!out.has_grad()) return;
      const T* g = out.grad();
      if (a.requires_grad()) {
        T* da = a.grad();
        const T* bv = b.data();
        for (std::size_t i = 0; i < n; ++i) da[i] += g[i] * bv[i];
      }
      if (b.requires_grad()) {
        T* db = b.grad();
        const T* av = a.data();
        for (std::size_t i = 0; i < n; ++i) db[i] += g[i] * av[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> scale_const(Tape<T>& tape, Tensor<T> a, T c) {
  const std::size_t n = a.size();
  Tensor<T> out(a.shape());
  kernels::table<T>().scale(n, c, a.data(), out.data());
  detail::check_finite(out, "scale_const");
  if (detail::track(tape, {&a})) {
    out.set_requires_grad(true);
    tape.record([a, out, c, n]() mutable {
      if (!out.has_grad()) return;
      kernels::table<T>().axpy(n, c, out.grad(), a.grad());
    });
  }
  return out;
}

template <typename T>
Tensor<T> relu(Tape<T>& tape, Tensor<T> x) {
  const std::size_t n = x.size();
  Tensor<T> out(x.shape());
  kernels::table<T>().relu(n, x.data(), out.data());
  detail::check_finite(out, "relu");
  if (detail::track(tape, {&x})) {
    out.set_requires_grad(true);
    tape.record([x, out, n]() mutable {
      if (!out.has_grad()) return;
      kernels::table<T>().relu_bwd(n, out.data(), out.grad(), x.grad());
    });
  }
  return out;
}

template <typename T>
Tensor<T> sigmoid(Tape<T>& tape, Tensor<T> x) {
  const std::size_t n = x.size();
  Tensor<T> out(x.shape());
  const T* xv = x.data();
  T* ov = out.data();
  for (std::size_t i = 0; i < n; ++i) {
    ov[i] = T(1) / (T(1) + std::exp(-xv[i]));
  }
  detail::check_finite(out, "sigmoid");
  if (detail::track(tape, {&x})) {
    out.set_requires_grad(true);
    tape.record([x, out, n]() mutable {
      if (!out.has_grad()) return;
      const T* y = out.data();
      const T* g = out.grad();
      T* dx = x.grad();
      for (std::size_t i = 0; i < n; ++i) {
        dx[i] += g[i] * y[i] * (T(1) - y[i]);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> tanh_(Tape<T>& tape, Tensor<T> x) {
  const std::size_t n = x.size();
  Tensor<T> out(x.shape());
  const T* xv = x.data();
  T* ov = out.data();
  for (std::size_t i = 0; i < n; ++i) ov[i] = std::tanh(xv[i]);
  detail::check_finite(out, "tanh");
  if (detail::track(tape, {&x})) {
    out.set_requires_grad(true);
    tape.record([x, out, n]() mutable {
      if (!out.has_grad()) return;
      const T* y = out.data();
      const T* g = out.grad();
      T* dx = x.grad();
      for (std::size_t i = 0; i < n; ++i) {
        dx[i] += g[i] * (T(1) - y[i] * y[i]);
      }
    });
  }
  return out;
}

// Softmax along the innermost axis.
template <typename T>
Tensor<T> softmax_lastdim(Tape<T>& tape, Tensor<T> x) {
  if (x.rank() < 1) throw ShapeError("softmax: rank-0 input");
  const std::size_t n = x.dim(x.rank() - 1);
  const std::size_t rows = x.size() / n;
  Tensor<T> out(x.shape());
  const T* xv = x.data();
  T* ov = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = xv + r * n;
    T* orow = ov + r * n;
    T mx = xr[0];
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, xr[i]);
    T sum = T(0);
    for (std::size_t i = 0; i < n; ++i) {
      orow[i] = std::exp(xr[i] - mx);
      sum += orow[i];
    }
    for (std::size_t i = 0; i < n; ++i) orow[i] /= sum;
  }
  detail::check_finite(out, "softmax");
  if (detail::track(tape, {&x})) {
    out.set_requires_grad(true);
    tape.record([x, out, rows, n]() mutable {
      if (!out.has_grad()) return;
      const T* y = out.data();
      const T* g = out.grad();
      T* dx = x.grad();
      for (std::size_t r = 0; r < rows; ++r) {
        const T* yr = y + r * n;
        const T* gr = g + r * n;
        T* dr = dx + r * n;
        T dot = T(0);
        for (std::size_t i = 0; i < n; ++i) dot += gr[i] * yr[i];
        for (std::size_t i = 0; i < n; ++i) dr[i] += yr[i] * (gr[i] - dot);
      }
    });
  }
  return out;
}

// Inverted dropout; identity when train is false or p == 0.
template <typename T>
Tensor<T> dropout(Tape<T>& tape, Tensor<T> x, double p, bool train,
                  Rng& rng) {
  if (p < 0.0 || p >= 1.0) {
    throw ArgumentError("dropout: p must lie in [0, 1)");
  }
  if (!train || p == 0.0) return x;

  const std::size_t n = x.size();
  auto mask = std::make_shared<std::vector<T>>(n);
  const T keep_scale = T(1.0 / (1.0 - p));
  for (std::size_t i = 0; i < n; ++i) {
    (*mask)[i] = rng.uniform() < p ? T(0) : keep_scale;
  }

  Tensor<T> out(x.shape());
  kernels::table<T>().mul(n, x.data(), mask->data(), out.data());
  detail::check_finite(out, "dropout");
  if (detail::track(tape, {&x})) {
    out.set_requires_grad(true);
    tape.record([x, out, mask, n]() mutable {
      if (!out.has_grad()) return;
      const T* g = out.grad();
      T* dx = x.grad();
      for (std::size_t i = 0; i < n; ++i) dx[i] += g[i] * (*mask)[i];
    });
  }
  return out;
}

// ------------------------------------------------------ Dense building blocks

template <typename T>
Tensor<T> matmul(Tape<T>& tape, Tensor<T> a, Tensor<T> b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: incompatible " + detail::shape_str(a.shape()) +
                     " x " + detail::shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), kk = a.dim(1), n = b.dim(1);
  Tensor<T> out({m, n});
  kernels::table<T>().matmul_nn(m, n, kk, a.data(), b.data(), out.data(),
                                false);
  detail::check_finite(out, "matmul");
  if (detail::track(tape, {&a, &b})) {
    out.set_requires_grad(true);
    tape.record([a, b, out, m, n, kk]() mutable {
      if (!out.has_grad()) return;
      const auto& k = kernels::table<T>();
      if (a.requires_grad()) {
        // dA = dC * B^T
        k.matmul_nt(m, n, kk, out.grad(), b.data(), a.grad(), true);
      }
      if (b.requires_grad()) {
        // dB = A^T * dC
        k.matmul_tn(m, n, kk, a.data(), out.grad(), b.grad(), true);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> add_rowwise(Tape<T>& tape, Tensor<T> x, Tensor<T> b) {
  if (x.rank() != 2 || b.rank() != 1 || b.dim(0) != x.dim(1)) {
    throw ShapeError("add_rowwise: " + detail::shape_str(x.shape()) + " + " +
                     detail::shape_str(b.shape()));
  }
  const std::size_t m = x.dim(0), n = x.dim(1);
  Tensor<T> out(x.shape());
  const T* xv = x.data();
  const T* bv = b.data();
  T* ov = out.data();
  for (std::size_t r = 0; r < m; ++r) {
    kernels::table<T>().add(n, xv + r * n, bv, ov + r * n);
  }
  detail::check_finite(out, "add_rowwise");
  if (detail::track(tape, {&x, &b})) {
    out.set_requires_grad(true);
    tape.record([x, b, out, m, n]() mutable {
      if (!out.has_grad()) return;
      const T* g = out.grad();
      const auto& k = kernels::table<T>();
      if (x.requires_grad()) k.axpy(m * n, T(1), g, x.grad());
      if (b.requires_grad()) {
        T* db = b.grad();
        for (std::size_t r = 0; r < m; ++r) {
          k.axpy(n, T(1), g + r * n, db);
        }
      }
    });
  }
  return out;
}

// --------------------------------------------------------------------- Layout

template <typename T>
Tensor<T> reshape(Tape<T>& tape, Tensor<T> x,
                  std::vector<std::size_t> shape) {
  if (Tensor<T>::count(shape) != x.size()) {
    throw ShapeError("reshape: " + detail::shape_str(x.shape()) + " to " +
                     detail::shape_str(shape) + " changes element count");
  }
  Tensor<T> out = Tensor<T>::from(std::move(shape), x.values());
  if (detail::track(tape, {&x})) {
    out.set_requires_grad(true);
    const std::size_t n = x.size();
    tape.record([x, out, n]() mutable {
      if (!out.has_grad()) return;
      kernels::table<T>().axpy(n, T(1), out.grad(), x.grad());
    });
  }
  return out;
}

template <typename T>
Tensor<T> concat_cols(Tape<T>& tape, Tensor<T> a, Tensor<T> b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0)) {
    throw ShapeError("concat_cols: " + detail::shape_str(a.shape()) + " | " +
                     detail::shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), p = a.dim(1), q = b.dim(1);
  Tensor<T> out({m, p + q});
  for (std::size_t r = 0; r < m; ++r) {
    std::copy(a.data() + r * p, a.data() + (r + 1) * p,
              out.data() + r * (p + q));
    std::copy(b.data() + r * q, b.data() + (r + 1) * q,
              out.data() + r * (p + q) + p);
  }
  if (detail::track(tape, {&a, &b})) {
    out.set_requires_grad(true);
    tape.record([a, b, out, m, p, q]() mutable {
      if (!out.has_grad()) return;
      const T* g = out.grad();
      if (a.requires_grad()) {
        T* da = a.grad();
        for (std::size_t r = 0; r < m; ++r) {
          kernels::table<T>().axpy(p, T(1), g + r * (p + q), da + r * p);
        }
      }
      if (b.requires_grad()) {
        T* db = b.grad();
        for (std::size_t r = 0; r < m; ++r) {
          kernels::table<T>().axpy(q, T(1), g + r * (p + q) + p, db + r * q);
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> slice_cols(Tape<T>& tape, Tensor<T> x, std::size_t c0,
                     std::size_t len) {
  if (x.rank() != 2 || c0 + len > x.dim(1) || len == 0) {
    throw ShapeError("slice_cols: [" + std::to_string(c0) + ", " +
                     std::to_string(c0 + len) + ") out of " +
                     detail::shape_str(x.shape()));
  }
  const std::size_t m = x.dim(0), n = x.dim(1);
  Tensor<T> out({m, len});
  for (std::size_t r = 0; r < m; ++r) {
    std::copy(x.data() + r * n + c0, x.data() + r * n + c0 + len,
              out.data() + r * len);
  }
  if (detail::track(tape, {&x})) {
    out.set_requires_grad(true);
    tape.record([x, out, m, n, c0, len]() mutable {
      if (!out.has_grad()) return;
      const T* g = out.grad();
      T* dx = x.grad();
      for (std::size_t r = 0; r < m; ++r) {
        kernels::table<T>().axpy(len, T(1), g + r * len, dx + r * n + c0);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> slice_time(Tape<T>& tape, Tensor<T> x, std::size_t t) {
  if (x.rank() != 3 || t >= x.dim(1)) {
    throw ShapeError("slice_time: step " + std::to_string(t) + " of " +
                     detail::shape_str(x.shape()));
  }
  const std::size_t B = x.dim(0), Tn = x.dim(1), D = x.dim(2);
  Tensor<T> out({B, D});
  for (std::size_t b = 0; b < B; ++b) {
    std::copy(x.data() + (b * Tn + t) * D, x.data() + (b * Tn + t + 1) * D,
              out.data() + b * D);
  }
  if (detail::track(tape, {&x})) {
    out.set_requires_grad(true);
    tape.record([x, out, B, Tn, D, t]() mutable {
      if (!out.has_grad()) return;
      const T* g = out.grad();
      T* dx = x.grad();
      for (std::size_t b = 0; b < B; ++b) {
        kernels::table<T>().axpy(D, T(1), g + b * D, dx + (b * Tn + t) * D);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> stack_time(Tape<T>& tape, const std::vector<Tensor<T>>& steps) {
  if (steps.empty()) throw ArgumentError("stack_time: no steps");
  const std::size_t B = steps[0].dim(0), H = steps[0].dim(1);
  for (const auto& s : steps) {
    detail::require_same_shape(s, steps[0], "stack_time");
  }
  const std::size_t Tn = steps.size();

  Tensor<T> out({B, Tn, H});
  for (std::size_t t = 0; t < Tn; ++t) {
    for (std::size_t b = 0; b < B; ++b) {
      std::copy(steps[t].data() + b * H, steps[t].data() + (b + 1) * H,
                out.data() + (b * Tn + t) * H);
    }
  }
  bool any = false;
  for (const auto& s : steps) any = any || s.requires_grad();
  if (tape.grad_enabled() && any) {
    out.set_requires_grad(true);
    std::vector<Tensor<T>> caps = steps;
    tape.record([caps, out, B, Tn, H]() mutable {
      if (!out.has_grad()) return;
      const T* g = out.grad();
      for (std::size_t t = 0; t < Tn; ++t) {
        if (!caps[t].requires_grad()) continue;
        T* ds = caps[t].grad();
        for (std::size_t b = 0; b < B; ++b) {
          kernels::table<T>().axpy(H, T(1), g + (b * Tn + t) * H, ds + b * H);
        }
      }
    });
  }
  return out;
}

// x [B,F,T,C] -> [B,T,F*C]; time becomes the sequence axis.
template <typename T>
Tensor<T> cnn_to_seq(Tape<T>& tape, Tensor<T> x) {
  if (x.rank() != 4) {
    throw ShapeError("cnn_to_seq: need [B,F,T,C], got " +
                     detail::shape_str(x.shape()));
  }
  const std::size_t B = x.dim(0), F = x.dim(1), Tn = x.dim(2), C = x.dim(3);
  Tensor<T> out({B, Tn, F * C});
  const T* xv = x.data();
  T* ov = out.data();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t f = 0; f < F; ++f) {
      for (std::size_t t = 0; t < Tn; ++t) {
        const T* src = xv + ((b * F + f) * Tn + t) * C;
        T* dst = ov + (b * Tn + t) * (F * C) + f * C;
        std::copy(src, src + C, dst);
      }
    }
  }
  if (detail::track(tape, {&x})) {
    out.set_requires_grad(true);
    tape.record([x, out, B, F, Tn, C]() mutable {
      if (!out.has_grad()) return;
      const T* g = out.grad();
      T* dx = x.grad();
      for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t f = 0; f < F; ++f) {
          for (std::size_t t = 0; t < Tn; ++t) {
            const T* src = g + (b * Tn + t) * (F * C) + f * C;
            T* dst = dx + ((b * F + f) * Tn + t) * C;
            for (std::size_t c = 0; c < C; ++c) dst[c] += src[c];
          }
        }
      }
    });
  }
  return out;
}

// ------------------------------------------------------------- Structured ops

// 'same'-padded NHWC convolution, w [kh,kw,Cin,Cout], b [Cout].
template <typename T>
Tensor<T> conv2d(Tape<T>& tape, Tensor<T> x, Tensor<T> w,
                 Tensor<T> b, std::size_t sh, std::size_t sw) {
  if (x.rank() != 4 || w.rank() != 4 || b.rank() != 1) {
    throw ShapeError("conv2d: need x[B,H,W,C], w[kh,kw,Cin,Cout], b[Cout]");
  }
  if (x.dim(3) != w.dim(2) || b.dim(0) != w.dim(3)) {
    throw ShapeError("conv2d: channel mismatch, x " +
                     detail::shape_str(x.shape()) + ", w " +
                     detail::shape_str(w.shape()));
  }
  if (sh == 0 || sw == 0) throw ArgumentError("conv2d: zero stride");

  const std::size_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  const std::size_t kh = w.dim(0), kw = w.dim(1), Cout = w.dim(3);
  const std::size_t OH = (H + sh - 1) / sh, OW = (W + sw - 1) / sw;
  const long pad_h = std::max(0L, long((OH - 1) * sh + kh) - long(H));
  const long pad_w = std::max(0L, long((OW - 1) * sw + kw) - long(W));
  const long pt = pad_h / 2, pl = pad_w / 2;
  const std::size_t cols = kh * kw * C;
  const std::size_t opix = OH * OW;

  Tensor<T> out({B, OH, OW, Cout});
  {
    std::vector<T> colbuf(opix * cols);
    for (std::size_t s = 0; s < B; ++s) {
      detail::im2col(x.data() + s * H * W * C, H, W, C, kh, kw, sh, sw, pt, pl,
                     OH, OW, colbuf.data());
      kernels::table<T>().matmul_nn(opix, Cout, cols, colbuf.data(), w.data(),
                                    out.data() + s * opix * Cout, false);
    }
    const T* bv = b.data();
    T* ov = out.data();
    for (std::size_t r = 0; r < B * opix; ++r) {
      kernels::table<T>().add(Cout, ov + r * Cout, bv, ov + r * Cout);
    }
  }
  detail::check_finite(out, "conv2d");

  if (detail::track(tape, {&x, &w, &b})) {
    out.set_requires_grad(true);
    tape.record([x, w, b, out, B, H, W, C, kh, kw, sh, sw, pt, pl, OH, OW,
                 cols, opix, Cout]() mutable {
      if (!out.has_grad()) return;
      const T* g = out.grad();
      const auto& k = kernels::table<T>();

      // im2col is recomputed here instead of cached from the forward pass;
      // caching it for every conv layer would dominate peak memory.
      std::vector<T> colbuf;
      if (w.requires_grad()) colbuf.resize(opix * cols);
      std::vector<T> dcols;
      if (x.requires_grad()) dcols.resize(opix * cols);

      for (std::size_t s = 0; s < B; ++s) {
        const T* gs = g + s * opix * Cout;
        if (w.requires_grad()) {
          detail::im2col(x.data() + s * H * W * C, H, W, C, kh, kw, sh, sw, pt,
                         pl, OH, OW, colbuf.data());
          k.matmul_tn(opix, Cout, cols, colbuf.data(), gs, w.grad(), true);
        }
        if (x.requires_grad()) {
          k.matmul_nt(opix, Cout, cols, gs, w.data(), dcols.data(), false);
          detail::col2im_add(dcols.data(), H, W, C, kh, kw, sh, sw, pt, pl, OH,
                             OW, x.grad() + s * H * W * C);
        }
      }
      if (b.requires_grad()) {
        T* db = b.grad();
        for (std::size_t r = 0; r < B * opix; ++r) {
          k.axpy(Cout, T(1), g + r * Cout, db);
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> maxpool2d(Tape<T>& tape, Tensor<T> x, std::size_t ph,
                    std::size_t pw, std::size_t sh, std::size_t sw) {
  if (x.rank() != 4) {
    throw ShapeError("maxpool2d: need [B,H,W,C], got " +
                     detail::shape_str(x.shape()));
  }
  if (ph == 0 || pw == 0 || sh == 0 || sw == 0) {
    throw ArgumentError("maxpool2d: zero pool or stride");
  }
  const std::size_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  if (H < ph || W < pw) {
    throw ShapeError("maxpool2d: pool " + std::to_string(ph) + "x" +
                     std::to_string(pw) + " larger than input " +
                     detail::shape_str(x.shape()));
  }
  const std::size_t OH = (H - ph) / sh + 1, OW = (W - pw) / sw + 1;

  Tensor<T> out({B, OH, OW, C});
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  const T* xv = x.data();
  T* ov = out.data();
  std::size_t oi = 0;
  for (std::size_t s = 0; s < B; ++s) {
    for (std::size_t oh = 0; oh < OH; ++oh) {
      for (std::size_t ow = 0; ow < OW; ++ow) {
        for (std::size_t c = 0; c < C; ++c, ++oi) {
          // first occurrence in row-major window order wins ties
          std::size_t best_idx = 0;
          T best = T(0);
          bool first = true;
          for (std::size_t ki = 0; ki < ph; ++ki) {
            for (std::size_t kj = 0; kj < pw; ++kj) {
              const std::size_t idx =
                  ((s * H + oh * sh + ki) * W + ow * sw + kj) * C + c;
              if (first || xv[idx] > best) {
                best = xv[idx];
                best_idx = idx;
                first = false;
              }
            }
          }
          ov[oi] = best;
          (*argmax)[oi] = best_idx;
        }
      }
    }
  }
  detail::check_finite(out, "maxpool2d");

  if (detail::track(tape, {&x})) {
    out.set_requires_grad(true);
    tape.record([x, out, argmax]() mutable {
      if (!out.has_grad()) return;
      const T* g = out.grad();
      T* dx = x.grad();
      for (std::size_t i = 0; i < out.size(); ++i) {
        dx[(*argmax)[i]] += g[i];
      }
    });
  }
  return out;
}

template <typename T>
struct BnState {
  std::vector<T> running_mean;
  std::vector<T> running_var;

  explicit BnState(std::size_t channels = 0)
      : running_mean(channels, T(0)), running_var(channels, T(1)) {}
};

// Normalizes over every axis but the last, with population variance.
template <typename T>
Tensor<T> batchnorm(Tape<T>& tape, Tensor<T> x, Tensor<T> gamma,
                    Tensor<T> beta, BnState<T>& state, bool train,
                    T momentum = T(0.99), T eps = T(1e-5)) {
  if (x.rank() < 2) throw ShapeError("batchnorm: need rank >= 2");
  const std::size_t C = x.dim(x.rank() - 1);
  if (gamma.size() != C || beta.size() != C ||
      state.running_mean.size() != C || state.running_var.size() != C) {
    throw ShapeError("batchnorm: channel count mismatch");
  }
  const std::size_t n = x.size();
  const std::size_t rows = n / C;

  auto mean = std::make_shared<std::vector<T>>(C, T(0));
  auto ivar = std::make_shared<std::vector<T>>(C, T(0));
  if (train) {
    std::vector<T> var(C, T(0));
    const T* xv = x.data();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < C; ++c) (*mean)[c] += xv[r * C + c];
    }
    for (std::size_t c = 0; c < C; ++c) (*mean)[c] /= T(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < C; ++c) {
        const T d = xv[r * C + c] - (*mean)[c];
        var[c] += d * d;
      }
    }
    for (std::size_t c = 0; c < C; ++c) {
      var[c] /= T(rows);
      (*ivar)[c] = T(1) / std::sqrt(var[c] + eps);
      state.running_mean[c] =
          momentum * state.running_mean[c] + (T(1) - momentum) * (*mean)[c];
      state.running_var[c] =
          momentum * state.running_var[c] + (T(1) - momentum) * var[c];
    }
  } else {
    for (std::size_t c = 0; c < C; ++c) {
      (*mean)[c] = state.running_mean[c];
      (*ivar)[c] = T(1) / std::sqrt(state.running_var[c] + eps);
    }
  }

  auto xhat = std::make_shared<std::vector<T>>(n);
  Tensor<T> out(x.shape());
  {
    const T* xv = x.data();
    const T* gv = gamma.data();
    const T* bv = beta.data();
    T* ov = out.data();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < C; ++c) {
        const T xh = (xv[r * C + c] - (*mean)[c]) * (*ivar)[c];
        (*xhat)[r * C + c] = xh;
        ov[r * C + c] = gv[c] * xh + bv[c];
      }
    }
  }
  detail::check_finite(out, "batchnorm");

  if (detail::track(tape, {&x, &gamma, &beta})) {
    out.set_requires_grad(true);
    tape.record([x, gamma, beta, out, xhat, ivar, rows, C, train]() mutable {
      if (!out.has_grad()) return;
      const T* g = out.grad();
      const T* gv = gamma.data();

      if (gamma.requires_grad()) {
        T* dg = gamma.grad();
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < C; ++c) {
            dg[c] += g[r * C + c] * (*xhat)[r * C + c];
          }
        }
      }
      if (beta.requires_grad()) {
        T* db = beta.grad();
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < C; ++c) db[c] += g[r * C + c];
        }
      }
      if (!x.requires_grad()) return;
      T* dx = x.grad();
      if (!train) {
        // running stats are constants here
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < C; ++c) {
            dx[r * C + c] += g[r * C + c] * gv[c] * (*ivar)[c];
          }
        }
        return;
      }
      std::vector<T> sum_g(C, T(0)), sum_gx(C, T(0));
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < C; ++c) {
          const T dxh = g[r * C + c] * gv[c];
          sum_g[c] += dxh;
          sum_gx[c] += dxh * (*xhat)[r * C + c];
        }
      }
      const T N = T(rows);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < C; ++c) {
          const T dxh = g[r * C + c] * gv[c];
          dx[r * C + c] +=
              (*ivar)[c] / N *
              (N * dxh - sum_g[c] - (*xhat)[r * C + c] * sum_gx[c]);
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------- Attention helpers

// x [B,F,T,1] -> [B,T], mean over the frequency axis.
template <typename T>
Tensor<T> avgpool_freq(Tape<T>& tape, Tensor<T> x) {
  if (x.rank() != 4 || x.dim(3) != 1) {
    throw ShapeError("avgpool_freq: need [B,F,T,1], got " +
                     detail::shape_str(x.shape()));
  }
  const std::size_t B = x.dim(0), F = x.dim(1), Tn = x.dim(2);
  Tensor<T> out({B, Tn});
  const T* xv = x.data();
  T* ov = out.data();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t t = 0; t < Tn; ++t) {
      T acc = T(0);
      for (std::size_t f = 0; f < F; ++f) acc += xv[(b * F + f) * Tn + t];
      ov[b * Tn + t] = acc / T(F);
    }
  }
  detail::check_finite(out, "avgpool_freq");
  if (detail::track(tape, {&x})) {
    out.set_requires_grad(true);
    tape.record([x, out, B, F, Tn]() mutable {
      if (!out.has_grad()) return;
      const T* g = out.grad();
      T* dx = x.grad();
      for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t t = 0; t < Tn; ++t) {
          const T gv = g[b * Tn + t] / T(F);
          for (std::size_t f = 0; f < F; ++f) dx[(b * F + f) * Tn + t] += gv;
        }
      }
    });
  }
  return out;
}

// m [B,F,T,C] * a [B,T], broadcast over F and C.
template <typename T>
Tensor<T> scale_time(Tape<T>& tape, Tensor<T> m, Tensor<T> a) {
  if (m.rank() != 4 || a.rank() != 2 || a.dim(0) != m.dim(0) ||
      a.dim(1) != m.dim(2)) {
    throw ShapeError("scale_time: m " + detail::shape_str(m.shape()) + ", a " +
                     detail::shape_str(a.shape()));
  }
  const std::size_t B = m.dim(0), F = m.dim(1), Tn = m.dim(2), C = m.dim(3);
  Tensor<T> out(m.shape());
  const T* mv = m.data();
  const T* av = a.data();
  T* ov = out.data();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t f = 0; f < F; ++f) {
      for (std::size_t t = 0; t < Tn; ++t) {
        const T w = av[b * Tn + t];
        const std::size_t base = ((b * F + f) * Tn + t) * C;
        for (std::size_t c = 0; c < C; ++c) ov[base + c] = mv[base + c] * w;
      }
    }
  }
  detail::check_finite(out, "scale_time");
  if (detail::track(tape, {&m, &a})) {
    out.set_requires_grad(true);
    tape.record([m, a, out, B, F, Tn, C]() mutable {
      if (!out.has_grad()) return;
      const T* g = out.grad();
      const T* mv = m.data();
      const T* av = a.data();
      T* dm = m.requires_grad() ? m.grad() : nullptr;
      T* da = a.requires_grad() ? a.grad() : nullptr;
      for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t f = 0; f < F; ++f) {
          for (std::size_t t = 0; t < Tn; ++t) {
            const std::size_t base = ((b * F + f) * Tn + t) * C;
            const T w = av[b * Tn + t];
            for (std::size_t c = 0; c < C; ++c) {
              if (dm) dm[base + c] += g[base + c] * w;
              if (da) da[b * Tn + t] += g[base + c] * mv[base + c];
            }
          }
        }
      }
    });
  }
  return out;
}

// h [B,T,D], beta [B,T] -> [B,D].
template <typename T>
Tensor<T> weighted_sum_time(Tape<T>& tape, Tensor<T> h,
                            Tensor<T> beta) {
  if (h.rank() != 3 || beta.rank() != 2 || beta.dim(0) != h.dim(0) ||
      beta.dim(1) != h.dim(1)) {
    throw ShapeError("weighted_sum_time: h " + detail::shape_str(h.shape()) +
                     ", beta " + detail::shape_str(beta.shape()));
  }
  const std::size_t B = h.dim(0), Tn = h.dim(1), D = h.dim(2);
  Tensor<T> out({B, D});
  const T* hv = h.data();
  const T* bv = beta.data();
  T* ov = out.data();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t t = 0; t < Tn; ++t) {
      kernels::table<T>().axpy(D, bv[b * Tn + t], hv + (b * Tn + t) * D,
                               ov + b * D);
    }
  }
  detail::check_finite(out, "weighted_sum_time");
  if (detail::track(tape, {&h, &beta})) {
    out.set_requires_grad(true);
    tape.record([h, beta, out, B, Tn, D]() mutable {
      if (!out.has_grad()) return;
      const T* g = out.grad();
      const T* hv = h.data();
      const T* bv = beta.data();
      if (h.requires_grad()) {
        T* dh = h.grad();
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t t = 0; t < Tn; ++t) {
            kernels::table<T>().axpy(D, bv[b * Tn + t], g + b * D,
                                     dh + (b * Tn + t) * D);
          }
        }
      }
      if (beta.requires_grad()) {
        T* db = beta.grad();
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t t = 0; t < Tn; ++t) {
            db[b * Tn + t] +=
                kernels::table<T>().dot(D, g + b * D, hv + (b * Tn + t) * D);
          }
        }
      }
    });
  }
  return out;
}

// ----------------------------------------------------------------- Reductions

template <typename T>
Tensor<T> sum_all(Tape<T>& tape, Tensor<T> x) {
  Tensor<T> out({1});
  out.data()[0] = kernels::table<T>().sum(x.size(), x.data());
  detail::check_finite(out, "sum_all");
  if (detail::track(tape, {&x})) {
    out.set_requires_grad(true);
    const std::size_t n = x.size();
    tape.record([x, out, n]() mutable {
      if (!out.has_grad()) return;
      const T g = out.grad()[0];
      T* dx = x.grad();
      for (std::size_t i = 0; i < n; ++i) dx[i] += g;
    });
  }
  return out;
}

// Mean over the batch of -sum_c target*log_softmax(logits); targets carry
// no gradient and every row must sum to 1 within 1e-4.
template <typename T>
Tensor<T> cross_entropy(Tape<T>& tape, Tensor<T> logits,
                        Tensor<T> targets) {
  if (logits.rank() != 2 || targets.shape() != logits.shape()) {
    throw ShapeError("cross_entropy: logits " +
                     detail::shape_str(logits.shape()) + ", targets " +
                     detail::shape_str(targets.shape()));
  }
  const std::size_t B = logits.dim(0), C = logits.dim(1);
  const T* tv = targets.data();
  for (std::size_t b = 0; b < B; ++b) {
    T s = T(0);
    for (std::size_t c = 0; c < C; ++c) s += tv[b * C + c];
    if (std::abs(double(s) - 1.0) > 1e-4) {
      throw ArgumentError("cross_entropy: target row " + std::to_string(b) +
                          " sums to " + std::to_string(double(s)));
    }
  }

  auto probs = std::make_shared<std::vector<T>>(B * C);
  const T* lv = logits.data();
  T loss = T(0);
  for (std::size_t b = 0; b < B; ++b) {
    const T* lr = lv + b * C;
    T mx = lr[0];
    for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, lr[c]);
    T sum = T(0);
    for (std::size_t c = 0; c < C; ++c) sum += std::exp(lr[c] - mx);
    const T lse = mx + std::log(sum);
    for (std::size_t c = 0; c < C; ++c) {
      (*probs)[b * C + c] = std::exp(lr[c] - lse);
      loss += tv[b * C + c] * (lse - lr[c]);
    }
  }
  Tensor<T> out({1});
  out.data()[0] = loss / T(B);
  detail::check_finite(out, "cross_entropy");

  if (detail::track(tape, {&logits})) {
    out.set_requires_grad(true);
    Tensor<T> tcap = targets;
    tape.record([logits, tcap, out, probs, B, C]() mutable {
      if (!out.has_grad()) return;
      const T g = out.grad()[0];
      T* dl = logits.grad();
      const T* tv = tcap.data();
      for (std::size_t i = 0; i < B * C; ++i) {
        dl[i] += g * ((*probs)[i] - tv[i]) / T(B);
      }
    });
  }
  return out;
}

// ------------------------------------------------------------------ Recurrent

template <typename T>
struct GruParams {
  Tensor<T> wz, wr, wh;  // (D+H) x H
  Tensor<T> bz, br, bh;  // H
};

// z = sig([x,h]Wz+bz); r = sig([x,h]Wr+br); c = tanh([x, r*h]Wh+bh);
// h = (1-z)*h_prev + z*c
template <typename T>
Tensor<T> gru_cell(Tape<T>& tape, Tensor<T> x, Tensor<T> h_prev,
                   const GruParams<T>& p) {
  auto xh = concat_cols(tape, x, h_prev);
  auto z = sigmoid(tape, add_rowwise(tape, matmul(tape, xh, p.wz), p.bz));
  auto r = sigmoid(tape, add_rowwise(tape, matmul(tape, xh, p.wr), p.br));
  auto xrh = concat_cols(tape, x, mul(tape, r, h_prev));
  auto cand = tanh_(tape, add_rowwise(tape, matmul(tape, xrh, p.wh), p.bh));
  // (1-z)*h_prev + z*cand, written as h_prev + z*(cand - h_prev)
  return add(tape, h_prev, mul(tape, z, sub(tape, cand, h_prev)));
}

// x [B,T,D] -> [B,T,2H]; zero initial states both directions. Forward states
// fill columns [0,H), backward states columns [H,2H).
template <typename T>
Tensor<T> bidirectional(Tape<T>& tape, Tensor<T> x,
                        const GruParams<T>& fwd, const GruParams<T>& bwd) {
  if (x.rank() != 3) {
    throw ShapeError("bidirectional: need [B,T,D], got " +
                     detail::shape_str(x.shape()));
  }
  const std::size_t B = x.dim(0), Tn = x.dim(1);
  const std::size_t H = fwd.bz.size();

  std::vector<Tensor<T>> f(Tn), bk(Tn);
  Tensor<T> h0({B, H});
  Tensor<T> h = h0;
  for (std::size_t t = 0; t < Tn; ++t) {
    h = gru_cell(tape, slice_time(tape, x, t), h, fwd);
    f[t] = h;
  }
  h = h0;
  for (std::size_t t = Tn; t-- > 0;) {
    h = gru_cell(tape, slice_time(tape, x, t), h, bwd);
    bk[t] = h;
  }
  std::vector<Tensor<T>> steps(Tn);
  for (std::size_t t = 0; t < Tn; ++t) {
    steps[t] = concat_cols(tape, f[t], bk[t]);
  }
  return stack_time(tape, steps);
}

}  // namespace esc::ad
