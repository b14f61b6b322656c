#include "esc/dsp.hpp"

#include <cmath>
#include <complex>

#include "esc/errors.hpp"
#include "esc/fft.hpp"
#include "esc/kernels.hpp"

namespace esc::dsp {
namespace {

// ERB bandwidth and the matching rate scale (Glasberg & Moore).
double erb_bandwidth(double f_hz) {
  return 24.7 * (4.37 * f_hz / 1000.0 + 1.0);
}
double erb_rate(double f_hz) { return 21.4 * std::log10(1.0 + 0.00437 * f_hz); }
double erb_rate_inv(double e) {
  return (std::pow(10.0, e / 21.4) - 1.0) / 0.00437;
}

}  // namespace

Mat stft_power(const audio::AudioClip& clip, const StftConfig& cfg) {
  const int w = cfg.window_len;
  if (w <= 0 || !fft::is_pow2(size_t(w))) {
    throw ArgumentError("stft: window_len must be a positive power of two");
  }
  if (cfg.hop <= 0 || cfg.hop > w) {
    throw ArgumentError("stft: need 0 < hop <= window_len");
  }
  const size_t len = clip.samples.size();
  if (len < size_t(w)) {
    throw EmptyInputError("stft: clip has " + std::to_string(len) +
                          " samples, needs at least " + std::to_string(w));
  }

  const size_t frames = (len - size_t(w)) / size_t(cfg.hop) + 1;
  const size_t bins = size_t(w) / 2 + 1;

  std::vector<double> window(static_cast<size_t>(w));
  for (int n = 0; n < w; ++n) {
    window[size_t(n)] = 0.54 - 0.46 * std::cos(2.0 * M_PI * n / w);
  }

  Mat out(frames, bins);
  std::vector<std::complex<double>> buf(static_cast<size_t>(w));
  for (size_t t = 0; t < frames; ++t) {
    const float* src = clip.samples.data() + t * size_t(cfg.hop);
    for (int n = 0; n < w; ++n) {
      buf[size_t(n)] = {double(src[n]) * window[size_t(n)], 0.0};
    }
    fft::transform(buf.data(), size_t(w), false);
    for (size_t k = 0; k < bins; ++k) {
      out.at(t, k) = std::norm(buf[k]);
    }
  }
  return out;
}

GammatoneBank make_gammatone_bank(int num_bands, int num_bins,
                                  int sample_rate_hz, double f_min_hz) {
  if (num_bands < 2) throw ArgumentError("gammatone: need at least 2 bands");
  if (num_bins < 2) throw ArgumentError("gammatone: need at least 2 bins");
  if (sample_rate_hz <= 0) throw ArgumentError("gammatone: bad sample rate");
  const double nyquist = sample_rate_hz / 2.0;
  if (!(f_min_hz > 0.0) || f_min_hz >= nyquist) {
    throw ArgumentError("gammatone: f_min must lie in (0, sample_rate/2)");
  }

  GammatoneBank bank;
  bank.num_bands = num_bands;
  bank.num_bins = num_bins;
  bank.center_freqs_hz.resize(size_t(num_bands));
  bank.weights.assign(size_t(num_bands) * size_t(num_bins), 0.0);

  // Interior grid on the ERB-rate axis keeps every center strictly inside
  // (f_min, nyquist).
  const double e_lo = erb_rate(f_min_hz);
  const double e_hi = erb_rate(nyquist);
  for (int b = 0; b < num_bands; ++b) {
    const double e = e_lo + (e_hi - e_lo) * double(b + 1) / double(num_bands + 1);
    bank.center_freqs_hz[size_t(b)] = erb_rate_inv(e);
  }

  const double bin_hz = nyquist / double(num_bins - 1);
  for (int b = 0; b < num_bands; ++b) {
    const double fc = bank.center_freqs_hz[size_t(b)];
    const double bw = 1.019 * erb_bandwidth(fc);
    double peak = 0.0;
    for (int k = 0; k < num_bins; ++k) {
      const double d = (double(k) * bin_hz - fc) / bw;
      const double w = std::pow(1.0 + d * d, -4.0);
      bank.weights[size_t(b) * size_t(num_bins) + size_t(k)] = w;
      peak = std::max(peak, w);
    }
    for (int k = 0; k < num_bins; ++k) {
      bank.weights[size_t(b) * size_t(num_bins) + size_t(k)] /= peak;
    }
  }
  return bank;
}

Spectrogram apply_bank(const Mat& power, const GammatoneBank& bank,
                       double frame_rate_hz) {
  if (power.cols != size_t(bank.num_bins)) {
    throw ShapeError("apply_bank: power has " + std::to_string(power.cols) +
                     " bins, bank expects " + std::to_string(bank.num_bins));
  }
  Spectrogram out;
  out.values = Mat(power.rows, size_t(bank.num_bands));
  out.frame_rate_hz = frame_rate_hz;
  out.domain = Domain::energy;
  // out = power * weights^T
  kernels::table<double>().matmul_nt(power.rows, power.cols,
                                     size_t(bank.num_bands), power.v.data(),
                                     bank.weights.data(), out.values.v.data(),
                                     false);
  return out;
}

Spectrogram log_compress(const Spectrogram& spec, double eps) {
  if (spec.domain != Domain::energy) {
    throw ArgumentError("log_compress: input must be in the energy domain");
  }
  Spectrogram out = spec;
  out.domain = Domain::log;
  for (double& x : out.values.v) x = std::log(x + eps);
  return out;
}

Spectrogram compute_delta(const Spectrogram& spec, int half_window) {
  if (half_window < 1) throw ArgumentError("delta: half_window must be >= 1");
  const long F = long(spec.values.rows);
  const long B = long(spec.values.cols);
  if (F < 1) throw EmptyInputError("delta: empty spectrogram");

  double denom = 0.0;
  for (int n = 1; n <= half_window; ++n) denom += double(n) * n;
  denom *= 2.0;

  Spectrogram out = spec;
  out.domain = Domain::delta;
  auto clampf = [&](long t) { return t < 0 ? 0L : (t >= F ? F - 1 : t); };
  for (long t = 0; t < F; ++t) {
    for (long b = 0; b < B; ++b) {
      double acc = 0.0;
      for (int n = 1; n <= half_window; ++n) {
        acc += double(n) * (spec.values.at(size_t(clampf(t + n)), size_t(b)) -
                            spec.values.at(size_t(clampf(t - n)), size_t(b)));
      }
      out.values.at(size_t(t), size_t(b)) = acc / denom;
    }
  }
  return out;
}

std::vector<LogGtSegment> segment(const Spectrogram& spec_static,
                                  const Spectrogram& spec_delta,
                                  int frames_per_segment, double overlap) {
  const size_t F = spec_static.values.rows;
  const size_t B = spec_static.values.cols;
  if (spec_delta.values.rows != F || spec_delta.values.cols != B) {
    throw ShapeError("segment: static and delta shapes differ");
  }
  if (frames_per_segment < 1) {
    throw ArgumentError("segment: frames_per_segment must be >= 1");
  }
  if (!(overlap >= 0.0) || overlap >= 1.0) {
    throw ArgumentError("segment: overlap must lie in [0, 1)");
  }
  const long hop = std::lround(double(frames_per_segment) * (1.0 - overlap));
  if (hop < 1) throw ArgumentError("segment: overlap leaves a zero hop");
  if (F < size_t(frames_per_segment)) {
    throw EmptyInputError("segment: " + std::to_string(F) +
                          " frames < one segment of " +
                          std::to_string(frames_per_segment));
  }

  const size_t count = (F - size_t(frames_per_segment)) / size_t(hop) + 1;
  std::vector<LogGtSegment> out(count);
  for (size_t s = 0; s < count; ++s) {
    LogGtSegment& seg = out[s];
    seg.frames = frames_per_segment;
    seg.bands = int(B);
    seg.segment_index = int(s);
    seg.data.resize(size_t(frames_per_segment) * B * 2);
    const size_t off = s * size_t(hop);
    for (int t = 0; t < frames_per_segment; ++t) {
      for (size_t b = 0; b < B; ++b) {
        seg.at(t, int(b), 0) =
            float(spec_static.values.at(off + size_t(t), b));
        seg.at(t, int(b), 1) =
            float(spec_delta.values.at(off + size_t(t), b));
      }
    }
  }
  return out;
}

NormStats fit_norm(const std::vector<LogGtSegment>& segments) {
  if (segments.empty()) throw ArgumentError("fit_norm: empty segment list");

  double sum[2] = {0, 0}, sum2[2] = {0, 0};
  size_t count = 0;
  for (const auto& seg : segments) {
    for (size_t i = 0; i < seg.data.size(); i += 2) {
      for (int c = 0; c < 2; ++c) {
        const double x = seg.data[i + size_t(c)];
        sum[c] += x;
        sum2[c] += x * x;
      }
    }
    count += seg.data.size() / 2;
  }

  NormStats st;
  for (int c = 0; c < 2; ++c) {
    const double mean = sum[c] / double(count);
    const double var = std::max(0.0, sum2[c] / double(count) - mean * mean);
    st.mean[c] = mean;
    st.std[c] = std::max(std::sqrt(var), 1e-8);
  }
  return st;
}

LogGtSegment apply_norm(const LogGtSegment& seg, const NormStats& stats) {
  LogGtSegment out = seg;
  for (size_t i = 0; i < out.data.size(); i += 2) {
    out.data[i] = float((double(out.data[i]) - stats.mean[0]) / stats.std[0]);
    out.data[i + 1] =
        float((double(out.data[i + 1]) - stats.mean[1]) / stats.std[1]);
  }
  return out;
}

std::vector<LogGtSegment> extract_features(const audio::AudioClip& clip,
                                           const GammatoneBank& bank,
                                           const StftConfig& cfg) {
  Mat power = stft_power(clip, cfg);
  const double frame_rate = double(clip.sample_rate_hz) / double(cfg.hop);
  Spectrogram energy = apply_bank(power, bank, frame_rate);
  Spectrogram logspec = log_compress(energy);
  Spectrogram delta = compute_delta(logspec);
  return segment(logspec, delta);
}

}  // namespace esc::dsp
