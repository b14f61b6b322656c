#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "esc/audio_io.hpp"

namespace esc::dsp {

struct StftConfig {
  int window_len = 1024;  // power of two
  int hop = 512;
};

struct Mat {
  std::size_t rows = 0, cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}
  double& at(std::size_t r, std::size_t c) { return v[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
};

enum class Domain { energy, log, delta };

struct Spectrogram {
  Mat values;  // frames x bands
  double frame_rate_hz = 0.0;
  Domain domain = Domain::energy;
};

struct GammatoneBank {
  int num_bands = 0;
  int num_bins = 0;
  std::vector<double> weights;  // num_bands x num_bins, row max = 1
  std::vector<double> center_freqs_hz;

  double w(int band, int bin) const { return weights[size_t(band) * num_bins + bin]; }
};

// One model input window: frames x bands x 2 (static, delta), time-major.
struct LogGtSegment {
  int frames = 0;
  int bands = 0;
  std::vector<float> data;

  std::string clip_id;
  int segment_index = 0;
  int class_id = -1;
  int fold = 0;

  float& at(int t, int b, int c) {
    return data[(size_t(t) * bands + b) * 2 + c];
  }
  float at(int t, int b, int c) const {
    return data[(size_t(t) * bands + b) * 2 + c];
  }
};

struct NormStats {
  double mean[2] = {0.0, 0.0};
  double std[2] = {1.0, 1.0};  // floored at 1e-8
};

// Squared-magnitude STFT with a periodic Hamming window. Frame t covers
// samples [t*hop, t*hop + window_len); result is frames x (window_len/2 + 1).
Mat stft_power(const audio::AudioClip& clip, const StftConfig& cfg);

// 4th-order gammatone magnitude responses sampled at FFT bin frequencies,
// centers spaced on the ERB-rate scale strictly inside (f_min, fs/2),
// each row peak-normalized to exactly 1.
GammatoneBank make_gammatone_bank(int num_bands, int num_bins,
                                  int sample_rate_hz, double f_min_hz);

// out[t,b] = sum_k weights[b,k] * power[t,k]
Spectrogram apply_bank(const Mat& power, const GammatoneBank& bank,
                       double frame_rate_hz = 0.0);

// out = ln(in + eps); input must be energy domain
Spectrogram log_compress(const Spectrogram& spec, double eps = 1e-10);

// Regression delta with replicate edge padding:
// d[t] = sum_{n=1..N} n*(x[t+n] - x[t-n]) / (2*sum n^2)
Spectrogram compute_delta(const Spectrogram& spec, int half_window = 2);

// Slices both spectrograms into frames_per_segment windows with the given
// overlap; trailing partial windows are dropped. Channel 0 = static,
// channel 1 = delta.
std::vector<LogGtSegment> segment(const Spectrogram& spec_static,
                                  const Spectrogram& spec_delta,
                                  int frames_per_segment = 128,
                                  double overlap = 0.5);

// Per-channel scalar mean and population std over every entry.
NormStats fit_norm(const std::vector<LogGtSegment>& segments);

LogGtSegment apply_norm(const LogGtSegment& seg, const NormStats& stats);

// stft -> bank -> log -> delta -> segment
std::vector<LogGtSegment> extract_features(const audio::AudioClip& clip,
                                           const GammatoneBank& bank,
                                           const StftConfig& cfg);

}  // namespace esc::dsp
