#include "esc/augment.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <numeric>

#include "esc/errors.hpp"
#include "esc/fft.hpp"

namespace esc::augment {

namespace {

constexpr std::size_t kWin = 2048;
constexpr std::size_t kHop = 512;
constexpr std::size_t kBins = kWin / 2 + 1;

std::vector<double> hann_window() {
  std::vector<double> w(kWin);
  for (std::size_t n = 0; n < kWin; ++n) {
    w[n] = 0.5 - 0.5 * std::cos(2.0 * M_PI * double(n) / double(kWin));
  }
  return w;
}

// Half spectra of overlapping windowed frames; the input is zero-padded so
// every sample is covered by at least one frame.
std::vector<std::vector<std::complex<double>>> analysis_stft(
    const std::vector<float>& x, const std::vector<double>& w) {
  const std::size_t tail = x.size() > kWin ? x.size() - kWin : 0;
  const std::size_t frames = 1 + (tail + kHop - 1) / kHop;
  std::vector<std::vector<std::complex<double>>> spectra(frames);
  std::vector<std::complex<double>> buf(kWin);
  for (std::size_t t = 0; t < frames; ++t) {
    const std::size_t start = t * kHop;
    for (std::size_t n = 0; n < kWin; ++n) {
      const std::size_t i = start + n;
      const double s = i < x.size() ? double(x[i]) : 0.0;
      buf[n] = {s * w[n], 0.0};
    }
    fft::transform(buf, false);
    spectra[t].assign(buf.begin(), buf.begin() + kBins);
  }
  return spectra;
}

// Weighted overlap-add of synthesized frames; division by the accumulated
// squared window undoes both window passes.
std::vector<float> synthesis_istft(
    const std::vector<std::vector<std::complex<double>>>& spectra,
    const std::vector<double>& w, std::size_t out_len) {
  const std::size_t raw = spectra.empty()
                              ? 0
                              : (spectra.size() - 1) * kHop + kWin;
  std::vector<double> acc(std::max(raw, out_len), 0.0);
  std::vector<double> wsum(acc.size(), 0.0);
  std::vector<std::complex<double>> buf(kWin);
  for (std::size_t t = 0; t < spectra.size(); ++t) {
    for (std::size_t k = 0; k < kBins; ++k) buf[k] = spectra[t][k];
    for (std::size_t k = 1; k + 1 < kBins; ++k) {
      buf[kWin - k] = std::conj(spectra[t][k]);
    }
    fft::transform(buf, true);
    const std::size_t start = t * kHop;
    for (std::size_t n = 0; n < kWin; ++n) {
      acc[start + n] += buf[n].real() * w[n];
      wsum[start + n] += w[n] * w[n];
    }
  }
  std::vector<float> out(out_len, 0.0f);
  for (std::size_t n = 0; n < out_len && n < acc.size(); ++n) {
    if (wsum[n] > 1e-8) out[n] = float(acc[n] / wsum[n]);
  }
  return out;
}

double wrap_phase(double p) {
  return p - 2.0 * M_PI * std::round(p / (2.0 * M_PI));
}

void check_labels(const std::vector<float>& y_i,
                  const std::vector<float>& y_j) {
  if (y_i.size() != y_j.size()) {
    throw ShapeError("mixup: label length mismatch");
  }
  for (const auto* y : {&y_i, &y_j}) {
    const double s = std::accumulate(y->begin(), y->end(), 0.0);
    if (std::abs(s - 1.0) > 1e-4) {
      throw ArgumentError("mixup: labels must sum to 1");
    }
  }
}

}  // namespace

audio::AudioClip time_stretch(const audio::AudioClip& clip, double rate) {
  if (!(rate >= 0.5 && rate <= 2.0)) {
    throw ArgumentError("time_stretch: rate must lie in [0.5, 2.0]");
  }
  audio::AudioClip out;
  out.sample_rate_hz = clip.sample_rate_hz;
  if (clip.samples.empty()) return out;

  static const std::vector<double> w = hann_window();
  const auto spectra = analysis_stft(clip.samples, w);
  const std::size_t frames = spectra.size();

  std::vector<double> advance(kBins);
  for (std::size_t k = 0; k < kBins; ++k) {
    advance[k] = 2.0 * M_PI * double(k) * double(kHop) / double(kWin);
  }
  std::vector<double> phase(kBins);
  for (std::size_t k = 0; k < kBins; ++k) phase[k] = std::arg(spectra[0][k]);

  const std::vector<std::complex<double>> zero_col(kBins, {0.0, 0.0});
  std::vector<std::vector<std::complex<double>>> synth;
  for (double s = 0.0; s < double(frames); s += rate) {
    const auto t0 = std::size_t(s);
    const double frac = s - double(t0);
    const auto& a = spectra[t0];
    const auto& b = t0 + 1 < frames ? spectra[t0 + 1] : zero_col;
    std::vector<std::complex<double>> col(kBins);
    for (std::size_t k = 0; k < kBins; ++k) {
      const double mag = (1.0 - frac) * std::abs(a[k]) + frac * std::abs(b[k]);
      col[k] = std::polar(mag, phase[k]);
      const double dp = std::arg(b[k]) - std::arg(a[k]) - advance[k];
      phase[k] += advance[k] + wrap_phase(dp);
    }
    synth.push_back(std::move(col));
  }

  const auto out_len =
      std::size_t(std::llround(double(clip.samples.size()) / rate));
  out.samples = synthesis_istft(synth, w, out_len);
  return out;
}

audio::AudioClip pitch_shift(const audio::AudioClip& clip, double semitones) {
  if (!(std::abs(semitones) <= 12.0)) {
    throw ArgumentError("pitch_shift: semitones must lie in [-12, 12]");
  }
  const double ratio = std::pow(2.0, semitones / 12.0);
  audio::AudioClip shifted;
  shifted.sample_rate_hz = clip.sample_rate_hz;
  shifted.samples = audio::resample(clip.samples, 1.0 / ratio);
  auto out = time_stretch(shifted, 1.0 / ratio);
  // restore the exact source duration; the two roundings can differ by one
  out.samples.resize(clip.samples.size(), 0.0f);
  return out;
}

std::vector<AugmentedClip> augment_clip(const audio::AudioClip& clip,
                                        const AugmentPlan& plan, Rng& rng) {
  if (plan.copies_per_clip < 0) {
    throw ArgumentError("augment_clip: copies_per_clip must be >= 0");
  }
  if (!(plan.stretch_lo <= plan.stretch_hi && plan.stretch_lo >= 0.5 &&
        plan.stretch_hi <= 2.0)) {
    throw ArgumentError("augment_clip: stretch range must lie in [0.5, 2.0]");
  }
  if (!(plan.pitch_lo_semitones <= plan.pitch_hi_semitones &&
        plan.pitch_lo_semitones >= -12.0 && plan.pitch_hi_semitones <= 12.0)) {
    throw ArgumentError("augment_clip: pitch range must lie in [-12, 12]");
  }
  std::vector<AugmentedClip> out;
  out.reserve(std::size_t(plan.copies_per_clip));
  char tag[32];
  for (int i = 0; i < plan.copies_per_clip; ++i) {
    if (i % 2 == 0) {
      const double rate = rng.uniform(plan.stretch_lo, plan.stretch_hi);
      std::snprintf(tag, sizeof tag, "stretch:%.4f", rate);
      out.push_back({time_stretch(clip, rate), tag});
    } else {
      const double st =
          rng.uniform(plan.pitch_lo_semitones, plan.pitch_hi_semitones);
      std::snprintf(tag, sizeof tag, "pitch:%.4f", st);
      out.push_back({pitch_shift(clip, st), tag});
    }
  }
  return out;
}

std::pair<dsp::LogGtSegment, std::vector<float>> mixup(
    const dsp::LogGtSegment& x_i, const std::vector<float>& y_i,
    const dsp::LogGtSegment& x_j, const std::vector<float>& y_j,
    double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw ArgumentError("mixup: lambda must lie in [0, 1]");
  }
  if (x_i.frames != x_j.frames || x_i.bands != x_j.bands ||
      x_i.data.size() != x_j.data.size()) {
    throw ShapeError("mixup: segment shape mismatch");
  }
  check_labels(y_i, y_j);
  if (lambda == 1.0) return {x_i, y_i};
  if (lambda == 0.0) return {x_j, y_j};

  dsp::LogGtSegment x = x_i;
  x.class_id = -1;  // the label vector carries the mixed truth
  const float l = float(lambda), r = float(1.0 - lambda);
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    x.data[i] = l * x_i.data[i] + r * x_j.data[i];
  }
  std::vector<float> y(y_i.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = l * y_i[i] + r * y_j[i];
  }
  return {std::move(x), std::move(y)};
}

double sample_lambda(const MixupConfig& cfg, Rng& rng) {
  if (!(cfg.alpha > 0.0)) {
    throw ArgumentError("sample_lambda: alpha must be positive");
  }
  return rng.beta_symmetric(cfg.alpha);
}

std::vector<LabeledSegment> build_mixup_batch(
    const std::vector<LabeledSegment>& batch, const MixupConfig& cfg,
    Rng& rng) {
  if (!cfg.enabled || batch.size() < 2) return batch;
  std::vector<std::size_t> partner(batch.size());
  std::iota(partner.begin(), partner.end(), std::size_t{0});
  rng.shuffle(partner);
  std::vector<LabeledSegment> out;
  out.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double lambda = sample_lambda(cfg, rng);
    auto [x, y] = mixup(batch[i].features, batch[i].label,
                        batch[partner[i]].features, batch[partner[i]].label,
                        lambda);
    out.push_back({std::move(x), std::move(y)});
  }
  return out;
}

}  // namespace esc::augment
