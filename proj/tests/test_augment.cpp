#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "esc/augment.hpp"
#include "esc/fft.hpp"
#include "esc/rng.hpp"

using esc::audio::AudioClip;
using esc::augment::AugmentPlan;
using esc::augment::LabeledSegment;
using esc::augment::MixupConfig;
using esc::dsp::LogGtSegment;

namespace {

AudioClip sine(double freq_hz, double seconds, int fs = 44100,
               double amp = 0.5) {
  AudioClip c;
  c.sample_rate_hz = fs;
  const auto n = std::size_t(seconds * fs);
  c.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    c.samples[i] = float(amp * std::sin(2.0 * M_PI * freq_hz * i / fs));
  }
  return c;
}

// Dominant frequency via a long zero-padded FFT over the clip interior.
double peak_hz(const AudioClip& c) {
  const std::size_t kN = 1 << 17;
  std::vector<std::complex<double>> buf(kN, {0.0, 0.0});
  const std::size_t skip = std::min<std::size_t>(4096, c.samples.size() / 8);
  const std::size_t avail = c.samples.size() - skip;
  const std::size_t take = std::min<std::size_t>(avail, 1 << 16);
  for (std::size_t i = 0; i < take; ++i) {
    const double w =
        0.5 - 0.5 * std::cos(2.0 * M_PI * double(i) / double(take));
    buf[i] = {double(c.samples[skip + i]) * w, 0.0};
  }
  esc::fft::transform(buf, false);
  std::size_t best = 1;
  for (std::size_t k = 1; k < kN / 2; ++k) {
    if (std::abs(buf[k]) > std::abs(buf[best])) best = k;
  }
  return double(best) * c.sample_rate_hz / double(kN);
}

double correlation(const std::vector<float>& a, const std::vector<float>& b) {
  const std::size_t n = std::min(a.size(), b.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= double(n);
  mb /= double(n);
  double num = 0.0, da = 0.0, db = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    num += (a[i] - ma) * (b[i] - mb);
    da += (a[i] - ma) * (a[i] - ma);
    db += (b[i] - mb) * (b[i] - mb);
  }
  return num / std::sqrt(da * db);
}

LogGtSegment seg_filled(int frames, int bands, float base) {
  LogGtSegment s;
  s.frames = frames;
  s.bands = bands;
  s.data.resize(std::size_t(frames) * bands * 2);
  for (std::size_t i = 0; i < s.data.size(); ++i) {
    s.data[i] = base + 0.01f * float(i % 97);
  }
  return s;
}

std::vector<float> onehot(std::size_t n, std::size_t k) {
  std::vector<float> y(n, 0.0f);
  y[k] = 1.0f;
  return y;
}

}  // namespace

TEST_CASE("time_stretch validates the rate") {
  const auto c = sine(440.0, 0.2);
  CHECK_THROWS_AS(esc::augment::time_stretch(c, 0.49), esc::ArgumentError);
  CHECK_THROWS_AS(esc::augment::time_stretch(c, 2.01), esc::ArgumentError);
  CHECK_NOTHROW(esc::augment::time_stretch(c, 0.5));
  CHECK_NOTHROW(esc::augment::time_stretch(c, 2.0));
}

TEST_CASE("time_stretch at unit rate is a near-identity") {
  const auto c = sine(440.0, 1.0);
  const auto out = esc::augment::time_stretch(c, 1.0);
  CHECK(std::llabs(std::int64_t(out.samples.size()) -
                   std::int64_t(c.samples.size())) <= 512);
  CHECK(correlation(out.samples, c.samples) > 0.99);
  CHECK(out.sample_rate_hz == c.sample_rate_hz);
}

TEST_CASE("time_stretch length follows len/rate") {
  AudioClip c;
  c.sample_rate_hz = 44100;
  c.samples.resize(220500);
  esc::Rng rng(5);
  for (auto& s : c.samples) s = float(rng.uniform(-0.3, 0.3));
  const auto out = esc::augment::time_stretch(c, 1.3);
  CHECK(std::llabs(std::int64_t(out.samples.size()) - 169615) <= 512);
}

TEST_CASE("time_stretch preserves pitch") {
  const auto c = sine(440.0, 2.0);
  const auto slow = esc::augment::time_stretch(c, 0.8);
  CHECK(std::abs(peak_hz(slow) - 440.0) < 5.0);
  const auto fast = esc::augment::time_stretch(c, 1.3);
  CHECK(std::abs(peak_hz(fast) - 440.0) < 5.0);
}

TEST_CASE("pitch_shift of zero semitones is a near-identity") {
  const auto c = sine(440.0, 1.0);
  const auto out = esc::augment::pitch_shift(c, 0.0);
  CHECK(out.samples.size() == c.samples.size());
  CHECK(correlation(out.samples, c.samples) > 0.99);
}

TEST_CASE("pitch_shift moves the spectral peak by the semitone ratio") {
  const auto c = sine(440.0, 2.0);
  const auto up = esc::augment::pitch_shift(c, 12.0);
  CHECK(up.samples.size() == c.samples.size());
  CHECK(std::abs(peak_hz(up) - 880.0) < 10.0);

  const auto down = esc::augment::pitch_shift(c, -3.5);
  const double want = 440.0 * std::pow(2.0, -3.5 / 12.0);
  CHECK(std::abs(peak_hz(down) - want) < 5.0);
}

TEST_CASE("pitch_shift rejects out-of-range semitones") {
  const auto c = sine(440.0, 0.2);
  CHECK_THROWS_AS(esc::augment::pitch_shift(c, 12.5), esc::ArgumentError);
  CHECK_THROWS_AS(esc::augment::pitch_shift(c, -12.5), esc::ArgumentError);
}

TEST_CASE("silence stays silent through both transforms") {
  AudioClip c;
  c.sample_rate_hz = 44100;
  c.samples.assign(30000, 0.0f);
  for (const auto& out : {esc::augment::time_stretch(c, 0.9),
                          esc::augment::pitch_shift(c, 3.0)}) {
    for (float v : out.samples) CHECK(std::abs(v) <= 1e-12);
  }
}

TEST_CASE("augment_clip is reproducible and alternates transforms") {
  const auto c = sine(300.0, 0.5);
  AugmentPlan plan;
  plan.copies_per_clip = 4;
  plan.seed = 77;

  esc::Rng r1(plan.seed), r2(plan.seed), r3(plan.seed + 1);
  const auto a = esc::augment::augment_clip(c, plan, r1);
  const auto b = esc::augment::augment_clip(c, plan, r2);
  const auto d = esc::augment::augment_clip(c, plan, r3);

  REQUIRE(a.size() == 4);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].provenance == b[i].provenance);
    CHECK(a[i].clip.samples == b[i].clip.samples);  // bitwise
    const auto want = i % 2 == 0 ? "stretch:" : "pitch:";
    CHECK(a[i].provenance.substr(0, a[i].provenance.find(':') + 1) == want);
  }
  CHECK(a[0].provenance != d[0].provenance);

  plan.copies_per_clip = 0;
  esc::Rng r4(1);
  CHECK(esc::augment::augment_clip(c, plan, r4).empty());
  plan.copies_per_clip = -1;
  CHECK_THROWS_AS(esc::augment::augment_clip(c, plan, r4),
                  esc::ArgumentError);
  plan.copies_per_clip = 1;
  plan.stretch_lo = 0.4;
  CHECK_THROWS_AS(esc::augment::augment_clip(c, plan, r4),
                  esc::ArgumentError);
}

TEST_CASE("mixup endpoints and the 0.7 label example") {
  const auto xi = seg_filled(4, 3, 1.0f);
  const auto xj = seg_filled(4, 3, -2.0f);
  const auto yi = onehot(5, 0), yj = onehot(5, 1);

  const auto [x1, y1] = esc::augment::mixup(xi, yi, xj, yj, 1.0);
  CHECK(x1.data == xi.data);
  CHECK(y1 == yi);
  const auto [x0, y0] = esc::augment::mixup(xi, yi, xj, yj, 0.0);
  CHECK(x0.data == xj.data);
  CHECK(y0 == yj);

  const auto [xm, ym] = esc::augment::mixup(xi, yi, xj, yj, 0.7);
  CHECK(ym[0] == doctest::Approx(0.7).epsilon(1e-6));
  CHECK(ym[1] == doctest::Approx(0.3).epsilon(1e-6));
  for (std::size_t k = 2; k < ym.size(); ++k) CHECK(ym[k] == 0.0f);
  CHECK(xm.data[5] ==
        doctest::Approx(0.7 * xi.data[5] + 0.3 * xj.data[5]).epsilon(1e-6));

  esc::Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    const double l = rng.uniform();
    const auto [x, y] = esc::augment::mixup(xi, yi, xj, yj, l);
    CHECK(std::accumulate(y.begin(), y.end(), 0.0) ==
          doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("mixup is linear in lambda") {
  const auto xi = seg_filled(3, 4, 0.5f);
  const auto xj = seg_filled(3, 4, 2.5f);
  const auto yi = onehot(4, 2), yj = onehot(4, 3);
  const double l = 0.37;
  const auto [xa, ya] = esc::augment::mixup(xi, yi, xj, yj, l);
  const auto [xb, yb] = esc::augment::mixup(xi, yi, xj, yj, 1.0 - l);
  for (std::size_t i = 0; i < xa.data.size(); ++i) {
    CHECK(xa.data[i] + xb.data[i] ==
          doctest::Approx(xi.data[i] + xj.data[i]).epsilon(1e-6));
  }
  for (std::size_t i = 0; i < ya.size(); ++i) {
    CHECK(ya[i] + yb[i] == doctest::Approx(yi[i] + yj[i]).epsilon(1e-6));
  }
}

TEST_CASE("mixup with itself changes nothing") {
  const auto x = seg_filled(3, 4, 0.9f);
  const auto y = onehot(3, 1);
  const auto [xm, ym] = esc::augment::mixup(x, y, x, y, 0.42);
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    CHECK(xm.data[i] == doctest::Approx(x.data[i]).epsilon(1e-6));
  }
  for (std::size_t i = 0; i < y.size(); ++i) {
    CHECK(ym[i] == doctest::Approx(y[i]).epsilon(1e-6));
  }
}

TEST_CASE("mixup validates its inputs") {
  const auto xi = seg_filled(3, 4, 0.0f);
  const auto xj = seg_filled(4, 3, 0.0f);
  const auto y = onehot(2, 0);
  CHECK_THROWS_AS(esc::augment::mixup(xi, y, xj, y, 0.5), esc::ShapeError);
  CHECK_THROWS_AS(esc::augment::mixup(xi, y, xi, y, 1.5), esc::ArgumentError);
  CHECK_THROWS_AS(esc::augment::mixup(xi, y, xi, y, -0.1),
                  esc::ArgumentError);
  std::vector<float> bad = {0.5f, 0.3f};  // sums to 0.8
  CHECK_THROWS_AS(esc::augment::mixup(xi, bad, xi, y, 0.5),
                  esc::ArgumentError);
  CHECK_THROWS_AS(esc::augment::mixup(xi, onehot(3, 0), xi, y, 0.5),
                  esc::ShapeError);
}

TEST_CASE("sample_lambda matches Beta(alpha, alpha)") {
  MixupConfig cfg;
  SUBCASE("alpha = 1 is uniform (KS)") {
    cfg.alpha = 1.0;
    esc::Rng rng(11);
    const std::size_t n = 100000;
    std::vector<double> draws(n);
    for (auto& d : draws) d = esc::augment::sample_lambda(cfg, rng);
    std::sort(draws.begin(), draws.end());
    double ks = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(draws[i] >= 0.0);
      CHECK(draws[i] <= 1.0);
      ks = std::max(ks, std::abs(double(i + 1) / n - draws[i]));
      ks = std::max(ks, std::abs(draws[i] - double(i) / n));
    }
    CHECK(ks < 0.01);
  }
  SUBCASE("symmetry holds for small alpha") {
    cfg.alpha = 0.2;
    esc::Rng rng(12);
    double mean = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
      const double l = esc::augment::sample_lambda(cfg, rng);
      CHECK(l >= 0.0);
      CHECK(l <= 1.0);
      mean += l;
    }
    CHECK(mean / n == doctest::Approx(0.5).epsilon(0.02));
  }
  SUBCASE("alpha must be positive") {
    cfg.alpha = 0.0;
    esc::Rng rng(13);
    CHECK_THROWS_AS(esc::augment::sample_lambda(cfg, rng),
                    esc::ArgumentError);
  }
}

TEST_CASE("build_mixup_batch") {
  std::vector<LabeledSegment> batch;
  for (int i = 0; i < 6; ++i) {
    batch.push_back({seg_filled(2, 3, float(i)), onehot(4, std::size_t(i) % 4)});
  }
  MixupConfig cfg;
  cfg.alpha = 0.2;

  SUBCASE("disabled leaves the batch untouched") {
    cfg.enabled = false;
    esc::Rng rng(1);
    const auto out = esc::augment::build_mixup_batch(batch, cfg, rng);
    REQUIRE(out.size() == batch.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      CHECK(out[i].features.data == batch[i].features.data);
      CHECK(out[i].label == batch[i].label);
    }
  }
  SUBCASE("a single element passes through") {
    esc::Rng rng(1);
    const std::vector<LabeledSegment> one(batch.begin(), batch.begin() + 1);
    const auto out = esc::augment::build_mixup_batch(one, cfg, rng);
    REQUIRE(out.size() == 1);
    CHECK(out[0].features.data == one[0].features.data);
  }
  SUBCASE("mixed labels stay distributions and output is seeded") {
    esc::Rng r1(9), r2(9), r3(10);
    const auto a = esc::augment::build_mixup_batch(batch, cfg, r1);
    const auto b = esc::augment::build_mixup_batch(batch, cfg, r2);
    const auto c = esc::augment::build_mixup_batch(batch, cfg, r3);
    REQUIRE(a.size() == batch.size());
    bool differs = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(std::accumulate(a[i].label.begin(), a[i].label.end(), 0.0) ==
            doctest::Approx(1.0).epsilon(1e-6));
      CHECK(a[i].features.data == b[i].features.data);
      if (a[i].features.data != c[i].features.data) differs = true;
    }
    CHECK(differs);
  }
}
