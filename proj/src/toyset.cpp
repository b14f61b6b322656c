#include "esc/toyset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "esc/errors.hpp"
#include "esc/rng.hpp"

namespace esc::toyset {

namespace {

constexpr const char* kClassNames[kNumClasses] = {"tone", "noise_burst",
                                                  "chirp", "am_noise"};

void check(const ToyConfig& cfg) {
  if (cfg.clips_per_class <= 0 || cfg.num_folds <= 0 ||
      cfg.sample_rate_hz <= 0 || !(cfg.seconds > 0.0)) {
    throw ArgumentError("toyset: config fields must be positive");
  }
  if (cfg.clips_per_class < cfg.num_folds) {
    throw ArgumentError("toyset: need at least one clip per class per fold");
  }
}

// dense turns the burst class into one sustained burst so that every sample
// of an event window carries signal; the full-clip generator keeps the gaps.
std::vector<float> synth(int class_id, Rng& rng, int fs, std::size_t n,
                         bool dense = false) {
  std::vector<float> s(n, 0.0f);
  const double dt = 1.0 / fs;
  switch (class_id) {
    case 0: {  // pure tone
      const double f = std::exp(rng.uniform(std::log(300.0), std::log(3000.0)));
      const double amp = rng.uniform(0.25, 0.6);
      const double phase = rng.uniform(0.0, 2.0 * M_PI);
      for (std::size_t i = 0; i < n; ++i) {
        s[i] = float(amp * std::sin(2.0 * M_PI * f * i * dt + phase));
      }
      break;
    }
    case 1: {  // white-noise bursts
      const double amp = rng.uniform(0.15, 0.4);
      std::vector<double> env(n, 1.0);
      if (!dense) {
        std::fill(env.begin(), env.end(), 0.0);
        const int bursts = 2 + int(rng.index(3));
        for (int b = 0; b < bursts; ++b) {
          const double len = rng.uniform(0.1, 0.25) * double(n);
          const double start = rng.uniform(0.0, double(n) - len);
          const auto lo = std::size_t(start), hi = std::size_t(start + len);
          for (std::size_t i = lo; i < hi && i < n; ++i) env[i] = 1.0;
        }
      }
      for (std::size_t i = 0; i < n; ++i) {
        s[i] = float(std::clamp(amp * env[i] * rng.normal(), -0.95, 0.95));
      }
      break;
    }
    case 2: {  // linear chirp
      const double f0 = rng.uniform(200.0, 800.0);
      const double f1 = rng.uniform(2500.0, 6000.0);
      const double amp = rng.uniform(0.25, 0.6);
      const double phase = rng.uniform(0.0, 2.0 * M_PI);
      const double T = double(n) * dt;
      for (std::size_t i = 0; i < n; ++i) {
        const double t = i * dt;
        const double arg = 2.0 * M_PI * (f0 * t + 0.5 * (f1 - f0) * t * t / T);
        s[i] = float(amp * std::sin(arg + phase));
      }
      break;
    }
    case 3: {  // amplitude-modulated noise
      const double amp = rng.uniform(0.15, 0.4);
      const double fm = rng.uniform(2.0, 8.0);
      const double depth = rng.uniform(0.6, 1.0);
      const double phase = rng.uniform(0.0, 2.0 * M_PI);
      for (std::size_t i = 0; i < n; ++i) {
        const double env = (1.0 - 0.5 * depth) +
                           0.5 * depth * std::sin(2.0 * M_PI * fm * i * dt + phase);
        s[i] = float(std::clamp(amp * env * rng.normal(), -0.95, 0.95));
      }
      break;
    }
    default:
      throw ArgumentError("toyset: class_id must lie in [0, 4)");
  }
  return s;
}

}  // namespace

const char* class_name(int class_id) {
  if (class_id < 0 || class_id >= kNumClasses) {
    throw ArgumentError("toyset: class_id must lie in [0, 4)");
  }
  return kClassNames[class_id];
}

audio::AudioClip make_clip(int class_id, std::uint64_t seed,
                           const ToyConfig& cfg) {
  check(cfg);
  class_name(class_id);  // range check
  audio::AudioClip clip;
  clip.sample_rate_hz = cfg.sample_rate_hz;
  const auto n = std::size_t(cfg.seconds * cfg.sample_rate_hz);
  Rng rng(seed);
  clip.samples = synth(class_id, rng, cfg.sample_rate_hz, n);
  return clip;
}

audio::AudioClip make_event_clip(int class_id, double event_start,
                                 double event_end, std::uint64_t seed,
                                 const ToyConfig& cfg) {
  if (!(0.0 <= event_start && event_start < event_end && event_end <= 1.0)) {
    throw ArgumentError("toyset: event window must satisfy 0 <= a < b <= 1");
  }
  check(cfg);
  class_name(class_id);  // range check
  audio::AudioClip clip;
  clip.sample_rate_hz = cfg.sample_rate_hz;
  const auto n = std::size_t(cfg.seconds * cfg.sample_rate_hz);
  Rng rng(seed);
  clip.samples = synth(class_id, rng, cfg.sample_rate_hz, n, /*dense=*/true);
  const auto lo = std::size_t(event_start * double(n));
  const auto hi = std::size_t(event_end * double(n));
  const auto ramp = std::min<std::size_t>(std::size_t(cfg.sample_rate_hz / 200),
                                          (hi - lo) / 4);
  for (std::size_t i = 0; i < n; ++i) {
    double g = 0.0;
    if (i >= lo && i < hi) {
      g = 1.0;
      if (i - lo < ramp) {
        g = 0.5 - 0.5 * std::cos(M_PI * double(i - lo) / double(ramp));
      } else if (hi - i <= ramp) {
        g = 0.5 - 0.5 * std::cos(M_PI * double(hi - i) / double(ramp));
      }
    }
    clip.samples[i] = float(clip.samples[i] * g);
  }
  return clip;
}

void write_dataset(const std::string& root, const ToyConfig& cfg) {
  check(cfg);
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(fs::path(root) / "meta", ec);
  fs::create_directories(fs::path(root) / "audio", ec);
  if (ec) throw IoError("toyset: cannot create " + root + ": " + ec.message());

  std::ofstream csv(fs::path(root) / "meta" / "esc50.csv");
  if (!csv) throw IoError("toyset: cannot write manifest under " + root);
  csv << "filename,fold,target,category\n";

  int idx = 0;
  for (int cls = 0; cls < kNumClasses; ++cls) {
    for (int i = 0; i < cfg.clips_per_class; ++i, ++idx) {
      const int fold = 1 + (i % cfg.num_folds);
      char name[64];
      std::snprintf(name, sizeof name, "%d-toy%03d-A-%d.wav", fold, idx, cls);
      const auto clip =
          make_clip(cls, Rng::derive_seed(cfg.seed, std::uint64_t(idx)), cfg);
      audio::write_wav((fs::path(root) / "audio" / name).string(),
                       clip.samples, clip.sample_rate_hz);
      csv << name << "," << fold << "," << cls << "," << kClassNames[cls]
          << "\n";
    }
  }
  if (!csv) throw IoError("toyset: manifest write failed under " + root);
}

}  // namespace esc::toyset
