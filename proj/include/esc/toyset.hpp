#pragma once

#include <cstdint>
#include <string>

#include "esc/audio_io.hpp"

namespace esc::toyset {

// Four synthetic classes: 0 pure tone, 1 white-noise bursts, 2 linear
// chirp, 3 amplitude-modulated noise.
constexpr int kNumClasses = 4;

const char* class_name(int class_id);

struct ToyConfig {
  int clips_per_class = 40;
  int num_folds = 2;
  int sample_rate_hz = 44100;
  // One 128-frame feature segment per clip, with enough tail that a copy
  // time-stretched by up to 1.3x still fills a segment.
  double seconds = 2.0;
  std::uint64_t seed = 1;
};

// Deterministic in (class_id, seed, cfg); every clip draws its own
// frequency/amplitude/timing parameters from the seed.
audio::AudioClip make_clip(int class_id, std::uint64_t seed,
                           const ToyConfig& cfg);

// Silence everywhere except [event_start, event_end) (fractions of the clip
// length), which carries the class signal under a raised-cosine ramp.
audio::AudioClip make_event_clip(int class_id, double event_start,
                                 double event_end, std::uint64_t seed,
                                 const ToyConfig& cfg);

// ESC-layout dataset: root/meta/esc50.csv plus
// root/audio/{fold}-toy{idx}-A-{class}.wav, folds assigned round-robin
// within each class. Existing files are overwritten.
void write_dataset(const std::string& root, const ToyConfig& cfg);

}  // namespace esc::toyset
