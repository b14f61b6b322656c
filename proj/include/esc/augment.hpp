#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "esc/audio_io.hpp"
#include "esc/dsp.hpp"
#include "esc/rng.hpp"

namespace esc::augment {

struct MixupConfig {
  double alpha = 0.2;
  bool enabled = true;
};

// Offline raw-audio expansion plan. Copies alternate between a time stretch
// and a pitch shift, parameters drawn uniformly from the ranges.
struct AugmentPlan {
  double stretch_lo = 0.8;
  double stretch_hi = 1.3;
  double pitch_lo_semitones = -3.5;
  double pitch_hi_semitones = 3.5;
  int copies_per_clip = 2;
  std::uint64_t seed = 1;
};

struct AugmentedClip {
  audio::AudioClip clip;
  std::string provenance;  // e.g. "stretch:1.1342" or "pitch:-2.2510"
};

struct LabeledSegment {
  dsp::LogGtSegment features;
  std::vector<float> label;  // soft class distribution, sums to 1
};

// Phase-vocoder time stretch (2048-sample frames, hop 512). rate > 1 speeds
// the clip up; the result has exactly round(len/rate) samples and the same
// pitch content.
audio::AudioClip time_stretch(const audio::AudioClip& clip, double rate);

// Resample by 2^(semitones/12), then stretch back to the original duration.
audio::AudioClip pitch_shift(const audio::AudioClip& clip, double semitones);

// copies_per_clip variants of clip drawn from plan's ranges using a stream
// seeded by plan.seed (the clip itself does not influence the draws).
std::vector<AugmentedClip> augment_clip(const audio::AudioClip& clip,
                                        const AugmentPlan& plan, Rng& rng);

// Convex combination lambda*(x_i,y_i) + (1-lambda)*(x_j,y_j). lambda of
// exactly 0 or 1 returns the untouched endpoint.
std::pair<dsp::LogGtSegment, std::vector<float>> mixup(
    const dsp::LogGtSegment& x_i, const std::vector<float>& y_i,
    const dsp::LogGtSegment& x_j, const std::vector<float>& y_j,
    double lambda);

double sample_lambda(const MixupConfig& cfg, Rng& rng);

// Pairs every element with one chosen by a random permutation of the batch
// and mixes each pair under its own lambda. Disabled config or a batch of
// fewer than two passes through unchanged.
std::vector<LabeledSegment> build_mixup_batch(
    const std::vector<LabeledSegment>& batch, const MixupConfig& cfg,
    Rng& rng);

}  // namespace esc::augment
