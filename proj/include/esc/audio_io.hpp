#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace esc::audio {

struct AudioClip {
  std::vector<float> samples;  // mono, amplitudes in [-1, 1]
  int sample_rate_hz = 0;
};

struct ClipMeta {
  std::string path;
  int fold = 0;      // 1..num_folds
  int class_id = 0;  // 0..num_classes-1
  std::string class_name;
};

struct DatasetManifest {
  std::vector<ClipMeta> clips;
  int num_classes = 0;
  int num_folds = 0;
};

// Decodes a RIFF WAV (PCM16 or IEEE float32, little endian, mono or stereo),
// mixes stereo to mono by channel mean, and resamples to target_rate_hz.
AudioClip load_clip(const std::string& path, int target_rate_hz);

// Reads root/meta/esc50.csv (header filename,fold,target,category; extra
// columns ignored) and checks the referenced files exist under root/audio.
DatasetManifest load_manifest(const std::string& root);

// test_fold goes to test, everything else to train.
std::pair<std::vector<ClipMeta>, std::vector<ClipMeta>> split_folds(
    const DatasetManifest& manifest, int test_fold);

// Windowed-sinc resampling (Kaiser window, 64 taps). ratio = out_rate/in_rate;
// output length = llround(in.size() * ratio).
std::vector<float> resample(const std::vector<float>& in, double ratio);

enum class WavEncoding { pcm16, float32 };

void write_wav(const std::string& path, const std::vector<float>& samples,
               int sample_rate_hz, WavEncoding enc = WavEncoding::pcm16);

}  // namespace esc::audio
