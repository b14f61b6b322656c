#pragma once

#include <string>
#include <vector>

#include "esc/dsp.hpp"

namespace esc::store {

// Segment container file: one record per segment.
//   magic "LGT1" | version u32 | frames u32 | bands u32 | channels u32 |
//   clip_id (u32 length + bytes) | segment_index u32 | class_id i32 |
//   fold i32 | payload f32 LE, time-major / band-next / channel-last
void write_segments(const std::string& path,
                    const std::vector<dsp::LogGtSegment>& segments);

void append_segments(const std::string& path,
                     const std::vector<dsp::LogGtSegment>& segments);

std::vector<dsp::LogGtSegment> read_segments(const std::string& path);

// Plain-text "mean0 mean1 std0 std1"
void write_norm_stats(const std::string& path, const dsp::NormStats& stats);
dsp::NormStats read_norm_stats(const std::string& path);

// Augmented copies are stored under "<origin>#<transform>" ids so folds can
// exclude them from test splits and from cross-fold training.
inline bool is_augmented_id(const std::string& clip_id) {
  return clip_id.find('#') != std::string::npos;
}

inline std::string origin_id(const std::string& clip_id) {
  return clip_id.substr(0, clip_id.find('#'));
}

}  // namespace esc::store
