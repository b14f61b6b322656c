#include "esc/feature_store.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "esc/errors.hpp"

namespace esc::store {
namespace {

constexpr char kMagic[4] = {'L', 'G', 'T', '1'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {(unsigned char)(v & 0xff),
                        (unsigned char)(v >> 8 & 0xff),
                        (unsigned char)(v >> 16 & 0xff),
                        (unsigned char)(v >> 24 & 0xff)};
  os.write((const char*)b, 4);
}

void put_i32(std::ostream& os, int32_t v) { put_u32(os, uint32_t(v)); }

void put_f32(std::ostream& os, float v) {
  uint32_t u;
  std::memcpy(&u, &v, 4);
  put_u32(os, u);
}

bool get_u32(std::istream& is, uint32_t& v) {
  unsigned char b[4];
  if (!is.read((char*)b, 4)) return false;
  v = uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 |
      uint32_t(b[3]) << 24;
  return true;
}

void write_record(std::ostream& os, const dsp::LogGtSegment& seg) {
  os.write(kMagic, 4);
  put_u32(os, kVersion);
  put_u32(os, uint32_t(seg.frames));
  put_u32(os, uint32_t(seg.bands));
  put_u32(os, 2);
  put_u32(os, uint32_t(seg.clip_id.size()));
  os.write(seg.clip_id.data(), std::streamsize(seg.clip_id.size()));
  put_u32(os, uint32_t(seg.segment_index));
  put_i32(os, seg.class_id);
  put_i32(os, seg.fold);
  for (float x : seg.data) put_f32(os, x);
}

void write_all(const std::string& path,
               const std::vector<dsp::LogGtSegment>& segments,
               std::ios::openmode mode) {
  std::ofstream f(path, std::ios::binary | mode);
  if (!f) throw IoError("cannot open " + path + " for writing");
  for (const auto& seg : segments) write_record(f, seg);
  f.flush();
  if (!f) throw IoError("write failed on " + path);
}

}  // namespace

void write_segments(const std::string& path,
                    const std::vector<dsp::LogGtSegment>& segments) {
  write_all(path, segments, std::ios::trunc);
}

void append_segments(const std::string& path,
                     const std::vector<dsp::LogGtSegment>& segments) {
  write_all(path, segments, std::ios::app);
}

std::vector<dsp::LogGtSegment> read_segments(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);

  std::vector<dsp::LogGtSegment> out;
  char magic[4];
  while (f.read(magic, 4)) {
    if (std::memcmp(magic, kMagic, 4) != 0) {
      throw FormatError(path + ": bad record magic at record " +
                        std::to_string(out.size()));
    }
    uint32_t version = 0, frames = 0, bands = 0, channels = 0, id_len = 0;
    if (!get_u32(f, version) || !get_u32(f, frames) || !get_u32(f, bands) ||
        !get_u32(f, channels)) {
      throw FormatError(path + ": truncated record header");
    }
    if (version != kVersion) {
      throw FormatError(path + ": unsupported store version " +
                        std::to_string(version));
    }
    if (channels != 2 || frames == 0 || bands == 0 || frames > 1u << 20 ||
        bands > 1u << 20) {
      throw FormatError(path + ": implausible record dims");
    }
    if (!get_u32(f, id_len) || id_len > 4096) {
      throw FormatError(path + ": bad clip id length");
    }

    dsp::LogGtSegment seg;
    seg.frames = int(frames);
    seg.bands = int(bands);
    seg.clip_id.resize(id_len);
    if (id_len && !f.read(seg.clip_id.data(), id_len)) {
      throw FormatError(path + ": truncated clip id");
    }
    uint32_t seg_idx = 0, class_u = 0, fold_u = 0;
    if (!get_u32(f, seg_idx) || !get_u32(f, class_u) || !get_u32(f, fold_u)) {
      throw FormatError(path + ": truncated record header");
    }
    seg.segment_index = int(seg_idx);
    seg.class_id = int(int32_t(class_u));
    seg.fold = int(int32_t(fold_u));

    const size_t n = size_t(frames) * bands * 2;
    seg.data.resize(n);
    for (size_t i = 0; i < n; ++i) {
      uint32_t u;
      if (!get_u32(f, u)) throw FormatError(path + ": truncated payload");
      float x;
      std::memcpy(&x, &u, 4);
      seg.data[i] = x;
    }
    out.push_back(std::move(seg));
  }
  return out;
}

void write_norm_stats(const std::string& path, const dsp::NormStats& stats) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f.precision(17);
  f << stats.mean[0] << " " << stats.mean[1] << " " << stats.std[0] << " "
    << stats.std[1] << "\n";
  if (!f) throw IoError("write failed on " + path);
}

dsp::NormStats read_norm_stats(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path);
  dsp::NormStats st;
  if (!(f >> st.mean[0] >> st.mean[1] >> st.std[0] >> st.std[1])) {
    throw ParseError(path + ": expected 4 numeric values", 1);
  }
  if (!(st.std[0] > 0.0) || !(st.std[1] > 0.0)) {
    throw FormatError(path + ": std values must be positive");
  }
  return st;
}

}  // namespace esc::store
