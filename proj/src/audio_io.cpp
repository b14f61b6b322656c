#include "esc/audio_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <string_view>

#include "esc/errors.hpp"

namespace esc::audio {
namespace {

uint16_t read_u16(const unsigned char* p) {
  return uint16_t(p[0]) | uint16_t(p[1]) << 8;
}
uint32_t read_u32(const unsigned char* p) {
  return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 |
         uint32_t(p[3]) << 24;
}

struct FmtChunk {
  uint16_t format = 0;
  uint16_t channels = 0;
  uint32_t sample_rate = 0;
  uint16_t bits = 0;
};

// Decoded interleaved float samples plus layout.
struct RawWav {
  FmtChunk fmt;
  std::vector<float> interleaved;
};

RawWav parse_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
  if (f.bad()) throw IoError("read failed on " + path);

  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw FormatError(path + ": not a RIFF/WAVE file");
  }

  FmtChunk fmt;
  bool have_fmt = false;
  const unsigned char* data = nullptr;
  size_t data_len = 0;

  size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* hdr = bytes.data() + pos;
    uint32_t size = read_u32(hdr + 4);
    size_t body = pos + 8;
    if (body + size > bytes.size()) {
      throw FormatError(path + ": truncated chunk");
    }
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (size < 16) throw FormatError(path + ": fmt chunk too small");
      fmt.format = read_u16(bytes.data() + body);
      fmt.channels = read_u16(bytes.data() + body + 2);
      fmt.sample_rate = read_u32(bytes.data() + body + 4);
      fmt.bits = read_u16(bytes.data() + body + 14);
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      data = bytes.data() + body;
      data_len = size;
    }
    pos = body + size + (size & 1);  // chunks are word aligned
  }

  if (!have_fmt) throw FormatError(path + ": missing fmt chunk");
  if (data == nullptr) throw FormatError(path + ": missing data chunk");
  if (fmt.channels != 1 && fmt.channels != 2) {
    throw FormatError(path + ": unsupported channel count " +
                      std::to_string(fmt.channels));
  }
  if (fmt.sample_rate == 0) throw FormatError(path + ": zero sample rate");

  const bool pcm16 = fmt.format == 1 && fmt.bits == 16;
  const bool f32 = fmt.format == 3 && fmt.bits == 32;
  if (!pcm16 && !f32) {
    throw FormatError(path + ": unsupported encoding (format " +
                      std::to_string(fmt.format) + ", " +
                      std::to_string(fmt.bits) + " bit)");
  }

  const size_t bytes_per = pcm16 ? 2 : 4;
  const size_t stride = bytes_per * fmt.channels;
  if (data_len % stride != 0) {
    throw FormatError(path + ": data size not a multiple of the frame size");
  }
  const size_t n = data_len / bytes_per;
  if (n == 0) throw EmptyInputError(path + ": zero-length audio");

  RawWav out;
  out.fmt = fmt;
  out.interleaved.resize(n);
  if (pcm16) {
    for (size_t i = 0; i < n; ++i) {
      int16_t v = int16_t(read_u16(data + 2 * i));
      out.interleaved[i] = float(v) / 32768.0f;
    }
  } else {
    for (size_t i = 0; i < n; ++i) {
      uint32_t u = read_u32(data + 4 * i);
      float v;
      std::memcpy(&v, &u, 4);
      if (!std::isfinite(v)) {
        throw FormatError(path + ": non-finite sample in float data");
      }
      out.interleaved[i] = v;
    }
  }
  return out;
}

double bessel_i0(double x) {
  double sum = 1.0, term = 1.0;
  for (int k = 1; k < 64; ++k) {
    double h = x / (2.0 * k);
    term *= h * h;
    sum += term;
    if (term < 1e-15 * sum) break;
  }
  return sum;
}

double sinc(double u) {
  if (u == 0.0) return 1.0;
  double p = M_PI * u;
  return std::sin(p) / p;
}

constexpr int kHalfTaps = 32;  // 64-tap prototype
constexpr double kKaiserBeta = 8.6;

std::string_view trim_cr(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == '\n')) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  size_t start = 0;
  while (true) {
    size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

int parse_int(std::string_view s, const char* what, long line) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ParseError(std::string("bad ") + what + " value '" + std::string(s) +
                         "'",
                     line);
  }
  return v;
}

}  // namespace

std::vector<float> resample(const std::vector<float>& in, double ratio) {
  if (!(ratio > 0.0) || !std::isfinite(ratio)) {
    throw ArgumentError("resample: ratio must be positive and finite");
  }
  if (in.empty()) return {};
  if (ratio == 1.0) return in;

  const long long out_len = std::llround(double(in.size()) * ratio);
  std::vector<float> out(size_t(std::max(1LL, out_len)));

  const double scale = std::min(1.0, ratio);  // cutoff shrink for decimation
  const double support = double(kHalfTaps) / scale;
  const double i0_beta = bessel_i0(kKaiserBeta);
  const long long n = (long long)in.size();

  for (size_t i = 0; i < out.size(); ++i) {
    const double t = double(i) / ratio;
    long long m0 = (long long)std::ceil(t - support);
    long long m1 = (long long)std::floor(t + support);
    m0 = std::max(m0, 0LL);
    m1 = std::min(m1, n - 1);
    double acc = 0.0;
    for (long long m = m0; m <= m1; ++m) {
      const double x = (t - double(m)) * scale;
      const double u = x / double(kHalfTaps);
      if (u <= -1.0 || u >= 1.0) continue;
      const double w = bessel_i0(kKaiserBeta * std::sqrt(1.0 - u * u)) / i0_beta;
      acc += double(in[size_t(m)]) * scale * sinc(x) * w;
    }
    out[i] = float(acc);
  }
  return out;
}

AudioClip load_clip(const std::string& path, int target_rate_hz) {
  if (target_rate_hz <= 0) {
    throw ArgumentError("load_clip: target rate must be positive");
  }
  RawWav raw = parse_wav(path);

  std::vector<float> mono;
  if (raw.fmt.channels == 1) {
    mono = std::move(raw.interleaved);
  } else {
    mono.resize(raw.interleaved.size() / 2);
    for (size_t i = 0; i < mono.size(); ++i) {
      mono[i] = 0.5f * (raw.interleaved[2 * i] + raw.interleaved[2 * i + 1]);
    }
  }

  if (int(raw.fmt.sample_rate) != target_rate_hz) {
    mono = resample(mono, double(target_rate_hz) / double(raw.fmt.sample_rate));
  }
  for (float& v : mono) v = std::clamp(v, -1.0f, 1.0f);

  AudioClip clip;
  clip.samples = std::move(mono);
  clip.sample_rate_hz = target_rate_hz;
  return clip;
}

DatasetManifest load_manifest(const std::string& root) {
  namespace fs = std::filesystem;
  const std::string csv_path = root + "/meta/esc50.csv";
  std::ifstream f(csv_path);
  if (!f) throw IoError("cannot open " + csv_path);

  std::string line;
  if (!std::getline(f, line)) throw ParseError("empty manifest", 1);
  auto header = split_csv(trim_cr(line));
  int col_file = -1, col_fold = -1, col_target = -1, col_cat = -1;
  for (size_t i = 0; i < header.size(); ++i) {
    if (header[i] == "filename") col_file = int(i);
    else if (header[i] == "fold") col_fold = int(i);
    else if (header[i] == "target") col_target = int(i);
    else if (header[i] == "category") col_cat = int(i);
  }
  if (col_file < 0 || col_fold < 0 || col_target < 0 || col_cat < 0) {
    throw ParseError(
        "manifest header must contain filename, fold, target, category", 1);
  }
  const size_t min_cols =
      size_t(std::max({col_file, col_fold, col_target, col_cat})) + 1;

  DatasetManifest m;
  std::set<std::string> seen;
  std::set<int> class_ids;
  long line_no = 1;
  while (std::getline(f, line)) {
    ++line_no;
    auto sv = trim_cr(line);
    if (sv.empty()) continue;
    auto cols = split_csv(sv);
    if (cols.size() < min_cols) {
      throw ParseError("row has " + std::to_string(cols.size()) +
                           " columns, need at least " +
                           std::to_string(min_cols),
                       line_no);
    }
    ClipMeta cm;
    std::string fname(cols[size_t(col_file)]);
    if (fname.empty()) throw ParseError("empty filename", line_no);
    cm.path = root + "/audio/" + fname;
    cm.fold = parse_int(cols[size_t(col_fold)], "fold", line_no);
    cm.class_id = parse_int(cols[size_t(col_target)], "target", line_no);
    cm.class_name = std::string(cols[size_t(col_cat)]);
    if (cm.fold < 1) throw ParseError("fold must be >= 1", line_no);
    if (cm.class_id < 0) throw ParseError("target must be >= 0", line_no);
    if (!seen.insert(fname).second) {
      throw ParseError("duplicate filename '" + fname + "'", line_no);
    }
    if (!fs::exists(cm.path)) {
      throw IoError("manifest references missing audio file: " + cm.path);
    }
    class_ids.insert(cm.class_id);
    m.num_folds = std::max(m.num_folds, cm.fold);
    m.clips.push_back(std::move(cm));
  }
  if (m.clips.empty()) throw ParseError("manifest has no data rows", line_no);

  m.num_classes = int(class_ids.size());
  for (int c = 0; c < m.num_classes; ++c) {
    if (!class_ids.count(c)) {
      throw FormatError("class ids must cover 0.." +
                        std::to_string(m.num_classes - 1) + "; missing " +
                        std::to_string(c));
    }
  }
  return m;
}

std::pair<std::vector<ClipMeta>, std::vector<ClipMeta>> split_folds(
    const DatasetManifest& manifest, int test_fold) {
  if (test_fold < 1 || test_fold > manifest.num_folds) {
    throw ArgumentError("test_fold " + std::to_string(test_fold) +
                        " out of range 1.." +
                        std::to_string(manifest.num_folds));
  }
  std::vector<ClipMeta> train, test;
  for (const auto& c : manifest.clips) {
    (c.fold == test_fold ? test : train).push_back(c);
  }
  return {std::move(train), std::move(test)};
}

void write_wav(const std::string& path, const std::vector<float>& samples,
               int sample_rate_hz, WavEncoding enc) {
  if (sample_rate_hz <= 0) {
    throw ArgumentError("write_wav: sample rate must be positive");
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot create " + path);

  const uint16_t channels = 1;
  const uint16_t bits = enc == WavEncoding::pcm16 ? 16 : 32;
  const uint16_t format = enc == WavEncoding::pcm16 ? 1 : 3;
  const uint32_t data_size = uint32_t(samples.size() * bits / 8);
  const uint16_t block = uint16_t(channels * bits / 8);
  const uint32_t byte_rate = uint32_t(sample_rate_hz) * block;

  auto put_u16 = [&](uint16_t v) {
    unsigned char b[2] = {(unsigned char)(v & 0xff),
                          (unsigned char)(v >> 8 & 0xff)};
    f.write((const char*)b, 2);
  };
  auto put_u32 = [&](uint32_t v) {
    unsigned char b[4] = {(unsigned char)(v & 0xff),
                          (unsigned char)(v >> 8 & 0xff),
                          (unsigned char)(v >> 16 & 0xff),
                          (unsigned char)(v >> 24 & 0xff)};
    f.write((const char*)b, 4);
  };

  f.write("RIFF", 4);
  put_u32(36 + data_size);
  f.write("WAVE", 4);
  f.write("fmt ", 4);
  put_u32(16);
  put_u16(format);
  put_u16(channels);
  put_u32(uint32_t(sample_rate_hz));
  put_u32(byte_rate);
  put_u16(block);
  put_u16(bits);
  f.write("data", 4);
  put_u32(data_size);

  if (enc == WavEncoding::pcm16) {
    for (float v : samples) {
      float c = std::clamp(v, -1.0f, 1.0f);
      put_u16(uint16_t(int16_t(std::lround(c * 32767.0f))));
    }
  } else {
    for (float v : samples) {
      uint32_t u;
      float c = std::clamp(v, -1.0f, 1.0f);
      std::memcpy(&u, &c, 4);
      put_u32(u);
    }
  }
  if (!f) throw IoError("write failed on " + path);
}

}  // namespace esc::audio
