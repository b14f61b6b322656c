#include "esc/train.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <unordered_map>

#include "esc/errors.hpp"
#include "esc/feature_store.hpp"
#include "esc/optim.hpp"
#include "esc/rng.hpp"
#include "json.hpp"

namespace esc::train {

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

void validate(const TrainConfig& cfg) {
  if (cfg.epochs <= 0) throw ArgumentError("train: epochs must be positive");
  if (cfg.batch_size <= 0) {
    throw ArgumentError("train: batch_size must be positive");
  }
  if (!(cfg.lr_initial > 0.0)) {
    throw ArgumentError("train: lr_initial must be positive");
  }
  if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0)) {
    throw ArgumentError("train: momentum must lie in [0, 1)");
  }
  if (cfg.l2 < 0.0) throw ArgumentError("train: l2 must be non-negative");
  if (!(cfg.init_std > 0.0)) {
    throw ArgumentError("train: init_std must be positive");
  }
}

std::vector<float> onehot(std::size_t num_classes, int class_id) {
  if (class_id < 0 || std::size_t(class_id) >= num_classes) {
    throw ArgumentError("train: segment class_id " +
                        std::to_string(class_id) + " outside [0, " +
                        std::to_string(num_classes) + ")");
  }
  std::vector<float> y(num_classes, 0.0f);
  y[std::size_t(class_id)] = 1.0f;
  return y;
}

// -- little-endian binary helpers ------------------------------------------

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {(unsigned char)(v), (unsigned char)(v >> 8),
                        (unsigned char)(v >> 16), (unsigned char)(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  put_u32(os, std::uint32_t(v));
  put_u32(os, std::uint32_t(v >> 32));
}

void put_f32(std::ostream& os, float v) {
  put_u32(os, std::bit_cast<std::uint32_t>(v));
}

void put_f64(std::ostream& os, double v) {
  put_u64(os, std::bit_cast<std::uint64_t>(v));
}

void put_str(std::ostream& os, const std::string& s) {
  put_u32(os, std::uint32_t(s.size()));
  os.write(s.data(), std::streamsize(s.size()));
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) {
    throw FormatError("checkpoint: truncated file");
  }
  return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 |
         std::uint32_t(b[2]) << 16 | std::uint32_t(b[3]) << 24;
}

std::uint64_t get_u64(std::istream& is) {
  const std::uint64_t lo = get_u32(is);
  return lo | std::uint64_t(get_u32(is)) << 32;
}

float get_f32(std::istream& is) {
  return std::bit_cast<float>(get_u32(is));
}

double get_f64(std::istream& is) {
  return std::bit_cast<double>(get_u64(is));
}

std::string get_str(std::istream& is) {
  const std::uint32_t n = get_u32(is);
  if (n > (1u << 20)) throw FormatError("checkpoint: absurd string length");
  std::string s(n, '\0');
  if (n && !is.read(s.data(), n)) {
    throw FormatError("checkpoint: truncated string");
  }
  return s;
}

std::vector<double> softmax_rows_mean(const std::vector<float>& logits,
                                      std::size_t rows, std::size_t cols) {
  std::vector<double> mean(cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const float* row = logits.data() + r * cols;
    const double mx = *std::max_element(row, row + cols);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += std::exp(double(row[c]) - mx);
    for (std::size_t c = 0; c < cols; ++c) {
      mean[c] += std::exp(double(row[c]) - mx) / z;
    }
  }
  for (auto& m : mean) m /= double(rows);
  return mean;
}

}  // namespace

double lr_at(int epoch, const TrainConfig& cfg) {
  if (epoch < 0 || epoch >= cfg.epochs) {
    throw ArgumentError("lr_at: epoch " + std::to_string(epoch) +
                        " outside [0, " + std::to_string(cfg.epochs) + ")");
  }
  double lr = cfg.lr_initial;
  for (int k = 0; k < epoch / 100; ++k) lr /= 10.0;
  return lr;
}

Checkpoint snapshot(model::Acrnn<float>& net, const dsp::NormStats& stats,
                    int epoch) {
  Checkpoint ckpt;
  ckpt.config = net.config();
  ckpt.stats = stats;
  ckpt.epoch = epoch;
  for (const auto& p : net.params()) {
    ckpt.tensors.push_back({p.name, p.t.shape(), p.t.values()});
  }
  for (const auto& [name, buf] : net.state_buffers()) {
    ckpt.tensors.push_back({name, {buf->size()}, *buf});
  }
  return ckpt;
}

model::Acrnn<float> restore(const Checkpoint& ckpt) {
  model::Acrnn<float> net(ckpt.config);
  std::unordered_map<std::string, const NamedTensor*> by_name;
  for (const auto& t : ckpt.tensors) by_name[t.name] = &t;

  std::size_t used = 0;
  for (auto& p : net.params()) {
    const auto it = by_name.find(p.name);
    if (it == by_name.end()) {
      throw FormatError("checkpoint: missing tensor " + p.name);
    }
    if (it->second->values.size() != p.t.size()) {
      throw FormatError("checkpoint: size mismatch for " + p.name);
    }
    p.t.values() = it->second->values;
    ++used;
  }
  for (auto& [name, buf] : net.state_buffers()) {
    const auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw FormatError("checkpoint: missing tensor " + name);
    }
    if (it->second->values.size() != buf->size()) {
      throw FormatError("checkpoint: size mismatch for " + name);
    }
    *buf = it->second->values;
    ++used;
  }
  if (used != ckpt.tensors.size()) {
    throw FormatError("checkpoint: " +
                      std::to_string(ckpt.tensors.size() - used) +
                      " unused tensors");
  }
  return net;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os.write("ACRN", 4);
  put_u32(os, kCheckpointVersion);

  const auto& c = ckpt.config;
  put_u32(os, std::uint32_t(c.num_classes));
  put_str(os, model::attention_site_name(c.attention_site));
  put_str(os, model::cnn_attention_scaling_name(c.cnn_attention_scaling));
  put_u32(os, c.rnn_attention_mlp ? 1 : 0);
  put_f64(os, c.dropout_p);
  put_u32(os, std::uint32_t(c.gru_hidden));
  put_u32(os, std::uint32_t(c.attn_hidden));
  put_f64(os, c.width_mult);
  put_u64(os, c.seed);

  for (double m : ckpt.stats.mean) put_f64(os, m);
  for (double s : ckpt.stats.std) put_f64(os, s);
  put_u32(os, std::uint32_t(ckpt.epoch));

  put_u32(os, std::uint32_t(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    put_str(os, t.name);
    put_u32(os, std::uint32_t(t.dims.size()));
    for (auto d : t.dims) put_u32(os, std::uint32_t(d));
    for (float v : t.values) put_f32(os, v);
  }
  if (!os) throw IoError("write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::string(magic, 4) != "ACRN") {
    throw FormatError("checkpoint: bad magic in " + path);
  }
  const auto version = get_u32(is);
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " +
                      std::to_string(version));
  }

  Checkpoint ckpt;
  auto& c = ckpt.config;
  c.num_classes = get_u32(is);
  c.attention_site = model::parse_attention_site(get_str(is));
  c.cnn_attention_scaling = model::parse_cnn_attention_scaling(get_str(is));
  c.rnn_attention_mlp = get_u32(is) != 0;
  c.dropout_p = get_f64(is);
  c.gru_hidden = get_u32(is);
  c.attn_hidden = get_u32(is);
  c.width_mult = get_f64(is);
  c.seed = get_u64(is);

  for (double& m : ckpt.stats.mean) m = get_f64(is);
  for (double& s : ckpt.stats.std) s = get_f64(is);
  ckpt.epoch = int(get_u32(is));

  const auto count = get_u32(is);
  if (count > (1u << 16)) throw FormatError("checkpoint: absurd tensor count");
  ckpt.tensors.resize(count);
  for (auto& t : ckpt.tensors) {
    t.name = get_str(is);
    const auto rank = get_u32(is);
    if (rank > 8) throw FormatError("checkpoint: absurd rank for " + t.name);
    t.dims.resize(rank);
    std::size_t n = 1;
    for (auto& d : t.dims) {
      d = get_u32(is);
      n *= d;
    }
    if (n > (std::size_t(1) << 28)) {
      throw FormatError("checkpoint: absurd tensor size for " + t.name);
    }
    t.values.resize(n);
    for (float& v : t.values) v = get_f32(is);
  }
  return ckpt;
}

TrainResult train_fold(const std::vector<dsp::LogGtSegment>& train_segments,
                       const model::AcrnnConfig& mcfg,
                       const TrainConfig& cfg) {
  validate(cfg);
  if (train_segments.empty()) {
    throw ArgumentError("train_fold: no training segments");
  }
  const std::size_t C = mcfg.num_classes;
  for (const auto& s : train_segments) onehot(C, s.class_id);  // range check

  const dsp::NormStats stats = dsp::fit_norm(train_segments);
  model::Acrnn<float> net(mcfg);
  Rng rng(cfg.seed);
  net.init_weights(rng, float(cfg.init_std));
  ad::SgdNesterov<float> opt(&net.params(), float(cfg.momentum),
                             float(cfg.l2));

  TrainResult result;
  std::vector<std::size_t> order(train_segments.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at(epoch, cfg);
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t batches = 0;

    for (std::size_t off = 0; off < order.size();
         off += std::size_t(cfg.batch_size)) {
      const std::size_t take =
          std::min(order.size() - off, std::size_t(cfg.batch_size));
      std::vector<augment::LabeledSegment> batch;
      batch.reserve(take);
      for (std::size_t i = 0; i < take; ++i) {
        const auto& seg = train_segments[order[off + i]];
        batch.push_back({seg, onehot(C, seg.class_id)});
      }
      if (cfg.mixup.enabled) {
        batch = augment::build_mixup_batch(batch, cfg.mixup, rng);
      }

      std::vector<const dsp::LogGtSegment*> ptrs;
      ptrs.reserve(take);
      for (const auto& b : batch) ptrs.push_back(&b.features);

      try {
        ad::Tape<float> tape;
        auto x = model::batch_from_segments<float>(ptrs, stats);
        ad::Tensor<float> targets({take, C});
        for (std::size_t i = 0; i < take; ++i) {
          std::copy(batch[i].label.begin(), batch[i].label.end(),
                    targets.data() + i * C);
        }
        auto fwd = net.forward(tape, x, true, rng);
        auto loss = ad::cross_entropy(tape, fwd.logits, targets);
        const double value = loss.values()[0];
        if (!std::isfinite(value)) {
          throw NumericError("loss is not finite");
        }
        tape.backward(loss);
        opt.step(float(lr));
        opt.zero_grad();
        loss_sum += value;
        ++batches;
        if (cfg.verbose_batches) {
          std::fprintf(stderr, "epoch %d batch %zu loss %.6f\n", epoch,
                       batches - 1, value);
        }
      } catch (const NumericError& e) {
        throw NumericError("training diverged at epoch " +
                           std::to_string(epoch) + " batch " +
                           std::to_string(batches) + ": " + e.what());
      }
    }
    result.epoch_loss.push_back(loss_sum / double(batches));
    result.epoch_lr.push_back(lr);
  }

  result.checkpoint = snapshot(net, stats, cfg.epochs);
  return result;
}

std::vector<double> predict_clip(
    model::Acrnn<float>& net, const dsp::NormStats& stats,
    const std::vector<const dsp::LogGtSegment*>& segments) {
  if (segments.empty()) {
    throw ArgumentError("predict_clip: no segments");
  }
  ad::Tape<float> tape;
  ad::NoGradGuard<float> guard(tape);
  auto x = model::batch_from_segments<float>(segments, stats);
  Rng unused(0);
  auto fwd = net.forward(tape, x, false, unused);
  return softmax_rows_mean(fwd.logits.values(), segments.size(),
                           net.config().num_classes);
}

std::size_t argmax_class(const std::vector<double>& probs) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < probs.size(); ++i) {
    if (probs[i] > probs[best]) best = i;
  }
  return best;
}

std::vector<double> EvalReport::per_class_accuracy() const {
  std::vector<double> acc(num_classes, 0.0);
  for (std::size_t t = 0; t < num_classes; ++t) {
    std::size_t row = 0;
    for (std::size_t p = 0; p < num_classes; ++p) row += at(t, p);
    if (row > 0) acc[t] = double(at(t, t)) / double(row);
  }
  return acc;
}

EvalReport evaluate(model::Acrnn<float>& net, const dsp::NormStats& stats,
                    const std::vector<dsp::LogGtSegment>& test_segments) {
  if (test_segments.empty()) {
    throw ArgumentError("evaluate: empty test set");
  }
  const std::size_t C = net.config().num_classes;

  struct Group {
    std::string id;
    int class_id;
    std::vector<const dsp::LogGtSegment*> segs;
  };
  std::vector<Group> groups;
  std::unordered_map<std::string, std::size_t> index;
  for (const auto& seg : test_segments) {
    auto [it, fresh] = index.try_emplace(seg.clip_id, groups.size());
    if (fresh) {
      groups.push_back({seg.clip_id, seg.class_id, {}});
    } else if (groups[it->second].class_id != seg.class_id) {
      throw ArgumentError("evaluate: clip " + seg.clip_id +
                          " has conflicting class ids");
    }
    groups[it->second].segs.push_back(&seg);
  }

  EvalReport report;
  report.num_classes = C;
  report.confusion.assign(C * C, 0);
  std::size_t correct = 0;
  for (const auto& g : groups) {
    onehot(C, g.class_id);  // range check
    const auto probs = predict_clip(net, stats, g.segs);
    const auto pred = argmax_class(probs);
    report.confusion[std::size_t(g.class_id) * C + pred] += 1;
    if (pred == std::size_t(g.class_id)) ++correct;
    report.clips.push_back({g.id, g.class_id, int(pred)});
  }
  report.accuracy = double(correct) / double(groups.size());
  return report;
}

CvResult cross_validate(const std::vector<dsp::LogGtSegment>& segments,
                        const model::AcrnnConfig& mcfg,
                        const TrainConfig& cfg) {
  std::set<int> folds;
  for (const auto& s : segments) folds.insert(s.fold);
  if (folds.size() < 2) {
    throw ArgumentError("cross_validate: need at least 2 folds, got " +
                        std::to_string(folds.size()));
  }

  CvResult cv;
  for (int fold : folds) {
    std::vector<dsp::LogGtSegment> train_set, test_set;
    for (const auto& s : segments) {
      if (s.fold != fold) {
        train_set.push_back(s);
      } else if (!store::is_augmented_id(s.clip_id)) {
        test_set.push_back(s);
      }
    }
    if (test_set.empty()) {
      throw ArgumentError("cross_validate: fold " + std::to_string(fold) +
                          " has no original test clips");
    }
    TrainConfig fold_cfg = cfg;
    fold_cfg.seed = Rng::derive_seed(cfg.seed, std::uint64_t(fold));
    auto run = train_fold(train_set, mcfg, fold_cfg);
    auto net = restore(run.checkpoint);
    cv.reports.push_back(evaluate(net, run.checkpoint.stats, test_set));
    cv.runs.push_back(std::move(run));
    cv.fold_ids.push_back(fold);
  }
  double sum = 0.0;
  for (const auto& r : cv.reports) sum += r.accuracy;
  cv.mean_accuracy = sum / double(cv.reports.size());
  return cv;
}

namespace {

nlohmann::json report_json(const EvalReport& report) {
  nlohmann::json j;
  j["accuracy"] = report.accuracy;
  j["num_classes"] = report.num_classes;
  j["per_class_accuracy"] = report.per_class_accuracy();
  auto rows = nlohmann::json::array();
  for (std::size_t t = 0; t < report.num_classes; ++t) {
    auto row = nlohmann::json::array();
    for (std::size_t p = 0; p < report.num_classes; ++p) {
      row.push_back(report.at(t, p));
    }
    rows.push_back(row);
  }
  j["confusion"] = rows;
  return j;
}

void dump_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << j.dump(2) << "\n";
  if (!os) throw IoError("write failed for " + path);
}

}  // namespace

void write_metrics_json(const std::string& path, const EvalReport& report,
                        const std::vector<double>& loss_trace) {
  auto j = report_json(report);
  auto clips = nlohmann::json::array();
  for (const auto& c : report.clips) {
    clips.push_back({{"clip_id", c.clip_id},
                     {"true_class", c.true_class},
                     {"predicted", c.predicted}});
  }
  j["clips"] = clips;
  if (!loss_trace.empty()) j["loss_trace"] = loss_trace;
  dump_json(path, j);
}

void write_metrics_json(const std::string& path, const CvResult& cv) {
  nlohmann::json j;
  j["mean_accuracy"] = cv.mean_accuracy;
  auto folds = nlohmann::json::array();
  for (std::size_t i = 0; i < cv.reports.size(); ++i) {
    auto f = report_json(cv.reports[i]);
    f["fold"] = cv.fold_ids[i];
    f["loss_trace"] = cv.runs[i].epoch_loss;
    f["lr_trace"] = cv.runs[i].epoch_lr;
    folds.push_back(f);
  }
  j["folds"] = folds;
  dump_json(path, j);
}

void write_confusion_csv(const std::string& path, const EvalReport& report) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << "true\\predicted";
  for (std::size_t p = 0; p < report.num_classes; ++p) os << "," << p;
  os << "\n";
  for (std::size_t t = 0; t < report.num_classes; ++t) {
    os << t;
    for (std::size_t p = 0; p < report.num_classes; ++p) {
      os << "," << report.at(t, p);
    }
    os << "\n";
  }
  if (!os) throw IoError("write failed for " + path);
}

}  // namespace esc::train
