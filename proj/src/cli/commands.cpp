#include "cli/commands.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>
#include <utility>
#include <vector>

#include "cli/config_file.hpp"
#include "esc/audio_io.hpp"
#include "esc/dsp.hpp"
#include "esc/errors.hpp"
#include "esc/feature_store.hpp"
#include "esc/rng.hpp"

namespace esc::cli {

namespace fs = std::filesystem;

namespace {

std::string pct(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", 100.0 * fraction);
  return buf;
}

fs::path segments_file(const std::string& store) {
  const fs::path p(store);
  return fs::is_directory(p) ? p / "segments.lgt" : p;
}

fs::path partial_marker(const fs::path& seg_file) {
  return seg_file.parent_path() / "partial";
}

std::vector<dsp::LogGtSegment> read_store(const std::string& store) {
  const fs::path segf = segments_file(store);
  if (fs::exists(partial_marker(segf))) {
    throw FormatError("feature store is incomplete (partial marker present), "
                      "rerun prepare: " + store);
  }
  if (!fs::exists(segf)) {
    throw IoError("feature store not found: " + segf.string());
  }
  auto segs = store::read_segments(segf.string());
  if (segs.empty()) throw ArgumentError("feature store is empty: " + store);
  return segs;
}

std::set<int> fold_set(const std::vector<dsp::LogGtSegment>& segs) {
  std::set<int> folds;
  for (const auto& s : segs) folds.insert(s.fold);
  return folds;
}

void require_fold(const std::set<int>& folds, int fold) {
  if (folds.count(fold)) return;
  std::string have;
  for (int f : folds) have += (have.empty() ? "" : ", ") + std::to_string(f);
  throw ArgumentError("fold " + std::to_string(fold) +
                      " is not in the store (folds present: " + have + ")");
}

std::size_t resolve_classes(const RunConfig& rc,
                            const std::vector<dsp::LogGtSegment>& segs) {
  int max_id = -1;
  for (const auto& s : segs) {
    if (s.class_id < 0) {
      throw FormatError("store contains an unlabeled segment (clip '" +
                        s.clip_id + "')");
    }
    max_id = std::max(max_id, s.class_id);
  }
  const auto inferred = std::size_t(max_id) + 1;
  if (rc.num_classes == 0) return std::max<std::size_t>(inferred, 2);
  if (std::size_t(rc.num_classes) < inferred) {
    throw ArgumentError("model.num_classes=" + std::to_string(rc.num_classes) +
                        " is smaller than the " + std::to_string(inferred) +
                        " classes present in the store");
  }
  return std::size_t(rc.num_classes);
}

void guard_output(const fs::path& p, bool force) {
  if (!force && fs::exists(p)) {
    throw ArgumentError("output exists: " + p.string() + " (use --force)");
  }
}

// Re-throws a worker exception with the failing clip named, keeping the
// error category so the exit code still reflects the cause.
[[noreturn]] void rethrow_named(std::exception_ptr ep, const std::string& name) {
  const std::string prefix = "clip " + name + ": ";
  try {
    std::rethrow_exception(ep);
  } catch (const ArgumentError& e) {
    throw ArgumentError(prefix + e.what());
  } catch (const EmptyInputError& e) {
    throw EmptyInputError(prefix + e.what());
  } catch (const FormatError& e) {
    throw FormatError(prefix + e.what());
  } catch (const IoError& e) {
    throw IoError(prefix + e.what());
  } catch (const NumericError& e) {
    throw NumericError(prefix + e.what());
  } catch (const std::exception& e) {
    throw IoError(prefix + e.what());
  }
}

dsp::GammatoneBank feature_bank(const RunConfig& rc) {
  const dsp::StftConfig stft;
  return dsp::make_gammatone_bank(128, stft.window_len / 2 + 1,
                                  rc.sample_rate, rc.f_min);
}

std::string sanitize_filename(std::string s) {
  for (char& c : s) {
    if (c == ':' || c == '#' || c == '/') c = '-';
  }
  return s;
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

// Fig-4-style panel: spectrogram (static channel, low bands at the bottom)
// above a per-step attention strip stretched to the segment width.
void write_attention_pgm(const fs::path& path, const dsp::LogGtSegment& seg,
                         const std::vector<float>& weights) {
  const int W = seg.frames, B = seg.bands;
  const int sep = 2, strip = 14;
  const int H = B + sep + strip;
  std::vector<unsigned char> img(std::size_t(H) * W, 255);

  float lo = std::numeric_limits<float>::infinity(), hi = -lo;
  for (int t = 0; t < W; ++t) {
    for (int b = 0; b < B; ++b) {
      lo = std::min(lo, seg.at(t, b, 0));
      hi = std::max(hi, seg.at(t, b, 0));
    }
  }
  const float span = hi - lo > 1e-12f ? hi - lo : 1.0f;
  for (int b = 0; b < B; ++b) {
    for (int t = 0; t < W; ++t) {
      const float v = (seg.at(t, b, 0) - lo) / span;
      img[std::size_t(B - 1 - b) * W + t] =
          static_cast<unsigned char>(std::lround(255.0f * v));
    }
  }

  float wmax = 0.0f;
  for (float w : weights) wmax = std::max(wmax, w);
  if (wmax <= 0.0f) wmax = 1.0f;
  const std::size_t steps = weights.size();
  for (int t = 0; t < W; ++t) {
    const std::size_t step = std::size_t(t) * steps / std::size_t(W);
    const auto g = static_cast<unsigned char>(
        std::lround(255.0f * weights[step] / wmax));
    for (int r = B + sep; r < H; ++r) img[std::size_t(r) * W + t] = g;
  }

  std::ostringstream os;
  os << "P5\n" << W << " " << H << "\n255\n";
  os.write(reinterpret_cast<const char*>(img.data()),
           std::streamsize(img.size()));
  write_text_file(path, os.str());
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "features.sample_rate", "features.f_min",
      "model.num_classes", "model.attention_site", "model.cnn_scaling",
      "model.rnn_mlp", "model.dropout", "model.width_mult",
      "model.gru_hidden", "model.attn_hidden",
      "train.epochs", "train.batch_size", "train.lr_initial",
      "train.momentum", "train.l2", "train.init_std", "train.seed",
      "train.mixup", "train.mixup_alpha", "train.verbose_batches",
      "augment.copies", "augment.stretch_lo", "augment.stretch_hi",
      "augment.pitch_lo", "augment.pitch_hi", "augment.seed",
  };
  return keys;
}

}  // namespace

int run_mapped(const std::function<void()>& fn, std::ostream& err) {
  try {
    fn();
    return kExitOk;
  } catch (const ArgumentError& e) {
    err << "escnet: error: " << e.what() << "\n";
    return kExitArgument;
  } catch (const ParseError& e) {
    err << "escnet: error: " << e.what() << "\n";
    return kExitArgument;
  } catch (const ShapeError& e) {
    err << "escnet: error: " << e.what() << "\n";
    return kExitArgument;
  } catch (const EmptyInputError& e) {
    err << "escnet: error: " << e.what() << "\n";
    return kExitArgument;
  } catch (const IoError& e) {
    err << "escnet: error: " << e.what() << "\n";
    return kExitIo;
  } catch (const FormatError& e) {
    err << "escnet: error: " << e.what() << "\n";
    return kExitIo;
  } catch (const NumericError& e) {
    err << "escnet: error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "escnet: error: " << e.what() << "\n";
    return kExitFailure;
  }
}

RunConfig load_run_config(const std::string& config_path, bool has_seed,
                          std::uint64_t seed) {
  KvConfig kv;
  if (!config_path.empty()) kv = parse_config_file(config_path);
  kv.require_known(known_keys());

  RunConfig rc;
  rc.sample_rate = int(kv.get_int("features.sample_rate", rc.sample_rate));
  if (rc.sample_rate <= 0) {
    throw ArgumentError("features.sample_rate must be positive");
  }
  rc.f_min = kv.get_real("features.f_min", rc.f_min);
  if (!(rc.f_min > 0.0)) throw ArgumentError("features.f_min must be positive");

  rc.num_classes = int(kv.get_int("model.num_classes", 0));
  if (rc.num_classes < 0 || rc.num_classes == 1) {
    throw ArgumentError("model.num_classes must be 0 (infer) or at least 2");
  }
  if (kv.has("model.attention_site")) {
    rc.model.attention_site =
        model::parse_attention_site(kv.get_str("model.attention_site", ""));
  }
  if (kv.has("model.cnn_scaling")) {
    rc.model.cnn_attention_scaling =
        model::parse_cnn_attention_scaling(kv.get_str("model.cnn_scaling", ""));
  }
  rc.model.rnn_attention_mlp =
      kv.get_bool("model.rnn_mlp", rc.model.rnn_attention_mlp);
  rc.model.dropout_p = kv.get_real("model.dropout", rc.model.dropout_p);
  rc.model.width_mult = kv.get_real("model.width_mult", rc.model.width_mult);
  rc.model.gru_hidden =
      std::size_t(kv.get_int("model.gru_hidden", long(rc.model.gru_hidden)));
  rc.model.attn_hidden =
      std::size_t(kv.get_int("model.attn_hidden", long(rc.model.attn_hidden)));

  rc.train.epochs = int(kv.get_int("train.epochs", rc.train.epochs));
  rc.train.batch_size = int(kv.get_int("train.batch_size", rc.train.batch_size));
  rc.train.lr_initial = kv.get_real("train.lr_initial", rc.train.lr_initial);
  rc.train.momentum = kv.get_real("train.momentum", rc.train.momentum);
  rc.train.l2 = kv.get_real("train.l2", rc.train.l2);
  rc.train.init_std = kv.get_real("train.init_std", rc.train.init_std);
  rc.train.seed =
      std::uint64_t(kv.get_int("train.seed", long(rc.train.seed)));
  rc.train.mixup.enabled = kv.get_bool("train.mixup", rc.train.mixup.enabled);
  rc.train.mixup.alpha = kv.get_real("train.mixup_alpha", rc.train.mixup.alpha);
  rc.train.verbose_batches =
      kv.get_bool("train.verbose_batches", rc.train.verbose_batches);

  rc.plan.copies_per_clip =
      int(kv.get_int("augment.copies", rc.plan.copies_per_clip));
  rc.plan.stretch_lo = kv.get_real("augment.stretch_lo", rc.plan.stretch_lo);
  rc.plan.stretch_hi = kv.get_real("augment.stretch_hi", rc.plan.stretch_hi);
  rc.plan.pitch_lo_semitones =
      kv.get_real("augment.pitch_lo", rc.plan.pitch_lo_semitones);
  rc.plan.pitch_hi_semitones =
      kv.get_real("augment.pitch_hi", rc.plan.pitch_hi_semitones);
  rc.plan.seed = std::uint64_t(kv.get_int("augment.seed", long(rc.plan.seed)));

  if (has_seed) {
    rc.train.seed = seed;
    rc.plan.seed = seed;
    rc.model.seed = seed;
  }
  return rc;
}

void cmd_prepare(const PrepareOpts& o, std::ostream& out) {
  if (o.dataset.empty() || o.out_store.empty()) {
    throw ArgumentError("prepare: dataset root and --out are required");
  }
  if (o.jobs < 1) throw ArgumentError("prepare: --jobs must be at least 1");
  const RunConfig rc = load_run_config(o.config_path, o.has_seed, o.seed);
  if (!fs::exists(o.dataset)) {
    throw IoError("dataset root not found: " + o.dataset);
  }

  fs::create_directories(o.out_store);
  const fs::path segf = fs::path(o.out_store) / "segments.lgt";
  const fs::path marker = partial_marker(segf);
  if (fs::exists(segf) && !fs::exists(marker) && !o.force) {
    out << "feature store up to date: " << o.out_store << "\n";
    return;
  }

  const audio::DatasetManifest manifest = audio::load_manifest(o.dataset);
  write_text_file(marker, "build in progress\n");
  std::error_code ec;
  fs::remove(segf, ec);

  const dsp::GammatoneBank bank = feature_bank(rc);
  const std::size_t n = manifest.clips.size();
  std::vector<std::vector<dsp::LogGtSegment>> per_clip(n);

  auto process = [&](std::size_t i) {
    const audio::ClipMeta& meta = manifest.clips[i];
    const std::string id = fs::path(meta.path).stem().string();
    const audio::AudioClip clip = audio::load_clip(meta.path, rc.sample_rate);
    auto got = dsp::extract_features(clip, bank, {});
    for (auto& s : got) {
      s.clip_id = id;
      s.class_id = meta.class_id;
      s.fold = meta.fold;
    }
    if (o.augment) {
      Rng rng(Rng::derive_seed(rc.plan.seed, i));
      for (const auto& copy : augment::augment_clip(clip, rc.plan, rng)) {
        std::vector<dsp::LogGtSegment> extra;
        try {
          extra = dsp::extract_features(copy.clip, bank, {});
        } catch (const EmptyInputError&) {
          continue;  // a sped-up copy can drop below one segment
        }
        for (auto& s : extra) {
          s.clip_id = id + "#" + copy.provenance;
          s.class_id = meta.class_id;
          s.fold = meta.fold;
        }
        got.insert(got.end(), std::make_move_iterator(extra.begin()),
                   std::make_move_iterator(extra.end()));
      }
    }
    per_clip[i] = std::move(got);
  };

  std::atomic<std::size_t> cursor{0};
  std::atomic<bool> failed{false};
  std::mutex mu;
  std::exception_ptr first_error;
  std::string failed_clip;
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = cursor.fetch_add(1);
      if (i >= n || failed.load()) break;
      try {
        process(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!first_error) {
          first_error = std::current_exception();
          failed_clip = manifest.clips[i].path;
        }
        failed.store(true);
      }
    }
  };
  const auto jobs = std::max<std::size_t>(
      1, std::min<std::size_t>(std::size_t(o.jobs), n == 0 ? 1 : n));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(jobs);
    for (std::size_t t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failed.load()) {
    std::ofstream m(marker, std::ios::app);
    m << "failed on clip: " << failed_clip << "\n";
    rethrow_named(first_error, failed_clip);
  }

  std::vector<dsp::LogGtSegment> all;
  std::map<int, std::pair<std::size_t, std::size_t>> by_fold;
  for (auto& clip_segs : per_clip) {
    for (auto& s : clip_segs) {
      auto& count = by_fold[s.fold];
      ++count.first;
      if (store::is_augmented_id(s.clip_id)) ++count.second;
      all.push_back(std::move(s));
    }
  }
  store::write_segments(segf.string(), all);
  fs::remove(marker);

  out << "prepared " << all.size() << " segments from " << n << " clips -> "
      << o.out_store << "\n";
  for (const auto& [fold, count] : by_fold) {
    out << "  fold " << fold << ": " << count.first << " segments";
    if (o.augment) out << " (" << count.second << " from augmented copies)";
    out << "\n";
  }
}

void cmd_train(const TrainOpts& o, std::ostream& out) {
  if (o.store.empty() || o.out_dir.empty()) {
    throw ArgumentError("train: store and --out are required");
  }
  if (o.fold < 0) throw ArgumentError("train: --fold is required");
  const RunConfig rc = load_run_config(o.config_path, o.has_seed, o.seed);
  const auto segs = read_store(o.store);
  const auto folds = fold_set(segs);
  require_fold(folds, o.fold);
  if (folds.size() < 2) {
    throw ArgumentError("train: store has a single fold, nothing to train on");
  }

  model::AcrnnConfig mcfg = rc.model;
  mcfg.num_classes = resolve_classes(rc, segs);
  std::vector<dsp::LogGtSegment> train_segs, test_segs;
  for (const auto& s : segs) {
    if (s.fold != o.fold) {
      train_segs.push_back(s);
    } else if (!store::is_augmented_id(s.clip_id)) {
      test_segs.push_back(s);
    }
  }
  if (test_segs.empty()) {
    throw ArgumentError("train: fold " + std::to_string(o.fold) +
                        " has no test clips");
  }

  fs::create_directories(o.out_dir);
  const fs::path ckpt_path = fs::path(o.out_dir) / "checkpoint.acrn";
  const fs::path metrics_path = fs::path(o.out_dir) / "metrics.json";
  const fs::path confusion_path = fs::path(o.out_dir) / "confusion.csv";
  guard_output(ckpt_path, o.force);
  guard_output(metrics_path, o.force);
  guard_output(confusion_path, o.force);

  const train::TrainResult res = train::train_fold(train_segs, mcfg, rc.train);
  model::Acrnn<float> net = train::restore(res.checkpoint);
  const train::EvalReport report =
      train::evaluate(net, res.checkpoint.stats, test_segs);

  train::save_checkpoint(ckpt_path.string(), res.checkpoint);
  train::write_metrics_json(metrics_path.string(), report, res.epoch_loss);
  train::write_confusion_csv(confusion_path.string(), report);

  out << "fold " << o.fold << ": trained " << rc.train.epochs
      << " epochs, final loss "
      << (res.epoch_loss.empty() ? 0.0 : res.epoch_loss.back())
      << ", test accuracy " << pct(report.accuracy) << " over "
      << report.clips.size() << " clips\n";
  out << "wrote " << ckpt_path.string() << "\n";
}

void cmd_cv(const CvOpts& o, std::ostream& out) {
  if (o.store.empty() || o.out_dir.empty()) {
    throw ArgumentError("cv: store and --out are required");
  }
  const RunConfig rc = load_run_config(o.config_path, o.has_seed, o.seed);
  const auto segs = read_store(o.store);
  model::AcrnnConfig base = rc.model;
  base.num_classes = resolve_classes(rc, segs);
  fs::create_directories(o.out_dir);

  if (!o.ablation) {
    const fs::path metrics_path = fs::path(o.out_dir) / "cv_metrics.json";
    guard_output(metrics_path, o.force);
    const train::CvResult cv = train::cross_validate(segs, base, rc.train);
    for (std::size_t i = 0; i < cv.fold_ids.size(); ++i) {
      guard_output(fs::path(o.out_dir) /
                       ("fold" + std::to_string(cv.fold_ids[i]) +
                        "_confusion.csv"),
                   o.force);
    }
    train::write_metrics_json(metrics_path.string(), cv);
    for (std::size_t i = 0; i < cv.fold_ids.size(); ++i) {
      const fs::path p = fs::path(o.out_dir) /
                         ("fold" + std::to_string(cv.fold_ids[i]) +
                          "_confusion.csv");
      train::write_confusion_csv(p.string(), cv.reports[i]);
      out << "fold " << cv.fold_ids[i] << ": "
          << pct(cv.reports[i].accuracy) << " over "
          << cv.reports[i].clips.size() << " clips\n";
    }
    out << "mean accuracy: " << pct(cv.mean_accuracy) << "\n";
    return;
  }

  const fs::path grid_path = fs::path(o.out_dir) / "ablation.csv";
  guard_output(grid_path, o.force);
  std::vector<std::pair<std::string, model::AcrnnConfig>> grid;
  {
    model::AcrnnConfig c = base;
    c.attention_site = model::AttentionSite::none;
    grid.emplace_back("no attention", c);
    for (const auto site : {model::AttentionSite::l2, model::AttentionSite::l4,
                            model::AttentionSite::l6, model::AttentionSite::l8}) {
      for (const auto scaling : {model::CnnAttentionScaling::softmax,
                                 model::CnnAttentionScaling::sigmoid}) {
        c = base;
        c.attention_site = site;
        c.cnn_attention_scaling = scaling;
        grid.emplace_back(std::string("attention at ") +
                              model::attention_site_name(site) + " (" +
                              model::cnn_attention_scaling_name(scaling) + ")",
                          c);
      }
    }
    c = base;
    c.attention_site = model::AttentionSite::l10;
    grid.emplace_back("attention at l10", c);
  }

  std::ostringstream csv;
  bool header_done = false;
  for (const auto& [label, mcfg] : grid) {
    const train::CvResult cv = train::cross_validate(segs, mcfg, rc.train);
    if (!header_done) {
      csv << "setting,mean_accuracy";
      for (int f : cv.fold_ids) csv << ",fold_" << f;
      csv << "\n";
      header_done = true;
    }
    char num[32];
    std::snprintf(num, sizeof num, "%.4f", cv.mean_accuracy);
    csv << label << "," << num;
    for (const auto& report : cv.reports) {
      std::snprintf(num, sizeof num, "%.4f", report.accuracy);
      csv << "," << num;
    }
    csv << "\n";
    out << label << ": mean " << pct(cv.mean_accuracy) << "\n";
  }
  write_text_file(grid_path, csv.str());
  out << "wrote " << grid_path.string() << "\n";
}

void cmd_eval(const EvalOpts& o, std::ostream& out) {
  if (o.store.empty() || o.checkpoint.empty()) {
    throw ArgumentError("eval: store and --checkpoint are required");
  }
  if (o.fold < 0) throw ArgumentError("eval: --fold is required");
  const train::Checkpoint ckpt = train::load_checkpoint(o.checkpoint);
  const auto segs = read_store(o.store);
  require_fold(fold_set(segs), o.fold);

  std::vector<dsp::LogGtSegment> test_segs;
  for (const auto& s : segs) {
    if (s.fold == o.fold && !store::is_augmented_id(s.clip_id)) {
      test_segs.push_back(s);
    }
  }
  if (test_segs.empty()) {
    throw ArgumentError("eval: fold " + std::to_string(o.fold) +
                        " has no test clips");
  }

  model::Acrnn<float> net = train::restore(ckpt);
  const train::EvalReport report = train::evaluate(net, ckpt.stats, test_segs);
  out << "fold " << o.fold << ": accuracy " << pct(report.accuracy)
      << " over " << report.clips.size() << " clips\n";

  if (!o.out_dir.empty()) {
    fs::create_directories(o.out_dir);
    const fs::path metrics_path = fs::path(o.out_dir) / "metrics.json";
    const fs::path confusion_path = fs::path(o.out_dir) / "confusion.csv";
    guard_output(metrics_path, o.force);
    guard_output(confusion_path, o.force);
    train::write_metrics_json(metrics_path.string(), report);
    train::write_confusion_csv(confusion_path.string(), report);
    out << "wrote " << metrics_path.string() << "\n";
  }
}

void cmd_attn_viz(const AttnVizOpts& o, std::ostream& out) {
  if (o.checkpoint.empty() || o.clip.empty() || o.out_dir.empty()) {
    throw ArgumentError("attn-viz: checkpoint, clip, and --out are required");
  }
  const train::Checkpoint ckpt = train::load_checkpoint(o.checkpoint);
  if (ckpt.config.attention_site == model::AttentionSite::none) {
    throw ArgumentError(
        "attn-viz: checkpoint '" + o.checkpoint +
        "' was trained without an attention stage, so there are no "
        "attention weights to visualize; train with model.attention_site "
        "set to l2/l4/l6/l8/l10");
  }
  const RunConfig rc = load_run_config(o.config_path, false, 0);
  const audio::AudioClip clip = audio::load_clip(o.clip, rc.sample_rate);
  const dsp::GammatoneBank bank = feature_bank(rc);
  const auto segs = dsp::extract_features(clip, bank, {});
  if (segs.empty()) {
    throw ArgumentError("attn-viz: clip is shorter than one feature segment: " +
                        o.clip);
  }

  model::Acrnn<float> net = train::restore(ckpt);
  fs::create_directories(o.out_dir);
  const fs::path csv_path = fs::path(o.out_dir) / "attention.csv";
  guard_output(csv_path, o.force);

  std::ostringstream csv;
  csv << "segment,step,weight\n";
  for (std::size_t k = 0; k < segs.size(); ++k) {
    ad::Tape<float> tape;
    Rng rng(0);
    const auto x = model::batch_from_segments<float>({&segs[k]}, ckpt.stats);
    const auto fw = net.forward(tape, x, false, rng);
    char num[32];
    for (std::size_t t = 0; t < fw.attention_steps; ++t) {
      std::snprintf(num, sizeof num, "%.9g", double(fw.attention[t]));
      csv << k << "," << t << "," << num << "\n";
    }
    const fs::path pgm_path =
        fs::path(o.out_dir) / ("attention_seg" + std::to_string(k) + ".pgm");
    guard_output(pgm_path, o.force);
    write_attention_pgm(pgm_path, segs[k],
                        std::vector<float>(fw.attention.begin(),
                                           fw.attention.end()));
  }
  write_text_file(csv_path, csv.str());
  out << "wrote " << csv_path.string() << " and " << segs.size()
      << " heatmap(s) ("
      << model::attention_site_name(ckpt.config.attention_site)
      << " attention)\n";
}

void cmd_complexity(const ComplexityOpts& o, std::ostream& out) {
  const RunConfig rc = load_run_config(o.config_path, false, 0);
  model::AcrnnConfig mcfg = rc.model;
  mcfg.num_classes = rc.num_classes > 0 ? std::size_t(rc.num_classes) : 50;
  const model::Acrnn<float> net(mcfg);
  const auto rows = net.complexity_rows();
  const auto cx = net.count_flops();

  char line[128];
  out << "attention site: "
      << model::attention_site_name(mcfg.attention_site) << "\n";
  std::snprintf(line, sizeof line, "%-10s %14s %16s", "layer", "params",
                "flops");
  out << line << "\n";
  std::size_t sum_params = 0, sum_flops = 0;
  for (const auto& row : rows) {
    std::snprintf(line, sizeof line, "%-10s %14zu %16zu", row.name.c_str(),
                  row.params, row.flops);
    out << line << "\n";
    sum_params += row.params;
    sum_flops += row.flops;
  }
  std::snprintf(line, sizeof line, "%-10s %14zu %16zu", "total", sum_params,
                sum_flops);
  out << line << "\n";
  std::snprintf(line, sizeof line,
                "total: %.2f M params, %.2f M flops (one 128-frame segment)",
                double(sum_params) / 1e6, double(sum_flops) / 1e6);
  out << line << "\n";

  if (mcfg.attention_site != model::AttentionSite::none) {
    model::AcrnnConfig plain = mcfg;
    plain.attention_site = model::AttentionSite::none;
    const std::size_t delta =
        net.count_params() - model::Acrnn<float>(plain).count_params();
    std::snprintf(line, sizeof line,
                  "attention: +%zu params, %zu flops (%.2f%% of total)", delta,
                  cx.attention_flops,
                  100.0 * double(cx.attention_flops) / double(cx.flops));
    out << line << "\n";
  }
  out << "published full-scale reference: 3.81 M params, 9.18 M FLOPs with "
         "attention at l10 (9.17 M without); its FLOP count uses coarser "
         "conventions than the per-op tally above\n";

  if (!o.out_csv.empty()) {
    std::ostringstream csv;
    csv << "layer,params,flops\n";
    for (const auto& row : rows) {
      csv << row.name << "," << row.params << "," << row.flops << "\n";
    }
    csv << "total," << sum_params << "," << sum_flops << "\n";
    write_text_file(o.out_csv, csv.str());
    out << "wrote " << o.out_csv << "\n";
  }
}

void cmd_augment(const AugmentOpts& o, std::ostream& out) {
  if (o.dataset.empty() || o.out_dir.empty()) {
    throw ArgumentError("augment: dataset root and --out are required");
  }
  const RunConfig rc = load_run_config(o.config_path, o.has_seed, o.seed);
  if (!fs::exists(o.dataset)) {
    throw IoError("dataset root not found: " + o.dataset);
  }
  const audio::DatasetManifest manifest = audio::load_manifest(o.dataset);

  const fs::path audio_dir = fs::path(o.out_dir) / "audio";
  const fs::path meta_dir = fs::path(o.out_dir) / "meta";
  const fs::path csv_path = meta_dir / "esc50.csv";
  guard_output(csv_path, o.force);
  fs::create_directories(audio_dir);
  fs::create_directories(meta_dir);

  std::ostringstream csv;
  csv << "filename,fold,target,category\n";
  std::size_t total = 0;
  for (std::size_t i = 0; i < manifest.clips.size(); ++i) {
    const audio::ClipMeta& meta = manifest.clips[i];
    const audio::AudioClip clip = audio::load_clip(meta.path, rc.sample_rate);
    Rng rng(Rng::derive_seed(rc.plan.seed, i));
    const std::string stem = fs::path(meta.path).stem().string();
    for (const auto& copy : augment::augment_clip(clip, rc.plan, rng)) {
      const std::string name =
          stem + "__" + sanitize_filename(copy.provenance) + ".wav";
      audio::write_wav((audio_dir / name).string(), copy.clip.samples,
                       copy.clip.sample_rate_hz, audio::WavEncoding::float32);
      csv << name << "," << meta.fold << "," << meta.class_id << ","
          << meta.class_name << "\n";
      ++total;
    }
  }
  write_text_file(csv_path, csv.str());
  out << "wrote " << total << " augmented clips -> " << o.out_dir << "\n";
}

}  // namespace esc::cli
