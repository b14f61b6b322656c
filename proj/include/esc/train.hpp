#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "esc/acrnn.hpp"
#include "esc/augment.hpp"
#include "esc/dsp.hpp"

namespace esc::train {

struct TrainConfig {
  int epochs = 300;
  int batch_size = 64;
  double lr_initial = 0.01;  // divided by 10 every 100 epochs
  double momentum = 0.9;
  double l2 = 1e-4;
  double init_std = 0.05;
  std::uint64_t seed = 1;
  augment::MixupConfig mixup;
  bool verbose_batches = false;  // per-batch loss lines on stderr
};

// Piecewise-constant schedule; epoch must lie in [0, cfg.epochs).
double lr_at(int epoch, const TrainConfig& cfg);

struct NamedTensor {
  std::string name;
  std::vector<std::size_t> dims;
  std::vector<float> values;
};

struct Checkpoint {
  model::AcrnnConfig config;
  dsp::NormStats stats;
  int epoch = 0;
  std::vector<NamedTensor> tensors;  // parameters, then bn running stats
};

Checkpoint snapshot(model::Acrnn<float>& net, const dsp::NormStats& stats,
                    int epoch);

// Rebuilds the architecture from the stored config and copies every tensor
// back by name.
model::Acrnn<float> restore(const Checkpoint& ckpt);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<double> epoch_loss;  // mean cross-entropy per epoch
  std::vector<double> epoch_lr;
};

// Shuffled no-replacement batches (short final batch kept), optional mixup,
// Nesterov updates with L2 on multiplicative weights. NormStats are fitted
// on the given segments and stored in the checkpoint.
TrainResult train_fold(const std::vector<dsp::LogGtSegment>& train_segments,
                       const model::AcrnnConfig& mcfg, const TrainConfig& cfg);

// Mean of the per-segment softmax distributions.
std::vector<double> predict_clip(
    model::Acrnn<float>& net, const dsp::NormStats& stats,
    const std::vector<const dsp::LogGtSegment*>& segments);

// Argmax with ties resolved to the lowest class index.
std::size_t argmax_class(const std::vector<double>& probs);

struct ClipResult {
  std::string clip_id;
  int true_class = -1;
  int predicted = -1;
};

struct EvalReport {
  std::size_t num_classes = 0;
  double accuracy = 0.0;
  std::vector<std::size_t> confusion;  // row-major, [true * C + predicted]
  std::vector<ClipResult> clips;

  std::size_t at(std::size_t t, std::size_t p) const {
    return confusion[t * num_classes + p];
  }
  std::vector<double> per_class_accuracy() const;
};

// Groups segments by clip id (first-appearance order) and scores each clip.
EvalReport evaluate(model::Acrnn<float>& net, const dsp::NormStats& stats,
                    const std::vector<dsp::LogGtSegment>& test_segments);

struct CvResult {
  std::vector<int> fold_ids;
  std::vector<TrainResult> runs;    // parallel to fold_ids
  std::vector<EvalReport> reports;  // parallel to fold_ids
  double mean_accuracy = 0.0;
};

// Leave-one-fold-out over the distinct fold tags. Augmented segments
// (store::is_augmented_id) never enter a test split, and each round trains
// only on segments tagged with the remaining folds.
CvResult cross_validate(const std::vector<dsp::LogGtSegment>& segments,
                        const model::AcrnnConfig& mcfg,
                        const TrainConfig& cfg);

void write_metrics_json(const std::string& path, const EvalReport& report,
                        const std::vector<double>& loss_trace = {});
void write_metrics_json(const std::string& path, const CvResult& cv);
void write_confusion_csv(const std::string& path, const EvalReport& report);

}  // namespace esc::train
