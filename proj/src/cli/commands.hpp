#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>

#include "esc/acrnn.hpp"
#include "esc/augment.hpp"
#include "esc/train.hpp"

namespace esc::cli {

// Exit codes shared with the shell surface.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;   // unforeseen errors
inline constexpr int kExitArgument = 2;  // bad flags, ranges, clobber refusal
inline constexpr int kExitIo = 3;        // filesystem and file-format trouble
inline constexpr int kExitNumeric = 4;   // divergence, NaN

// Runs fn, mapping the library error taxonomy onto exit codes. Error text
// goes to err prefixed with "escnet: error:".
int run_mapped(const std::function<void()>& fn, std::ostream& err);

// Everything a command can pick up from --config, with flag overrides
// already applied. num_classes 0 means "infer from the data".
struct RunConfig {
  int sample_rate = 44100;
  double f_min = 20.0;
  int num_classes = 0;
  model::AcrnnConfig model;
  train::TrainConfig train;
  augment::AugmentPlan plan;
};

// Parses the config file (when given), validates the key set, and applies
// the --seed override to the training, augmentation, and init streams.
RunConfig load_run_config(const std::string& config_path, bool has_seed,
                          std::uint64_t seed);

struct PrepareOpts {
  std::string dataset;
  std::string out_store;
  std::string config_path;
  bool augment = false;
  int jobs = 1;
  bool force = false;
  bool has_seed = false;
  std::uint64_t seed = 0;
};

struct TrainOpts {
  std::string store;
  std::string out_dir;
  std::string config_path;
  int fold = -1;
  bool force = false;
  bool has_seed = false;
  std::uint64_t seed = 0;
};

struct CvOpts {
  std::string store;
  std::string out_dir;
  std::string config_path;
  bool ablation = false;
  bool force = false;
  bool has_seed = false;
  std::uint64_t seed = 0;
};

struct EvalOpts {
  std::string store;
  std::string checkpoint;
  std::string out_dir;  // optional; metrics files written only when set
  int fold = -1;
  bool force = false;
};

struct AttnVizOpts {
  std::string checkpoint;
  std::string clip;
  std::string out_dir;
  std::string config_path;
  bool force = false;
};

struct ComplexityOpts {
  std::string config_path;
  std::string out_csv;  // optional
};

struct AugmentOpts {
  std::string dataset;
  std::string out_dir;
  std::string config_path;
  bool force = false;
  bool has_seed = false;
  std::uint64_t seed = 0;
};

void cmd_prepare(const PrepareOpts& opts, std::ostream& out);
void cmd_train(const TrainOpts& opts, std::ostream& out);
void cmd_cv(const CvOpts& opts, std::ostream& out);
void cmd_eval(const EvalOpts& opts, std::ostream& out);
void cmd_attn_viz(const AttnVizOpts& opts, std::ostream& out);
void cmd_complexity(const ComplexityOpts& opts, std::ostream& out);
void cmd_augment(const AugmentOpts& opts, std::ostream& out);

}  // namespace esc::cli
