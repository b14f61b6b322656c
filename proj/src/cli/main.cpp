#include <cstdint>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "cli/commands.hpp"

namespace {

// --seed has to distinguish "absent" from "0", so it lands in a holder
// first and the presence flag is read back from CLI11.
struct SeedHolder {
  std::uint64_t value = 0;
  CLI::Option* opt = nullptr;
};

void add_seed(CLI::App* cmd, SeedHolder& seed) {
  seed.opt = cmd->add_option("--seed", seed.value,
                             "Override every configured random seed");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"escnet: environmental sound classification toolkit\n"
               "Gammatone log-spectrogram features, a convolutional recurrent\n"
               "network with frame-level attention, and the matching\n"
               "training/evaluation pipeline."};
  app.require_subcommand(1);

  esc::cli::PrepareOpts prep;
  SeedHolder prep_seed;
  CLI::App* prepare = app.add_subcommand(
      "prepare", "Extract features from a dataset into a feature store");
  prepare->add_option("dataset", prep.dataset, "Dataset root directory")
      ->required();
  prepare->add_option("--out", prep.out_store, "Feature store directory")
      ->required();
  prepare->add_option("--config", prep.config_path, "Experiment config file");
  prepare->add_flag("--augment", prep.augment,
                    "Also store time-stretch / pitch-shift copies");
  prepare->add_option("--jobs", prep.jobs, "Extraction worker threads");
  prepare->add_flag("--force", prep.force, "Rebuild an up-to-date store");
  add_seed(prepare, prep_seed);

  esc::cli::TrainOpts tr;
  SeedHolder tr_seed;
  CLI::App* train = app.add_subcommand(
      "train", "Train on all folds but one and evaluate on the held-out fold");
  train->add_option("store", tr.store, "Feature store")->required();
  train->add_option("--fold", tr.fold, "Held-out fold id")->required();
  train->add_option("--out", tr.out_dir, "Output directory")->required();
  train->add_option("--config", tr.config_path, "Experiment config file");
  train->add_flag("--force", tr.force, "Overwrite existing outputs");
  add_seed(train, tr_seed);

  esc::cli::CvOpts cv;
  SeedHolder cv_seed;
  CLI::App* cvcmd =
      app.add_subcommand("cv", "Cross-validate over every fold in the store");
  cvcmd->add_option("store", cv.store, "Feature store")->required();
  cvcmd->add_option("--out", cv.out_dir, "Output directory")->required();
  cvcmd->add_option("--config", cv.config_path, "Experiment config file");
  cvcmd->add_flag("--ablation", cv.ablation,
                  "Run the attention-placement grid and emit ablation.csv");
  cvcmd->add_flag("--force", cv.force, "Overwrite existing outputs");
  add_seed(cvcmd, cv_seed);

  esc::cli::EvalOpts ev;
  CLI::App* evcmd = app.add_subcommand(
      "eval", "Evaluate a saved checkpoint on a held-out fold");
  evcmd->add_option("store", ev.store, "Feature store")->required();
  evcmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")
      ->required();
  evcmd->add_option("--fold", ev.fold, "Held-out fold id")->required();
  evcmd->add_option("--out", ev.out_dir, "Optional report directory");
  evcmd->add_flag("--force", ev.force, "Overwrite existing outputs");

  esc::cli::AttnVizOpts viz;
  CLI::App* vizcmd = app.add_subcommand(
      "attn-viz", "Export attention weights and a heatmap for one clip");
  vizcmd->add_option("checkpoint", viz.checkpoint, "Checkpoint file")
      ->required();
  vizcmd->add_option("clip", viz.clip, "WAV clip to analyze")->required();
  vizcmd->add_option("--out", viz.out_dir, "Output directory")->required();
  vizcmd->add_option("--config", viz.config_path, "Experiment config file");
  vizcmd->add_flag("--force", viz.force, "Overwrite existing outputs");

  esc::cli::ComplexityOpts cx;
  CLI::App* cxcmd = app.add_subcommand(
      "complexity", "Print per-layer parameter and FLOP counts");
  cxcmd->add_option("--config", cx.config_path, "Experiment config file");
  cxcmd->add_option("--out", cx.out_csv, "Optional CSV output path");

  esc::cli::AugmentOpts aug;
  SeedHolder aug_seed;
  CLI::App* augcmd = app.add_subcommand(
      "augment", "Write augmented WAV copies of a dataset");
  augcmd->add_option("dataset", aug.dataset, "Dataset root directory")
      ->required();
  augcmd->add_option("--out", aug.out_dir, "Output dataset directory")
      ->required();
  augcmd->add_option("--config", aug.config_path, "Experiment config file");
  augcmd->add_flag("--force", aug.force, "Overwrite an existing manifest");
  add_seed(augcmd, aug_seed);

  // Training and evaluation are single-writer over model state; --jobs is
  // accepted everywhere for a uniform surface but only prepare fans out.
  int unused_jobs = 1;
  for (CLI::App* cmd : {train, cvcmd, evcmd, vizcmd, cxcmd, augcmd}) {
    cmd->add_option("--jobs", unused_jobs, "Accepted for interface symmetry")
        ->group("");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? esc::cli::kExitOk : esc::cli::kExitArgument;
  }

  auto apply_seed = [](const SeedHolder& s, bool& has, std::uint64_t& value) {
    has = s.opt && s.opt->count() > 0;
    if (has) value = s.value;
  };
  apply_seed(prep_seed, prep.has_seed, prep.seed);
  apply_seed(tr_seed, tr.has_seed, tr.seed);
  apply_seed(cv_seed, cv.has_seed, cv.seed);
  apply_seed(aug_seed, aug.has_seed, aug.seed);

  return esc::cli::run_mapped(
      [&]() {
        if (prepare->parsed()) return esc::cli::cmd_prepare(prep, std::cout);
        if (train->parsed()) return esc::cli::cmd_train(tr, std::cout);
        if (cvcmd->parsed()) return esc::cli::cmd_cv(cv, std::cout);
        if (evcmd->parsed()) return esc::cli::cmd_eval(ev, std::cout);
        if (vizcmd->parsed()) return esc::cli::cmd_attn_viz(viz, std::cout);
        if (cxcmd->parsed()) return esc::cli::cmd_complexity(cx, std::cout);
        if (augcmd->parsed()) return esc::cli::cmd_augment(aug, std::cout);
      },
      std::cerr);
}
