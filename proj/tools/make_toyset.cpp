// Writes the four-class synthetic benchmark dataset (tones, noise bursts,
// chirps, amplitude-modulated noise) in the same layout real datasets use,
// so the escnet pipeline can run end to end without any downloads.
#include <iostream>

#include "CLI11.hpp"
#include "cli/commands.hpp"
#include "esc/toyset.hpp"

int main(int argc, char** argv) {
  CLI::App app{"make_toyset: generate the synthetic benchmark dataset"};
  esc::toyset::ToyConfig cfg;
  std::string out;
  app.add_option("--out", out, "Dataset root to create")->required();
  app.add_option("--clips-per-class", cfg.clips_per_class,
                 "Clips per class (default 40)");
  app.add_option("--folds", cfg.num_folds, "Fold count (default 2)");
  app.add_option("--seed", cfg.seed, "Generation seed");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? esc::cli::kExitOk : esc::cli::kExitArgument;
  }
  return esc::cli::run_mapped(
      [&]() {
        esc::toyset::write_dataset(out, cfg);
        std::cout << "wrote " << esc::toyset::kNumClasses * cfg.clips_per_class
                  << " clips (" << esc::toyset::kNumClasses << " classes, "
                  << cfg.num_folds << " folds) -> " << out << "\n";
      },
      std::cerr);
}
