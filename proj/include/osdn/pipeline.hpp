#pragma once

#include <filesystem>

#include "osdn/config.hpp"

namespace osdn {

/// Fixed file names inside a run directory.
struct RunPaths {
  std::filesystem::path dir;
  std::filesystem::path config;       // config.resolved
  std::filesystem::path checkpoint;   // checkpoint.best
  std::filesystem::path calibration;  // calibration
  std::filesystem::path metrics;      // metrics
  std::filesystem::path log;          // log

  static RunPaths at(const std::filesystem::path& dir);
};

/// Known/open partitions of the configured dataset, known labels remapped
/// to 0..c-1.
struct PreparedData {
  ClassSplit split;
  LabeledSet train, val, test_known, test_open;
};

PreparedData prepare_data(const ExperimentConfig& cfg);

/// Stages. Each writes its artifacts under the run directory and can be run
/// separately as long as its prerequisites exist.
OsdnModel run_train(const ExperimentConfig& cfg, const std::filesystem::path& run_dir);
Calibration run_calibrate(const ExperimentConfig& cfg, const std::filesystem::path& run_dir);
MetricsReport run_eval(const ExperimentConfig& cfg, const std::filesystem::path& run_dir);
MetricsReport run_all(const ExperimentConfig& cfg, const std::filesystem::path& run_dir);

/// Evaluates the trained per-split run directories <base>/split<i> and
/// writes summary.csv with one row per split plus mean/std. Throws when a
/// split checkpoint is missing.
std::vector<MetricsReport> run_protocol(const ExperimentConfig& cfg,
                                        const std::filesystem::path& base_dir);

/// Per-split config used by the protocol: split i, seed base+i.
ExperimentConfig split_config(const ExperimentConfig& cfg, int split);

struct AblationVariant {
  std::string name;
  bool denoise = false;
  bool rec = false;
  bool ssd = false;
};

/// The six studied configurations, from plain adversarially-trained encoder
/// to the full model.
const std::vector<AblationVariant>& ablation_grid();

ExperimentConfig apply_ablation(ExperimentConfig cfg, const AblationVariant& v);

struct AblationResult {
  std::string name;
  double mean_auc = 0.0;
  double mean_accuracy = 0.0;
  std::vector<MetricsReport> per_seed;
};

/// Trains and evaluates the whole grid over n_seeds seeds (seed base+k,
/// split k) and writes ablation.csv under base_dir.
std::vector<AblationResult> run_ablation(const ExperimentConfig& cfg,
                                         const std::filesystem::path& base_dir, int n_seeds);

/// Latent features of the attacked test samples (known flag, label, then
/// coordinates), one CSV row per sample.
void dump_features(const ExperimentConfig& cfg, const std::filesystem::path& run_dir,
                   const std::filesystem::path& out_csv);

/// Clean / adversarial / reconstructed image triplets as PGM/PPM files.
void dump_reconstructions(const ExperimentConfig& cfg, const std::filesystem::path& run_dir,
                          const std::filesystem::path& out_dir, int per_set);

}  // namespace osdn
