#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "osdn/metrics.hpp"
#include "osdn/training.hpp"

namespace osdn {

/// Everything needed to reproduce one run: data location and split, network
/// scale, loss/ablation toggles, attack and optimizer settings, OpenMax
/// configuration and the seed. Serialized as versioned JSON; the resolved
/// form (all defaults materialized) is written into every run directory.
struct ExperimentConfig {
  int version = 1;

  std::string dataset_root;  // container file or class-directory tree
  double train_frac = 0.70;
  double val_frac = 0.15;
  uint64_t partition_seed = 7;

  int n_known = 6;
  int n_splits = 3;
  int split_id = 0;
  std::vector<int> known_classes;  // explicit override of the seeded split
  std::vector<int> open_classes;

  uint64_t seed = 1;

  ArchConfig arch;
  TrainConfig train;
  AttackSpec eval_attack;
  OpenMaxConfig openmax;
  OpenScoreKind auc_score = OpenScoreKind::OpenProbability;

  void validate() const;

  static ExperimentConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
  std::string to_json_string() const;
  static ExperimentConfig from_json_string(const std::string& text);
};

}  // namespace osdn
