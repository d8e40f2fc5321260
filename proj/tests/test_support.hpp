#pragma once

#include <unistd.h>

#include <filesystem>
#include <string>

#include "osdn/config.hpp"
#include "osdn/dataset.hpp"
#include "osdn/networks.hpp"

namespace osdn::testing {

/// Unique scratch directory under the system temp dir, removed on
/// destruction.
struct TempDir {
  std::filesystem::path path;

  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("osdn_" + tag + "_" + std::to_string(++counter) + "_" +
            std::to_string(static_cast<unsigned>(::getpid())));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

inline ArchConfig tiny_arch(int size = 8, int num_known = 3, bool norm = false,
                            bool denoise = true) {
  ArchConfig a;
  a.in_channels = 1;
  a.in_h = size;
  a.in_w = size;
  a.channels = {2, 3, 4, 5};
  a.denoise_after_block = {denoise, denoise, denoise, denoise};
  a.blocks_per_stage = 1;
  a.use_norm = norm;
  a.num_known = num_known;
  return a;
}

/// Down-scaled shape images: renders at 16x16 with the bundled renderer and
/// keeps only the first `num_classes` classes.
inline LabeledSet shape_set(int num_classes, int per_class, uint64_t seed) {
  std::vector<int> labels;
  const Tensor all = render_shapes(per_class, 16, seed, &labels);
  std::vector<int> idx;
  for (size_t i = 0; i < labels.size(); ++i)
    if (labels[i] < num_classes) idx.push_back(static_cast<int>(i));
  LabeledSet full{all, labels};
  return subset(full, idx);
}

/// Config for fast end-to-end runs on a generated container.
inline ExperimentConfig micro_config(const std::filesystem::path& container, uint64_t seed = 1) {
  ExperimentConfig cfg;
  cfg.dataset_root = container.string();
  cfg.seed = seed;
  cfg.n_known = 3;
  cfg.n_splits = 2;
  cfg.split_id = 0;
  cfg.arch = tiny_arch(16, 3, false, true);
  cfg.arch.channels = {4, 8, 12, 16};
  cfg.train.epochs = 15;
  cfg.train.batch_size = 12;
  cfg.train.adam.lr = 5e-3;
  cfg.eval_attack.family = AttackFamily::Fgsm;
  cfg.eval_attack.epsilon = 0.1;
  cfg.openmax.tail_size = 5;
  return cfg;
}

}  // namespace osdn::testing
