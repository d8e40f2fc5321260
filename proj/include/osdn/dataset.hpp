#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "osdn/rng.hpp"
#include "osdn/tensor.hpp"

namespace osdn {

/// A batch or whole partition: images [N,C,H,W] with pixels in [0,1] and
/// integer labels.
struct LabeledSet {
  Tensor x;
  std::vector<int> labels;

  int size() const { return x.numel() == 0 ? 0 : x.dim(0); }
};

LabeledSet subset(const LabeledSet& s, const std::vector<int>& indices);
LabeledSet concat(const LabeledSet& a, const LabeledSet& b);

enum class Partition { Train, Val, Test };

struct ManifestEntry {
  std::string source;  // relative path, or container offset as "@<index>"
  int class_id = 0;
  Partition partition = Partition::Train;
};

/// Deterministic index of a dataset: entries sorted by (class, source),
/// partitions assigned per class by a seeded shuffle.
struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  int image_h = 0, image_w = 0, image_c = 0;
  int num_classes = 0;
};

/// Raw dataset in memory, aligned with the manifest entries.
struct Dataset {
  DatasetManifest manifest;
  Tensor pixels;  // [N,C,H,W] in [0,1]

  LabeledSet partition(Partition p) const;
  LabeledSet partition_of_classes(Partition p, const std::vector<int>& classes,
                                  bool remap_labels) const;
};

struct IngestOptions {
  double train_frac = 0.70;
  double val_frac = 0.15;  // remainder is test
  uint64_t partition_seed = 7;
};

/// Reads a dataset root: either a flat binary container file, or a directory
/// with one subdirectory per class holding PGM/PPM images. Pixels are mapped
/// to [0,1]. Throws on unreadable files or dimension mismatches, naming the
/// offending path.
Dataset ingest(const std::filesystem::path& root, const IngestOptions& opts = {});

/// Writes the flat binary container (magic, count, H, W, C, raw 8-bit pixel
/// records, then int32 labels).
void write_container(const std::filesystem::path& path, const Tensor& pixels,
                     const std::vector<int>& labels);

struct ClassSplit {
  std::vector<int> known;
  std::vector<int> open;
};

/// n_splits distinct known/open class partitions, reproducible from the seed.
std::vector<ClassSplit> make_splits(int num_classes, int n_known, int n_splits, uint64_t seed);

/// Deterministic synthetic 10-class shape dataset used by the desk-scale
/// experiments. Renders size x size grayscale images, quantized to 8 bits.
Tensor render_shapes(int per_class, int size, uint64_t seed, std::vector<int>* labels);

/// Renders and writes the bundled dataset container.
void generate_synthetic_dataset(const std::filesystem::path& path, int per_class, int size,
                                uint64_t seed);

}  // namespace osdn
