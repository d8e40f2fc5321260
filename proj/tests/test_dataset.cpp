#include <doctest.h>

#include <fstream>
#include <set>
#include <stdexcept>

#include "osdn/dataset.hpp"
#include "test_support.hpp"

using namespace osdn;
using osdn::testing::TempDir;

namespace {

void write_pgm(const std::filesystem::path& path, int w, int h, unsigned char value) {
  std::ofstream os(path, std::ios::binary);
  os << "P5\n" << w << " " << h << "\n255\n";
  for (int i = 0; i < w * h; ++i) os.put(static_cast<char>(value));
}

}  // namespace

TEST_CASE("ingest rejects an empty root instead of inventing a manifest") {
  TempDir dir("empty");
  CHECK_THROWS_WITH_AS(ingest(dir.path), doctest::Contains("no class"), std::runtime_error);
  CHECK_THROWS_AS(ingest(dir.path / "missing"), std::runtime_error);
}

TEST_CASE("ingest reads class directories of pnm images") {
  TempDir dir("classes");
  std::filesystem::create_directories(dir.path / "circle");
  std::filesystem::create_directories(dir.path / "square");
  for (int i = 0; i < 6; ++i)
    write_pgm(dir.path / "circle" / ("c" + std::to_string(i) + ".pgm"), 8, 8,
              static_cast<unsigned char>(i * 20));
  for (int i = 0; i < 4; ++i)
    write_pgm(dir.path / "square" / ("s" + std::to_string(i) + ".pgm"), 8, 8, 128);

  const Dataset ds = ingest(dir.path);
  CHECK(ds.manifest.entries.size() == 10);
  CHECK(ds.manifest.num_classes == 2);
  CHECK(ds.manifest.image_h == 8);
  CHECK(ds.manifest.image_c == 1);
  CHECK(ds.pixels.shape == Shape{10, 1, 8, 8});
  std::set<int> ids;
  for (const auto& e : ds.manifest.entries) ids.insert(e.class_id);
  CHECK(ids == std::set<int>{0, 1});
  // pixel mapping to [0,1]
  CHECK(ds.pixels[0] == doctest::Approx(0.0));

  SUBCASE("dimension mismatches name the offending file") {
    write_pgm(dir.path / "square" / "bad.pgm", 4, 4, 10);
    CHECK_THROWS_WITH_AS(ingest(dir.path), doctest::Contains("bad.pgm"), std::runtime_error);
  }
}

TEST_CASE("binary container round-trips pixel values exactly") {
  TempDir dir("container");
  std::vector<int> labels;
  const Tensor pixels = render_shapes(12, 16, 2024, &labels);
  const auto path = dir.path / "shapes.osdn";
  write_container(path, pixels, labels);
  const Dataset ds = ingest(path);
  CHECK(ds.manifest.num_classes == 10);
  CHECK(ds.manifest.entries.size() == labels.size());
  REQUIRE(ds.pixels.shape == pixels.shape);
  for (int i = 0; i < pixels.numel(); ++i) CHECK(ds.pixels[i] == pixels[i]);
  for (size_t i = 0; i < labels.size(); ++i)
    CHECK(ds.manifest.entries[i].class_id == labels[i]);

  SUBCASE("truncated containers are reported") {
    std::ofstream os(dir.path / "broken.osdn", std::ios::binary);
    os << "OSDNDS1\n";
    os.close();
    CHECK_THROWS_WITH_AS(ingest(dir.path / "broken.osdn"), doctest::Contains("truncated"),
                         std::runtime_error);
  }
}

TEST_CASE("partition assignment is deterministic and per class") {
  TempDir dir("parts");
  std::vector<int> labels;
  const Tensor pixels = render_shapes(20, 16, 7, &labels);
  const auto path = dir.path / "d.osdn";
  write_container(path, pixels, labels);
  IngestOptions opts;  // 70/15/15
  const Dataset a = ingest(path, opts);
  const Dataset b = ingest(path, opts);
  for (size_t i = 0; i < a.manifest.entries.size(); ++i)
    CHECK(a.manifest.entries[i].partition == b.manifest.entries[i].partition);

  for (int cls = 0; cls < 10; ++cls) {
    int train = 0, val = 0, test = 0;
    for (const auto& e : a.manifest.entries) {
      if (e.class_id != cls) continue;
      if (e.partition == Partition::Train) ++train;
      if (e.partition == Partition::Val) ++val;
      if (e.partition == Partition::Test) ++test;
    }
    CHECK(train == 14);
    CHECK(val == 3);
    CHECK(test == 3);
  }

  const LabeledSet train = a.partition_of_classes(Partition::Train, {2, 5}, true);
  CHECK(train.size() == 28);
  for (int l : train.labels) CHECK((l == 0 || l == 1));
  const LabeledSet open = a.partition_of_classes(Partition::Test, {7}, false);
  CHECK(open.size() == 3);
  CHECK(open.labels[0] == 7);
}

TEST_CASE("splits are reproducible, disjoint and distinct") {
  const auto splits = make_splits(10, 6, 3, 99);
  REQUIRE(splits.size() == 3);
  std::set<std::vector<int>> seen;
  for (const ClassSplit& s : splits) {
    CHECK(s.known.size() == 6);
    CHECK(s.open.size() == 4);
    std::set<int> all(s.known.begin(), s.known.end());
    for (int c : s.open) CHECK(all.insert(c).second);
    CHECK(all.size() == 10);
    CHECK(seen.insert(s.known).second);
  }
  const auto again = make_splits(10, 6, 3, 99);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(again[i].known == splits[i].known);
    CHECK(again[i].open == splits[i].open);
  }
  const auto other_seed = make_splits(10, 6, 3, 100);
  bool any_difference = false;
  for (size_t i = 0; i < 3; ++i) any_difference |= other_seed[i].known != splits[i].known;
  CHECK(any_difference);

  // the 20-of-200 protocol shape
  const auto tiny_imagenet = make_splits(200, 20, 3, 7);
  for (const ClassSplit& s : tiny_imagenet) {
    CHECK(s.known.size() == 20);
    CHECK(s.open.size() == 180);
  }
  CHECK_THROWS_AS(make_splits(10, 10, 1, 0), std::runtime_error);
}

TEST_CASE("the synthetic renderer is deterministic and 8-bit quantized") {
  std::vector<int> la, lb;
  const Tensor a = render_shapes(5, 16, 42, &la);
  const Tensor b = render_shapes(5, 16, 42, &lb);
  CHECK(la == lb);
  for (int i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);
  for (int i = 0; i < a.numel(); ++i) {
    const double scaled = a[i] * 255.0;
    CHECK(std::fabs(scaled - std::lround(scaled)) < 1e-9);
  }
  CHECK(a.shape == Shape{50, 1, 16, 16});
  // classes are visually distinct: mean images differ pairwise
  std::vector<Tensor> means(10, Tensor({16 * 16}));
  for (int cls = 0; cls < 10; ++cls)
    for (int k = 0; k < 5; ++k)
      for (int i = 0; i < 256; ++i)
        means[static_cast<size_t>(cls)][i] += a[(cls * 5 + k) * 256 + i] / 5.0;
  for (int p = 0; p < 10; ++p)
    for (int q = p + 1; q < 10; ++q)
      CHECK(max_abs_diff(means[static_cast<size_t>(p)], means[static_cast<size_t>(q)]) > 0.2);
}

TEST_CASE("subset and concat preserve sample alignment") {
  Rng rng(101);
  LabeledSet s;
  s.x = rng.uniform_tensor({5, 1, 2, 2}, 0, 1);
  s.labels = {0, 1, 2, 3, 4};
  const LabeledSet sub = subset(s, {4, 0, 2});
  CHECK(sub.labels == std::vector<int>{4, 0, 2});
  CHECK(sub.x[0] == s.x[16]);
  const LabeledSet joined = concat(sub, s);
  CHECK(joined.size() == 8);
  CHECK(joined.labels[3] == 0);
  CHECK_THROWS_AS(subset(s, {9}), std::runtime_error);
}
