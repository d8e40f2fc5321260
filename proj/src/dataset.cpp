#include "osdn/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>

namespace osdn {

namespace fs = std::filesystem;

LabeledSet subset(const LabeledSet& s, const std::vector<int>& indices) {
  require(s.size() > 0, "subset: empty set");
  const int per = s.x.numel() / s.size();
  Shape shape = s.x.shape;
  shape[0] = static_cast<int>(indices.size());
  LabeledSet out;
  out.x = Tensor(shape);
  out.labels.reserve(indices.size());
  for (size_t i = 0; i < indices.size(); ++i) {
    const int src = indices[i];
    require(src >= 0 && src < s.size(), "subset: index out of range");
    std::copy_n(s.x.data() + src * per, per, out.x.data() + static_cast<int>(i) * per);
    out.labels.push_back(s.labels[static_cast<size_t>(src)]);
  }
  return out;
}

LabeledSet concat(const LabeledSet& a, const LabeledSet& b) {
  if (a.size() == 0) return b;
  if (b.size() == 0) return a;
  Shape sa = a.x.shape, sb = b.x.shape;
  require(std::equal(sa.begin() + 1, sa.end(), sb.begin() + 1, sb.end()),
          "concat: per-sample shapes differ");
  Shape shape = sa;
  shape[0] = a.size() + b.size();
  LabeledSet out;
  out.x = Tensor(shape);
  std::copy_n(a.x.data(), a.x.numel(), out.x.data());
  std::copy_n(b.x.data(), b.x.numel(), out.x.data() + a.x.numel());
  out.labels = a.labels;
  out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
  return out;
}

LabeledSet Dataset::partition(Partition p) const {
  std::vector<int> classes;
  for (int c = 0; c < manifest.num_classes; ++c) classes.push_back(c);
  return partition_of_classes(p, classes, false);
}

LabeledSet Dataset::partition_of_classes(Partition p, const std::vector<int>& classes,
                                         bool remap_labels) const {
  std::map<int, int> remap;
  for (size_t i = 0; i < classes.size(); ++i) remap[classes[i]] = static_cast<int>(i);
  std::vector<int> idx;
  std::vector<int> labels;
  for (size_t i = 0; i < manifest.entries.size(); ++i) {
    const ManifestEntry& e = manifest.entries[i];
    if (e.partition != p) continue;
    auto it = remap.find(e.class_id);
    if (it == remap.end()) continue;
    idx.push_back(static_cast<int>(i));
    labels.push_back(remap_labels ? it->second : e.class_id);
  }
  LabeledSet all{pixels, std::vector<int>(static_cast<size_t>(pixels.dim(0)), 0)};
  LabeledSet out = subset(all, idx);
  out.labels = std::move(labels);
  return out;
}

namespace {

constexpr char kContainerMagic[8] = {'O', 'S', 'D', 'N', 'D', 'S', '1', '\n'};

uint32_t read_u32(std::istream& is, const std::string& path) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  require(is.good(), "dataset: truncated container " + path);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void write_u32(std::ostream& os, uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                              static_cast<unsigned char>((v >> 8) & 0xff),
                              static_cast<unsigned char>((v >> 16) & 0xff),
                              static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

void assign_partitions(DatasetManifest& manifest, const IngestOptions& opts) {
  require(opts.train_frac > 0.0 && opts.val_frac >= 0.0 &&
              opts.train_frac + opts.val_frac < 1.0 + 1e-12,
          "dataset: invalid partition fractions");
  std::map<int, std::vector<size_t>> per_class;
  for (size_t i = 0; i < manifest.entries.size(); ++i)
    per_class[manifest.entries[i].class_id].push_back(i);
  Rng rng(opts.partition_seed);
  for (auto& [cls, idx] : per_class) {
    Rng class_rng = rng.fork(static_cast<uint64_t>(cls));
    class_rng.shuffle(idx);
    const size_t n = idx.size();
    const size_t n_train = static_cast<size_t>(std::floor(opts.train_frac * n));
    const size_t n_val = static_cast<size_t>(std::floor(opts.val_frac * n));
    for (size_t k = 0; k < n; ++k) {
      Partition p = Partition::Test;
      if (k < n_train)
        p = Partition::Train;
      else if (k < n_train + n_val)
        p = Partition::Val;
      manifest.entries[idx[k]].partition = p;
    }
  }
}

Dataset ingest_container(const fs::path& path, const IngestOptions& opts) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), "dataset: cannot read " + path.string());
  char magic[8];
  is.read(magic, 8);
  require(is.good() && std::equal(magic, magic + 8, kContainerMagic),
          "dataset: bad container magic in " + path.string());
  const uint32_t count = read_u32(is, path.string());
  const uint32_t h = read_u32(is, path.string());
  const uint32_t w = read_u32(is, path.string());
  const uint32_t c = read_u32(is, path.string());
  require(count > 0, "dataset: empty container " + path.string());
  require(h >= 1 && w >= 1 && c >= 1 && c <= 4, "dataset: bad dims in " + path.string());

  Dataset ds;
  ds.manifest.image_h = static_cast<int>(h);
  ds.manifest.image_w = static_cast<int>(w);
  ds.manifest.image_c = static_cast<int>(c);
  const size_t per = static_cast<size_t>(h) * w * c;
  std::vector<unsigned char> raw(per * count);
  is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  require(is.good(), "dataset: truncated pixels in " + path.string());
  std::vector<int> labels(count);
  for (uint32_t i = 0; i < count; ++i) labels[i] = static_cast<int>(read_u32(is, path.string()));

  ds.pixels = Tensor({static_cast<int>(count), static_cast<int>(c), static_cast<int>(h),
                      static_cast<int>(w)});
  for (size_t i = 0; i < raw.size(); ++i) ds.pixels[static_cast<int>(i)] = raw[i] / 255.0;

  int max_label = 0;
  for (uint32_t i = 0; i < count; ++i) {
    max_label = std::max(max_label, labels[i]);
    ManifestEntry e;
    e.source = "@" + std::to_string(i);
    e.class_id = labels[i];
    ds.manifest.entries.push_back(e);
  }
  ds.manifest.num_classes = max_label + 1;
  assign_partitions(ds.manifest, opts);
  return ds;
}

// Minimal PNM reader: P2/P5 grayscale, P3/P6 color, maxval 255.
void read_pnm(const fs::path& path, std::vector<unsigned char>& out, int& h, int& w, int& c) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), "dataset: unreadable file " + path.string());
  auto next_token = [&]() {
    std::string tok;
    while (is >> tok) {
      if (tok[0] == '#') {
        std::string rest;
        std::getline(is, rest);
        continue;
      }
      return tok;
    }
    throw std::runtime_error("dataset: truncated header in " + path.string());
  };
  const std::string magic = next_token();
  require(magic == "P2" || magic == "P3" || magic == "P5" || magic == "P6",
          "dataset: unsupported image format '" + magic + "' in " + path.string());
  c = (magic == "P3" || magic == "P6") ? 3 : 1;
  w = std::stoi(next_token());
  h = std::stoi(next_token());
  const int maxval = std::stoi(next_token());
  require(maxval == 255, "dataset: expected 8-bit maxval in " + path.string());
  const size_t n = static_cast<size_t>(h) * w * c;
  out.resize(n);
  if (magic == "P5" || magic == "P6") {
    is.get();  // single whitespace after maxval
    is.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(n));
    require(is.gcount() == static_cast<std::streamsize>(n),
            "dataset: truncated pixel data in " + path.string());
  } else {
    for (size_t i = 0; i < n; ++i) {
      int v = 0;
      require(static_cast<bool>(is >> v), "dataset: truncated pixel data in " + path.string());
      out[i] = static_cast<unsigned char>(v);
    }
  }
}

Dataset ingest_directory(const fs::path& root, const IngestOptions& opts) {
  std::vector<std::string> class_names;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory()) class_names.push_back(entry.path().filename().string());
  require(!class_names.empty(), "dataset: no class subdirectories under " + root.string());
  std::sort(class_names.begin(), class_names.end());

  Dataset ds;
  std::vector<std::vector<unsigned char>> images;
  for (size_t cls = 0; cls < class_names.size(); ++cls) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(root / class_names[cls]))
      if (entry.is_regular_file()) files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const fs::path& f : files) {
      int h = 0, w = 0, c = 0;
      std::vector<unsigned char> raw;
      read_pnm(f, raw, h, w, c);
      if (ds.manifest.image_h == 0) {
        ds.manifest.image_h = h;
        ds.manifest.image_w = w;
        ds.manifest.image_c = c;
      }
      require(h == ds.manifest.image_h && w == ds.manifest.image_w && c == ds.manifest.image_c,
              "dataset: " + f.string() + " has size " + std::to_string(w) + "x" +
                  std::to_string(h) + "x" + std::to_string(c) + ", expected " +
                  std::to_string(ds.manifest.image_w) + "x" + std::to_string(ds.manifest.image_h) +
                  "x" + std::to_string(ds.manifest.image_c));
      ManifestEntry e;
      e.source = class_names[cls] + "/" + f.filename().string();
      e.class_id = static_cast<int>(cls);
      ds.manifest.entries.push_back(e);
      images.push_back(std::move(raw));
    }
  }
  require(!images.empty(), "dataset: no images under " + root.string());
  ds.manifest.num_classes = static_cast<int>(class_names.size());

  const int n = static_cast<int>(images.size());
  const int h = ds.manifest.image_h, w = ds.manifest.image_w, c = ds.manifest.image_c;
  ds.pixels = Tensor({n, c, h, w});
  for (int i = 0; i < n; ++i) {
    const std::vector<unsigned char>& raw = images[static_cast<size_t>(i)];
    // PNM stores interleaved HWC; tensors are CHW.
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int ch = 0; ch < c; ++ch)
          ds.pixels[((i * c + ch) * h + y) * w + x] = raw[(y * w + x) * static_cast<size_t>(c) +
                                                          static_cast<size_t>(ch)] /
                                                      255.0;
  }
  assign_partitions(ds.manifest, opts);
  return ds;
}

}  // namespace

Dataset ingest(const fs::path& root, const IngestOptions& opts) {
  require(fs::exists(root), "dataset: path does not exist: " + root.string());
  if (fs::is_directory(root)) return ingest_directory(root, opts);
  return ingest_container(root, opts);
}

void write_container(const fs::path& path, const Tensor& pixels, const std::vector<int>& labels) {
  require(pixels.ndim() == 4, "write_container: pixels must be [N,C,H,W]");
  const int n = pixels.dim(0), c = pixels.dim(1), h = pixels.dim(2), w = pixels.dim(3);
  require(static_cast<int>(labels.size()) == n, "write_container: label count mismatch");
  std::ofstream os(path, std::ios::binary);
  require(os.good(), "write_container: cannot write " + path.string());
  os.write(kContainerMagic, 8);
  write_u32(os, static_cast<uint32_t>(n));
  write_u32(os, static_cast<uint32_t>(h));
  write_u32(os, static_cast<uint32_t>(w));
  write_u32(os, static_cast<uint32_t>(c));
  std::vector<unsigned char> raw(static_cast<size_t>(pixels.numel()));
  for (int i = 0; i < pixels.numel(); ++i) {
    const double p = std::clamp(pixels[i], 0.0, 1.0);
    raw[static_cast<size_t>(i)] = static_cast<unsigned char>(std::lround(p * 255.0));
  }
  os.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  for (int lbl : labels) write_u32(os, static_cast<uint32_t>(lbl));
  require(os.good(), "write_container: write failed for " + path.string());
}

std::vector<ClassSplit> make_splits(int num_classes, int n_known, int n_splits, uint64_t seed) {
  require(n_known >= 1 && n_known < num_classes,
          "make_splits: need 1 <= n_known < num_classes, got " + std::to_string(n_known) + " of " +
              std::to_string(num_classes));
  require(n_splits >= 1, "make_splits: n_splits must be positive");
  Rng rng(seed);
  std::vector<ClassSplit> splits;
  std::set<std::vector<int>> seen;
  int guard = 0;
  while (static_cast<int>(splits.size()) < n_splits) {
    require(++guard < 10000, "make_splits: cannot find enough distinct splits");
    std::vector<int> classes(static_cast<size_t>(num_classes));
    for (int i = 0; i < num_classes; ++i) classes[static_cast<size_t>(i)] = i;
    rng.shuffle(classes);
    ClassSplit s;
    s.known.assign(classes.begin(), classes.begin() + n_known);
    s.open.assign(classes.begin() + n_known, classes.end());
    std::sort(s.known.begin(), s.known.end());
    std::sort(s.open.begin(), s.open.end());
    if (!seen.insert(s.known).second) continue;  // distinct known sets
    splits.push_back(std::move(s));
  }
  return splits;
}

namespace {

// Shape indicator at centered coordinates (uu, vv), unit half-extent.
bool shape_inside(int cls, double uu, double vv) {
  constexpr double r = 0.72;
  const double au = std::fabs(uu), av = std::fabs(vv);
  const double rad = std::hypot(uu, vv);
  switch (cls) {
    case 0: return rad <= r;                                      // disk
    case 1: return std::max(au, av) <= 0.78 * r;                  // square
    case 2: return rad >= 0.55 * r && rad <= r;                   // ring
    case 3: return (au <= 0.28 * r && av <= r) || (av <= 0.28 * r && au <= r);  // plus
    case 4: return std::fabs(au - av) <= 0.28 * r && std::max(au, av) <= r;     // X
    case 5: return au <= r && std::fabs(av - 0.5 * r) <= 0.2 * r;  // double horizontal bars
    case 6: return av <= r && std::fabs(au - 0.5 * r) <= 0.2 * r;  // double vertical bars
    case 7:                                                        // triangle, apex up
      return vv >= -0.75 * r && vv <= 0.75 * r && au <= (vv + 0.75 * r) * 0.55;
    case 8: {                                                      // checkerboard
      if (std::max(au, av) > r) return false;
      const int bu = static_cast<int>(std::floor((uu + r) / (0.5 * r)));
      const int bv = static_cast<int>(std::floor((vv + r) / (0.5 * r)));
      return (bu + bv) % 2 == 0;
    }
    default: return std::max(au, av) >= 0.62 * r && std::max(au, av) <= r;  // frame
  }
}

}  // namespace

Tensor render_shapes(int per_class, int size, uint64_t seed, std::vector<int>* labels) {
  require(per_class >= 1 && size >= 8, "render_shapes: bad per_class/size");
  const int num_classes = 10;
  const int n = per_class * num_classes;
  Tensor out({n, 1, size, size});
  if (labels) labels->assign(static_cast<size_t>(n), 0);
  Rng rng(seed);
  int idx = 0;
  for (int cls = 0; cls < num_classes; ++cls) {
    for (int k = 0; k < per_class; ++k, ++idx) {
      if (labels) (*labels)[static_cast<size_t>(idx)] = cls;
      const double cx = rng.uniform(-0.12, 0.12);
      const double cy = rng.uniform(-0.12, 0.12);
      const double scale = rng.uniform(0.85, 1.10);
      const double bg = rng.uniform(0.05, 0.15);
      const double fg = rng.uniform(0.75, 0.95);
      double* img = out.data() + idx * size * size;
      for (int py = 0; py < size; ++py)
        for (int px = 0; px < size; ++px) {
          const double u = ((px + 0.5) / size * 2.0 - 1.0 - cx) / scale;
          const double v = ((py + 0.5) / size * 2.0 - 1.0 - cy) / scale;
          double val = shape_inside(cls, u, v) ? fg : bg;
          val += rng.uniform(-0.04, 0.04);
          val = std::clamp(val, 0.0, 1.0);
          img[py * size + px] = std::lround(val * 255.0) / 255.0;
        }
    }
  }
  return out;
}

void generate_synthetic_dataset(const fs::path& path, int per_class, int size, uint64_t seed) {
  std::vector<int> labels;
  const Tensor pixels = render_shapes(per_class, size, seed, &labels);
  write_container(path, pixels, labels);
}

}  // namespace osdn
