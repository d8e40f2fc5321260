#include "osdn/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>

namespace osdn {

namespace fs = std::filesystem;

RunPaths RunPaths::at(const fs::path& dir) {
  RunPaths p;
  p.dir = dir;
  p.config = dir / "config.resolved";
  p.checkpoint = dir / "checkpoint.best";
  p.calibration = dir / "calibration";
  p.metrics = dir / "metrics";
  p.log = dir / "log";
  return p;
}

PreparedData prepare_data(const ExperimentConfig& cfg) {
  cfg.validate();
  IngestOptions opts;
  opts.train_frac = cfg.train_frac;
  opts.val_frac = cfg.val_frac;
  opts.partition_seed = cfg.partition_seed;
  const Dataset ds = ingest(cfg.dataset_root, opts);

  require(ds.manifest.image_h == cfg.arch.in_h && ds.manifest.image_w == cfg.arch.in_w &&
              ds.manifest.image_c == cfg.arch.in_channels,
          "prepare_data: dataset is " + std::to_string(ds.manifest.image_w) + "x" +
              std::to_string(ds.manifest.image_h) + "x" + std::to_string(ds.manifest.image_c) +
              " but the architecture expects " + std::to_string(cfg.arch.in_w) + "x" +
              std::to_string(cfg.arch.in_h) + "x" + std::to_string(cfg.arch.in_channels));

  PreparedData out;
  if (!cfg.known_classes.empty()) {
    out.split.known = cfg.known_classes;
    out.split.open = cfg.open_classes;
    std::sort(out.split.known.begin(), out.split.known.end());
    std::sort(out.split.open.begin(), out.split.open.end());
  } else {
    out.split = make_splits(ds.manifest.num_classes, cfg.n_known, cfg.n_splits,
                            cfg.seed)[static_cast<size_t>(cfg.split_id)];
  }
  require(static_cast<int>(out.split.known.size()) == cfg.arch.num_known,
          "prepare_data: arch.num_known (" + std::to_string(cfg.arch.num_known) +
              ") does not match the split (" + std::to_string(out.split.known.size()) +
              " known classes)");

  out.train = ds.partition_of_classes(Partition::Train, out.split.known, true);
  out.val = ds.partition_of_classes(Partition::Val, out.split.known, true);
  out.test_known = ds.partition_of_classes(Partition::Test, out.split.known, true);
  out.test_open = ds.partition_of_classes(Partition::Test, out.split.open, false);
  require(out.train.size() > 0 && out.val.size() > 0 && out.test_known.size() > 0,
          "prepare_data: empty known-class partition");
  require(out.test_open.size() > 0, "prepare_data: empty open-class test partition");
  return out;
}

OsdnModel run_train(const ExperimentConfig& cfg, const fs::path& run_dir) {
  const PreparedData data = prepare_data(cfg);
  fs::create_directories(run_dir);
  const RunPaths paths = RunPaths::at(run_dir);
  cfg.save(paths.config);

  Rng rng(cfg.seed);
  OsdnModel model = OsdnModel::init(cfg.arch, rng);
  TrainResult result = train(std::move(model), data.train, data.val, cfg.train, rng);
  result.best_model.save(paths.checkpoint.string());
  write_training_log(paths.log.string(), result.log);
  return std::move(result.best_model);
}

Calibration run_calibrate(const ExperimentConfig& cfg, const fs::path& run_dir) {
  const RunPaths paths = RunPaths::at(run_dir);
  require(fs::exists(paths.checkpoint),
          "calibrate: missing checkpoint " + paths.checkpoint.string());
  const OsdnModel model = OsdnModel::load(paths.checkpoint.string());
  const PreparedData data = prepare_data(cfg);

  LabeledSet cal_set = data.train;
  if (cfg.openmax.calibrate_on_adversarial)
    cal_set = attack_set(model, cal_set, cfg.train.attack, LabelSource::GroundTruth);
  const Calibration cal = calibrate(model, cal_set.x, cal_set.labels, cfg.openmax);
  cal.save(paths.calibration.string());
  return cal;
}

MetricsReport run_eval(const ExperimentConfig& cfg, const fs::path& run_dir) {
  const RunPaths paths = RunPaths::at(run_dir);
  require(fs::exists(paths.checkpoint), "eval: missing checkpoint " + paths.checkpoint.string());
  require(fs::exists(paths.calibration),
          "eval: missing calibration " + paths.calibration.string());
  const OsdnModel model = OsdnModel::load(paths.checkpoint.string());
  const Calibration cal = Calibration::load(paths.calibration.string());
  const PreparedData data = prepare_data(cfg);

  // Known-class attacks use ground-truth labels; open-set attacks use the
  // model's own predictions.
  const LabeledSet adv_known =
      attack_set(model, data.test_known, cfg.eval_attack, LabelSource::GroundTruth);
  const LabeledSet adv_open =
      attack_set(model, data.test_open, cfg.eval_attack, LabelSource::ModelPrediction);

  MetricsReport r;
  r.closed_set_accuracy = closed_set_accuracy(model, cal, adv_known);
  r.clean_closed_set_accuracy = closed_set_accuracy(model, cal, data.test_known);
  r.auc_roc = openset_auc(model, cal, adv_known, adv_open, cfg.auc_score);
  r.clean_auc_roc = openset_auc(model, cal, data.test_known, data.test_open, cfg.auc_score);
  const F1Result f1 = ood_macro_f1(model, cal, adv_known, adv_open, cfg.openmax.threshold);
  r.macro_f1 = f1.macro_f1;
  r.per_class_f1 = f1.per_class;
  r.n_known = data.test_known.size();
  r.n_open = data.test_open.size();
  r.attack = to_string(cfg.eval_attack.family);
  r.split_id = cfg.split_id;
  r.seed = cfg.seed;
  write_metrics_json(paths.metrics.string(), r);
  return r;
}

MetricsReport run_all(const ExperimentConfig& cfg, const fs::path& run_dir) {
  run_train(cfg, run_dir);
  run_calibrate(cfg, run_dir);
  return run_eval(cfg, run_dir);
}

ExperimentConfig split_config(const ExperimentConfig& cfg, int split) {
  ExperimentConfig c = cfg;
  c.split_id = split;
  c.seed = cfg.seed + static_cast<uint64_t>(split);
  return c;
}

std::vector<MetricsReport> run_protocol(const ExperimentConfig& cfg, const fs::path& base_dir) {
  std::vector<MetricsReport> rows;
  for (int s = 0; s < cfg.n_splits; ++s) {
    const fs::path dir = base_dir / ("split" + std::to_string(s));
    const RunPaths paths = RunPaths::at(dir);
    require(fs::exists(paths.checkpoint),
            "protocol: missing checkpoint for split " + std::to_string(s) + ": " +
                paths.checkpoint.string());
    rows.push_back(run_eval(split_config(cfg, s), dir));
  }
  write_metrics_csv((base_dir / "summary.csv").string(), rows);
  return rows;
}

const std::vector<AblationVariant>& ablation_grid() {
  static const std::vector<AblationVariant> grid = {
      {"encoder", false, false, false},
      {"encoder+denoise", true, false, false},
      {"encoder+decoder", false, true, false},
      {"encoder+decoder+denoise", true, true, false},
      {"encoder+decoder+ssd", false, true, true},
      {"full", true, true, true},
  };
  return grid;
}

ExperimentConfig apply_ablation(ExperimentConfig cfg, const AblationVariant& v) {
  cfg.train.loss.cls = true;
  cfg.train.loss.rec = v.rec;
  cfg.train.loss.ssd = v.ssd;
  for (size_t s = 0; s < 4; ++s) cfg.arch.denoise_after_block[s] = v.denoise;
  return cfg;
}

std::vector<AblationResult> run_ablation(const ExperimentConfig& cfg, const fs::path& base_dir,
                                         int n_seeds) {
  require(n_seeds >= 1 && n_seeds <= cfg.n_splits,
          "ablation: n_seeds must be in [1, n_splits]");
  std::vector<AblationResult> results;
  for (const AblationVariant& v : ablation_grid()) {
    AblationResult res;
    res.name = v.name;
    std::vector<double> aucs, accs;
    for (int k = 0; k < n_seeds; ++k) {
      const ExperimentConfig run = split_config(apply_ablation(cfg, v), k);
      const fs::path dir = base_dir / v.name / ("seed" + std::to_string(run.seed));
      const MetricsReport r = run_all(run, dir);
      res.per_seed.push_back(r);
      aucs.push_back(r.auc_roc);
      accs.push_back(r.closed_set_accuracy);
    }
    res.mean_auc = aggregate(aucs).mean;
    res.mean_accuracy = aggregate(accs).mean;
    results.push_back(std::move(res));
  }
  fs::create_directories(base_dir);
  std::ofstream os(base_dir / "ablation.csv");
  require(os.good(), "ablation: cannot write ablation.csv");
  os << std::setprecision(17);
  os << "config,auc_roc,closed_set_accuracy\n";
  for (const AblationResult& r : results)
    os << r.name << ',' << r.mean_auc << ',' << r.mean_accuracy << '\n';
  return results;
}

namespace {

void write_pnm(const fs::path& path, const Tensor& x, int sample, double lo, double hi) {
  const int c = x.dim(1), h = x.dim(2), w = x.dim(3);
  require(c == 1 || c == 3, "write_pnm: need 1 or 3 channels");
  std::ofstream os(path, std::ios::binary);
  require(os.good(), "write_pnm: cannot write " + path.string());
  os << (c == 1 ? "P5" : "P6") << '\n' << w << ' ' << h << "\n255\n";
  const double* base = x.data() + sample * c * h * w;
  for (int y = 0; y < h; ++y)
    for (int px = 0; px < w; ++px)
      for (int ch = 0; ch < c; ++ch) {
        const double v = (base[(ch * h + y) * w + px] - lo) / (hi - lo);
        os.put(static_cast<char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
      }
}

}  // namespace

void dump_features(const ExperimentConfig& cfg, const fs::path& run_dir,
                   const fs::path& out_csv) {
  const RunPaths paths = RunPaths::at(run_dir);
  require(fs::exists(paths.checkpoint),
          "dump-features: missing checkpoint " + paths.checkpoint.string());
  const OsdnModel model = OsdnModel::load(paths.checkpoint.string());
  const PreparedData data = prepare_data(cfg);

  const LabeledSet adv_known =
      attack_set(model, data.test_known, cfg.eval_attack, LabelSource::GroundTruth);
  const LabeledSet adv_open =
      attack_set(model, data.test_open, cfg.eval_attack, LabelSource::ModelPrediction);

  std::ofstream os(out_csv);
  require(os.good(), "dump-features: cannot write " + out_csv.string());
  os << std::setprecision(17);
  os << "known,label";
  for (int i = 0; i < model.arch().latent_dim(); ++i) os << ",v" << i;
  os << '\n';
  auto emit = [&](const LabeledSet& set, int known_flag) {
    const Tensor lat = model.latents(set.x);
    const int d = lat.dim(1);
    for (int i = 0; i < set.size(); ++i) {
      os << known_flag << ',' << set.labels[static_cast<size_t>(i)];
      for (int j = 0; j < d; ++j) os << ',' << lat[i * d + j];
      os << '\n';
    }
  };
  emit(adv_known, 1);
  emit(adv_open, 0);
}

void dump_reconstructions(const ExperimentConfig& cfg, const fs::path& run_dir,
                          const fs::path& out_dir, int per_set) {
  const RunPaths paths = RunPaths::at(run_dir);
  require(fs::exists(paths.checkpoint),
          "dump-reconstructions: missing checkpoint " + paths.checkpoint.string());
  const OsdnModel model = OsdnModel::load(paths.checkpoint.string());
  const PreparedData data = prepare_data(cfg);
  fs::create_directories(out_dir);

  auto emit = [&](const LabeledSet& set, LabelSource source, const std::string& tag) {
    std::vector<int> idx;
    for (int i = 0; i < std::min(per_set, set.size()); ++i) idx.push_back(i);
    const LabeledSet sel = subset(set, idx);
    const LabeledSet adv = attack_set(model, sel, cfg.eval_attack, source);
    const Tensor rec = model.reconstruct(adv.x);
    const double lo = cfg.arch.pixel_lo, hi = cfg.arch.pixel_hi;
    for (size_t i = 0; i < idx.size(); ++i) {
      const std::string ext = cfg.arch.in_channels == 3 ? ".ppm" : ".pgm";
      const std::string stem = tag + std::to_string(i);
      write_pnm(out_dir / (stem + "_clean" + ext), sel.x, static_cast<int>(i), lo, hi);
      write_pnm(out_dir / (stem + "_adv" + ext), adv.x, static_cast<int>(i), lo, hi);
      write_pnm(out_dir / (stem + "_recon" + ext), rec, static_cast<int>(i), lo, hi);
    }
  };
  emit(data.test_known, LabelSource::GroundTruth, "known");
  emit(data.test_open, LabelSource::ModelPrediction, "open");
}

}  // namespace osdn
