#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "osdn/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string run_dir = "runs/default";
  long long seed = -1;
  std::string eval_attack;
  std::string train_attack;
  std::vector<std::string> toggles;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "experiment config (json)")->required();
  cmd->add_option("--run-dir", args.run_dir, "run directory for artifacts");
  cmd->add_option("--seed", args.seed, "override the config seed");
  cmd->add_option("--attack", args.eval_attack, "override eval attack family (fgsm|pgd|none)");
  cmd->add_option("--train-attack", args.train_attack,
                  "override training attack family (fgsm|pgd|none)");
  cmd->add_option("--toggle", args.toggles,
                  "ablation toggle KEY=BOOL (cls|rec|ssd|denoise|norm|val_attacked)");
}

bool parse_bool(const std::string& v) {
  if (v == "1" || v == "true" || v == "on") return true;
  if (v == "0" || v == "false" || v == "off") return false;
  throw std::runtime_error("toggle value must be boolean, got '" + v + "'");
}

osdn::ExperimentConfig load_config(const CommonArgs& args) {
  osdn::ExperimentConfig cfg = osdn::ExperimentConfig::load(args.config_path);
  if (args.seed >= 0) cfg.seed = static_cast<uint64_t>(args.seed);
  if (!args.eval_attack.empty())
    cfg.eval_attack.family = osdn::attack_family_from_string(args.eval_attack);
  if (!args.train_attack.empty())
    cfg.train.attack.family = osdn::attack_family_from_string(args.train_attack);
  for (const std::string& t : args.toggles) {
    const size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("toggle must look like KEY=BOOL, got '" + t + "'");
    const std::string key = t.substr(0, eq);
    const bool value = parse_bool(t.substr(eq + 1));
    if (key == "cls")
      cfg.train.loss.cls = value;
    else if (key == "rec")
      cfg.train.loss.rec = value;
    else if (key == "ssd")
      cfg.train.loss.ssd = value;
    else if (key == "denoise")
      for (size_t s = 0; s < 4; ++s) cfg.arch.denoise_after_block[s] = value;
    else if (key == "norm")
      cfg.arch.use_norm = value;
    else if (key == "val_attacked")
      cfg.train.val_attacked = value;
    else
      throw std::runtime_error("unknown toggle key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

void print_report(const osdn::MetricsReport& r) {
  std::cout << "split " << r.split_id << " seed " << r.seed << " attack " << r.attack
            << ": closed_acc " << r.closed_set_accuracy << " (clean "
            << r.clean_closed_set_accuracy << "), auc " << r.auc_roc << " (clean "
            << r.clean_auc_roc << "), macro_f1 " << r.macro_f1 << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Open-Set Defense Network experiments"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "render the synthetic shape dataset container");
  std::string gen_out = "data/shapes16.osdn";
  int gen_per_class = 90, gen_size = 16;
  long long gen_seed = 20210901;
  gen->add_option("--out", gen_out, "output container path");
  gen->add_option("--per-class", gen_per_class, "samples per class");
  gen->add_option("--size", gen_size, "image side length");
  gen->add_option("--seed", gen_seed, "renderer seed");

  CommonArgs train_args, cal_args, eval_args, proto_args, ablate_args, feat_args, rec_args;
  auto* train_cmd = app.add_subcommand("train", "train and write checkpoint.best");
  add_common(train_cmd, train_args);
  auto* cal_cmd = app.add_subcommand("calibrate", "fit the OpenMax calibration");
  add_common(cal_cmd, cal_args);
  auto* eval_cmd = app.add_subcommand("eval", "evaluate the protocol metrics");
  add_common(eval_cmd, eval_args);
  auto* proto_cmd =
      app.add_subcommand("protocol", "evaluate all trained splits and write summary.csv");
  add_common(proto_cmd, proto_args);
  auto* ablate_cmd = app.add_subcommand("ablate", "train/evaluate the six-way ablation grid");
  int ablate_seeds = 3;
  add_common(ablate_cmd, ablate_args);
  ablate_cmd->add_option("--seeds", ablate_seeds, "number of seeds (and splits) per variant");
  auto* feat_cmd = app.add_subcommand("dump-features", "write attacked latent features as csv");
  std::string feat_out;
  add_common(feat_cmd, feat_args);
  feat_cmd->add_option("--out", feat_out, "output csv (default <run-dir>/features.csv)");
  auto* rec_cmd =
      app.add_subcommand("dump-reconstructions", "write clean/adversarial/decoded image files");
  std::string rec_out;
  int rec_count = 8;
  add_common(rec_cmd, rec_args);
  rec_cmd->add_option("--out", rec_out, "output directory (default <run-dir>/reconstructions)");
  rec_cmd->add_option("--count", rec_count, "samples per set");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      fs::create_directories(fs::path(gen_out).parent_path());
      osdn::generate_synthetic_dataset(gen_out, gen_per_class, gen_size,
                                       static_cast<uint64_t>(gen_seed));
      std::cout << "wrote " << gen_out << " (" << gen_per_class << " per class, " << gen_size
                << "x" << gen_size << ")\n";
    } else if (train_cmd->parsed()) {
      const osdn::ExperimentConfig cfg = load_config(train_args);
      osdn::run_train(cfg, train_args.run_dir);
      std::cout << "checkpoint written to " << train_args.run_dir << "/checkpoint.best\n";
    } else if (cal_cmd->parsed()) {
      const osdn::ExperimentConfig cfg = load_config(cal_args);
      osdn::run_calibrate(cfg, cal_args.run_dir);
      std::cout << "calibration written to " << cal_args.run_dir << "/calibration\n";
    } else if (eval_cmd->parsed()) {
      const osdn::ExperimentConfig cfg = load_config(eval_args);
      print_report(osdn::run_eval(cfg, eval_args.run_dir));
    } else if (proto_cmd->parsed()) {
      const osdn::ExperimentConfig cfg = load_config(proto_args);
      const auto rows = osdn::run_protocol(cfg, proto_args.run_dir);
      for (const auto& r : rows) print_report(r);
      std::cout << "summary written to " << proto_args.run_dir << "/summary.csv\n";
    } else if (ablate_cmd->parsed()) {
      const osdn::ExperimentConfig cfg = load_config(ablate_args);
      const auto rows = osdn::run_ablation(cfg, ablate_args.run_dir, ablate_seeds);
      for (const auto& r : rows)
        std::cout << r.name << ": auc " << r.mean_auc << ", closed_acc " << r.mean_accuracy
                  << "\n";
      std::cout << "grid written to " << ablate_args.run_dir << "/ablation.csv\n";
    } else if (feat_cmd->parsed()) {
      const osdn::ExperimentConfig cfg = load_config(feat_args);
      const std::string out =
          feat_out.empty() ? (fs::path(feat_args.run_dir) / "features.csv").string() : feat_out;
      osdn::dump_features(cfg, feat_args.run_dir, out);
      std::cout << "features written to " << out << "\n";
    } else if (rec_cmd->parsed()) {
      const osdn::ExperimentConfig cfg = load_config(rec_args);
      const std::string out = rec_out.empty()
                                  ? (fs::path(rec_args.run_dir) / "reconstructions").string()
                                  : rec_out;
      osdn::dump_reconstructions(cfg, rec_args.run_dir, out, rec_count);
      std::cout << "reconstructions written to " << out << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "{\"error\":\"" << e.what() << "\"}\n";
    return 1;
  }
  return 0;
}
