#include "osdn/config.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

namespace osdn {

using nlohmann::json;

namespace {

json attack_to_json(const AttackSpec& a) {
  json j;
  j["family"] = to_string(a.family);
  j["epsilon"] = a.epsilon;
  j["epsilon_step"] = a.epsilon_step;
  j["iterations"] = a.iterations;
  j["pixel_lo"] = a.pixel_lo;
  j["pixel_hi"] = a.pixel_hi;
  j["random_init"] = a.random_init;
  return j;
}

AttackSpec attack_from_json(const json& j, AttackSpec base = {}) {
  AttackSpec a = base;
  if (j.contains("family")) a.family = attack_family_from_string(j.at("family").get<std::string>());
  if (j.contains("epsilon")) a.epsilon = j.at("epsilon").get<double>();
  if (j.contains("epsilon_step")) a.epsilon_step = j.at("epsilon_step").get<double>();
  if (j.contains("iterations")) a.iterations = j.at("iterations").get<int>();
  if (j.contains("pixel_lo")) a.pixel_lo = j.at("pixel_lo").get<double>();
  if (j.contains("pixel_hi")) a.pixel_hi = j.at("pixel_hi").get<double>();
  if (j.contains("random_init")) a.random_init = j.at("random_init").get<bool>();
  return a;
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void ExperimentConfig::validate() const {
  require(version == 1, "config: unsupported version " + std::to_string(version));
  require(!dataset_root.empty(), "config: dataset_root is required");
  require(train_frac > 0.0 && val_frac >= 0.0 && train_frac + val_frac < 1.0,
          "config: train/val fractions must leave room for a test partition");
  require(n_known >= 2, "config: need at least 2 known classes");
  require(n_splits >= 1 && split_id >= 0 && split_id < n_splits,
          "config: split_id must be in [0, n_splits)");
  if (!known_classes.empty() || !open_classes.empty()) {
    require(!known_classes.empty() && !open_classes.empty(),
            "config: explicit splits need both known_classes and open_classes");
    std::set<int> k(known_classes.begin(), known_classes.end());
    for (int c : open_classes)
      require(k.insert(c).second, "config: class " + std::to_string(c) +
                                      " appears in both known_classes and open_classes");
  }
  arch.validate();
  train.attack.validate();
  eval_attack.validate();
  require(train.epochs >= 1 && train.batch_size >= 1, "config: bad epochs/batch_size");
  require(train.adam.lr > 0.0, "config: learning rate must be positive");
  require(train.loss.cls || train.loss.rec || train.loss.ssd,
          "config: at least one loss path must be enabled");
  openmax.validate(arch.num_known);
}

std::string ExperimentConfig::to_json_string() const {
  json j;
  j["version"] = version;
  j["dataset"] = {{"root", dataset_root},
                  {"train_frac", train_frac},
                  {"val_frac", val_frac},
                  {"partition_seed", partition_seed}};
  j["split"] = {{"n_known", n_known},
                {"n_splits", n_splits},
                {"split_id", split_id},
                {"known_classes", known_classes},
                {"open_classes", open_classes}};
  j["seed"] = seed;
  j["arch"] = {{"in_channels", arch.in_channels},
               {"in_h", arch.in_h},
               {"in_w", arch.in_w},
               {"channels", arch.channels},
               {"denoise_after_block", arch.denoise_after_block},
               {"blocks_per_stage", arch.blocks_per_stage},
               {"use_norm", arch.use_norm},
               {"denoise_residual", arch.denoise_residual},
               {"num_known", arch.num_known},
               {"pixel_lo", arch.pixel_lo},
               {"pixel_hi", arch.pixel_hi}};
  j["loss"] = {{"cls", train.loss.cls},   {"rec", train.loss.rec},   {"ssd", train.loss.ssd},
               {"w_cls", train.loss.w_cls}, {"w_rec", train.loss.w_rec},
               {"w_ssd", train.loss.w_ssd}};
  j["optimizer"] = {{"lr", train.adam.lr},
                    {"beta1", train.adam.beta1},
                    {"beta2", train.adam.beta2},
                    {"eps", train.adam.eps},
                    {"epochs", train.epochs},
                    {"batch_size", train.batch_size},
                    {"val_attacked", train.val_attacked}};
  j["train_attack"] = attack_to_json(train.attack);
  j["eval_attack"] = attack_to_json(eval_attack);
  j["openmax"] = {{"sigma", openmax.sigma},
                  {"tail_size", openmax.tail_size},
                  {"threshold", openmax.threshold},
                  {"calibrate_on_adversarial", openmax.calibrate_on_adversarial}};
  j["auc_score"] =
      auc_score == OpenScoreKind::OpenProbability ? "open_prob" : "one_minus_max_known";
  return j.dump(2);
}

ExperimentConfig ExperimentConfig::from_json_string(const std::string& text) {
  const json j = json::parse(text);
  ExperimentConfig c;
  maybe(j, "version", c.version);
  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    maybe(d, "root", c.dataset_root);
    maybe(d, "train_frac", c.train_frac);
    maybe(d, "val_frac", c.val_frac);
    maybe(d, "partition_seed", c.partition_seed);
  }
  if (j.contains("split")) {
    const json& s = j.at("split");
    maybe(s, "n_known", c.n_known);
    maybe(s, "n_splits", c.n_splits);
    maybe(s, "split_id", c.split_id);
    maybe(s, "known_classes", c.known_classes);
    maybe(s, "open_classes", c.open_classes);
  }
  maybe(j, "seed", c.seed);
  if (j.contains("arch")) {
    const json& a = j.at("arch");
    maybe(a, "in_channels", c.arch.in_channels);
    maybe(a, "in_h", c.arch.in_h);
    maybe(a, "in_w", c.arch.in_w);
    maybe(a, "channels", c.arch.channels);
    maybe(a, "denoise_after_block", c.arch.denoise_after_block);
    maybe(a, "blocks_per_stage", c.arch.blocks_per_stage);
    maybe(a, "use_norm", c.arch.use_norm);
    maybe(a, "denoise_residual", c.arch.denoise_residual);
    maybe(a, "num_known", c.arch.num_known);
    maybe(a, "pixel_lo", c.arch.pixel_lo);
    maybe(a, "pixel_hi", c.arch.pixel_hi);
  }
  if (j.contains("loss")) {
    const json& l = j.at("loss");
    maybe(l, "cls", c.train.loss.cls);
    maybe(l, "rec", c.train.loss.rec);
    maybe(l, "ssd", c.train.loss.ssd);
    maybe(l, "w_cls", c.train.loss.w_cls);
    maybe(l, "w_rec", c.train.loss.w_rec);
    maybe(l, "w_ssd", c.train.loss.w_ssd);
  }
  if (j.contains("optimizer")) {
    const json& o = j.at("optimizer");
    maybe(o, "lr", c.train.adam.lr);
    maybe(o, "beta1", c.train.adam.beta1);
    maybe(o, "beta2", c.train.adam.beta2);
    maybe(o, "eps", c.train.adam.eps);
    maybe(o, "epochs", c.train.epochs);
    maybe(o, "batch_size", c.train.batch_size);
    maybe(o, "val_attacked", c.train.val_attacked);
  }
  if (j.contains("train_attack")) c.train.attack = attack_from_json(j.at("train_attack"));
  if (j.contains("eval_attack")) c.eval_attack = attack_from_json(j.at("eval_attack"));
  if (j.contains("openmax")) {
    const json& o = j.at("openmax");
    maybe(o, "sigma", c.openmax.sigma);
    maybe(o, "tail_size", c.openmax.tail_size);
    maybe(o, "threshold", c.openmax.threshold);
    maybe(o, "calibrate_on_adversarial", c.openmax.calibrate_on_adversarial);
  }
  if (j.contains("auc_score")) {
    const std::string s = j.at("auc_score").get<std::string>();
    require(s == "open_prob" || s == "one_minus_max_known",
            "config: auc_score must be open_prob or one_minus_max_known");
    c.auc_score = s == "open_prob" ? OpenScoreKind::OpenProbability
                                   : OpenScoreKind::OneMinusMaxKnown;
  }
  // Keep the attacked-image range aligned with the pixel range of the data.
  c.train.attack.pixel_lo = c.arch.pixel_lo;
  c.train.attack.pixel_hi = c.arch.pixel_hi;
  c.eval_attack.pixel_lo = c.arch.pixel_lo;
  c.eval_attack.pixel_hi = c.arch.pixel_hi;
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  require(is.good(), "config: cannot read " + path.string());
  std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  ExperimentConfig c = from_json_string(text);
  c.validate();
  return c;
}

void ExperimentConfig::save(const std::filesystem::path& path) const {
  std::ofstream os(path);
  require(os.good(), "config: cannot write " + path.string());
  os << to_json_string() << '\n';
}

}  // namespace osdn
