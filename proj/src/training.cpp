#include "osdn/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "osdn/parallel.hpp"

namespace osdn {

AttackTarget classification_target(const OsdnModel& model) {
  AttackTarget t;
  t.loss = [&model](Tape& tape, Var x, const std::vector<int>& labels) {
    Binding b = model.bind(tape, false);
    Var v = model.encode(b, x);
    return cross_entropy(model.classify_known(b, v), labels, Reduction::Sum);
  };
  t.logits = [&model](const Tensor& x) { return model.known_logits(x); };
  return t;
}

AttackTarget rotation_target(const OsdnModel& model) {
  AttackTarget t;
  t.loss = [&model](Tape& tape, Var x, const std::vector<int>& labels) {
    Binding b = model.bind(tape, false);
    Var v = model.encode(b, x);
    return cross_entropy(model.classify_rotation(b, v), labels, Reduction::Sum);
  };
  t.logits = [&model](const Tensor& x) { return model.known_logits(x); };
  return t;
}

Adam::Adam(const AdamConfig& cfg, const ParamSet& params) : cfg_(cfg) {
  m_.reserve(params.entries.size());
  v_.reserve(params.entries.size());
  for (const auto& e : params.entries) {
    m_.emplace_back(e.value.shape);
    v_.emplace_back(e.value.shape);
  }
}

void Adam::step(ParamSet& params, const std::vector<Tensor>& grads) {
  require(grads.size() == params.entries.size() && grads.size() == m_.size(),
          "Adam: gradient list does not match parameter set");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
  for (size_t pi = 0; pi < grads.size(); ++pi) {
    Tensor& p = params.entries[pi].value;
    const Tensor& g = grads[pi];
    require(g.same_shape(p), "Adam: gradient shape mismatch for " + params.entries[pi].name);
    Tensor& m = m_[pi];
    Tensor& v = v_[pi];
    for (int i = 0; i < p.numel(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

namespace {

std::string batch_stats(const Tensor& x) {
  double lo = x[0], hi = x[0], sum = 0.0;
  for (int i = 0; i < x.numel(); ++i) {
    lo = std::min(lo, x[i]);
    hi = std::max(hi, x[i]);
    sum += x[i];
  }
  std::ostringstream os;
  os << "min=" << lo << " max=" << hi << " mean=" << sum / x.numel();
  return os.str();
}

void check_term(double value, const char* term, int step_index, const Tensor& x) {
  if (std::isfinite(value)) return;
  throw std::runtime_error("train_step: non-finite " + std::string(term) + " at step " +
                           std::to_string(step_index) + " (batch " + batch_stats(x) + ")");
}

}  // namespace

LossBundle train_step(OsdnModel& model, Adam& opt, const LabeledSet& batch,
                      const LossToggles& toggles, const AttackSpec& attack, Rng& rng,
                      int step_index) {
  require(batch.size() >= 1, "train_step: empty batch");
  const int n = batch.size();

  // Path (1)/(2) share one adversarial batch generated from the
  // classification loss; path (3) attacks the rotated images against the
  // rotation labels.
  Tensor x_adv;
  if (toggles.cls || toggles.rec)
    x_adv = attack_batch(classification_target(model), batch.x, batch.labels,
                         LabelSource::GroundTruth, attack, &rng);

  std::vector<int> rots;
  Tensor xt_adv;
  if (toggles.ssd) {
    rots.resize(static_cast<size_t>(n));
    for (int& r : rots) r = rng.below(4);
    const Tensor xt = rotate90_batch_values(batch.x, rots);
    AttackTarget rot_target = rotation_target(model);
    xt_adv = attack_batch(rot_target, xt, rots, LabelSource::GroundTruth, attack, &rng);
  }

  Tape tape;
  Binding b = model.bind(tape, true);
  LossBundle lb;
  Var total;
  auto accumulate = [&](Var term, double weight) {
    Var weighted = (weight == 1.0) ? term : scale(term, weight);
    total = total.defined() ? add(total, weighted) : weighted;
  };

  if (toggles.cls || toggles.rec) {
    Var xv = tape.input(x_adv, false);
    Var v = model.encode(b, xv, Mode::Train);
    if (toggles.cls) {
      Var l = cross_entropy(model.classify_known(b, v), batch.labels);
      lb.l_cls = l.val().item();
      check_term(lb.l_cls, "l_cls", step_index, batch.x);
      accumulate(l, toggles.w_cls);
    }
    if (toggles.rec) {
      Var clean = tape.input(batch.x, false);
      Var l = mse(clean, model.decode(b, v));
      lb.l_rec = l.val().item();
      check_term(lb.l_rec, "l_rec", step_index, batch.x);
      accumulate(l, toggles.w_rec);
    }
  }
  if (toggles.ssd) {
    Var xtv = tape.input(xt_adv, false);
    Var vt = model.encode(b, xtv, Mode::Train);
    Var l = cross_entropy(model.classify_rotation(b, vt), rots);
    lb.l_ssd = l.val().item();
    check_term(lb.l_ssd, "l_ssd", step_index, batch.x);
    accumulate(l, toggles.w_ssd);
  }
  require(total.defined(), "train_step: all loss paths disabled");
  lb.total = total.val().item();

  tape.backward(total);
  std::vector<Tensor> grads;
  grads.reserve(b.vars.size());
  for (const Var& p : b.vars) grads.push_back(p.grad());
  opt.step(model.params(), grads);
  return lb;
}

LabeledSet attack_set(const OsdnModel& model, const LabeledSet& set, const AttackSpec& spec,
                      LabelSource source, int chunk) {
  if (spec.family == AttackFamily::None || set.size() == 0) return set;
  require(!spec.random_init, "attack_set: random-init attacks need the single-sample api");
  LabeledSet out;
  out.x = Tensor(set.x.shape);
  out.labels = set.labels;
  const AttackTarget target = classification_target(model);
  const int n = set.size();
  const int per = set.x.numel() / n;
  // Per-sample attacks are independent (inference-mode statistics), so
  // chunks can run on any number of workers with identical results.
  parallel_chunks(n, chunk, [&](int start, int len) {
    Shape s = set.x.shape;
    s[0] = len;
    Tensor xs(s);
    std::copy_n(set.x.data() + start * per, len * per, xs.data());
    std::vector<int> ys(set.labels.begin() + start, set.labels.begin() + start + len);
    const Tensor adv = attack_batch(target, xs, ys, source, spec, nullptr);
    std::copy_n(adv.data(), len * per, out.x.data() + start * per);
  });
  return out;
}

double argmax_accuracy(const OsdnModel& model, const LabeledSet& set) {
  require(set.size() > 0, "argmax_accuracy: empty set");
  const int n = set.size();
  const int per = set.x.numel() / n;
  int correct = 0;
  const int chunk = 64;
  for (int start = 0; start < n; start += chunk) {
    const int len = std::min(chunk, n - start);
    Shape s = set.x.shape;
    s[0] = len;
    Tensor xs(s);
    std::copy_n(set.x.data() + start * per, len * per, xs.data());
    const std::vector<int> pred = model.predict_known(xs);
    for (int i = 0; i < len; ++i)
      if (pred[static_cast<size_t>(i)] == set.labels[static_cast<size_t>(start + i)]) ++correct;
  }
  return static_cast<double>(correct) / n;
}

TrainResult train(OsdnModel model, const LabeledSet& train_set, const LabeledSet& val_set,
                  const TrainConfig& cfg, Rng& rng) {
  require(train_set.size() > 0, "train: empty training set");
  require(val_set.size() > 0, "train: empty validation set");
  require(cfg.epochs >= 1 && cfg.batch_size >= 1, "train: bad epochs/batch_size");

  Adam opt(cfg.adam, model.params());
  TrainResult res;
  res.best_val_accuracy = -1.0;

  std::vector<int> order(static_cast<size_t>(train_set.size()));
  std::iota(order.begin(), order.end(), 0);
  int step_index = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double sum_cls = 0.0, sum_rec = 0.0, sum_ssd = 0.0;
    int n_seen = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      const size_t len = std::min(static_cast<size_t>(cfg.batch_size), order.size() - start);
      std::vector<int> idx(order.begin() + static_cast<long>(start),
                           order.begin() + static_cast<long>(start + len));
      const LabeledSet batch = subset(train_set, idx);
      const LossBundle lb = train_step(model, opt, batch, cfg.loss, cfg.attack, rng, step_index++);
      sum_cls += lb.l_cls * static_cast<double>(len);
      sum_rec += lb.l_rec * static_cast<double>(len);
      sum_ssd += lb.l_ssd * static_cast<double>(len);
      n_seen += static_cast<int>(len);
    }

    const bool attack_val = cfg.val_attacked && cfg.attack.family != AttackFamily::None;
    const LabeledSet val_eval =
        attack_val ? attack_set(model, val_set, cfg.attack, LabelSource::GroundTruth) : val_set;
    EpochRow row;
    row.epoch = epoch;
    row.l_cls = sum_cls / n_seen;
    row.l_rec = sum_rec / n_seen;
    row.l_ssd = sum_ssd / n_seen;
    row.val_accuracy = argmax_accuracy(model, val_eval);
    res.log.push_back(row);

    if (row.val_accuracy > res.best_val_accuracy) {
      res.best_val_accuracy = row.val_accuracy;
      res.best_epoch = epoch;
      res.best_model = model;
    }
  }
  return res;
}

void write_training_log(const std::string& path, const std::vector<EpochRow>& log) {
  std::ofstream os(path);
  require(os.good(), "training log: cannot write " + path);
  os << std::setprecision(17);
  os << "epoch,l_cls,l_rec,l_ssd,val_accuracy\n";
  for (const EpochRow& r : log)
    os << r.epoch << ',' << r.l_cls << ',' << r.l_rec << ',' << r.l_ssd << ',' << r.val_accuracy
       << '\n';
}

}  // namespace osdn
