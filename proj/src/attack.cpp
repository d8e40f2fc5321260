#include "osdn/attack.hpp"

#include <algorithm>
#include <cmath>

namespace osdn {

void AttackSpec::validate() const {
  require(epsilon >= 0.0, "AttackSpec: epsilon must be nonnegative");
  require(pixel_lo < pixel_hi, "AttackSpec: pixel_range lo must be < hi");
  if (family == AttackFamily::Pgd) {
    require(epsilon_step > 0.0 && epsilon_step <= epsilon,
            "AttackSpec: PGD needs 0 < epsilon_step <= epsilon");
    require(iterations >= 1, "AttackSpec: PGD needs iterations >= 1");
  }
}

AttackFamily attack_family_from_string(const std::string& s) {
  if (s == "fgsm") return AttackFamily::Fgsm;
  if (s == "pgd") return AttackFamily::Pgd;
  if (s == "none") return AttackFamily::None;
  throw std::runtime_error("unknown attack family '" + s + "' (want fgsm|pgd|none)");
}

std::string to_string(AttackFamily f) {
  switch (f) {
    case AttackFamily::Fgsm: return "fgsm";
    case AttackFamily::Pgd: return "pgd";
    default: return "none";
  }
}

namespace {

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

// Gradient of the scalar loss w.r.t. x at the given point. Throws on
// non-finite gradients, naming the first offending batch index.
Tensor input_gradient(const AttackLossFn& loss_fn, const Tensor& x) {
  Tape tape;
  Var xv = tape.input(x, true);
  Var loss = loss_fn(tape, xv);
  tape.backward(loss);
  const Tensor& g = xv.grad();
  if (!g.all_finite()) {
    const int batch = x.ndim() >= 1 ? x.dim(0) : 1;
    const int per = x.numel() / std::max(1, batch);
    for (int i = 0; i < g.numel(); ++i)
      if (!std::isfinite(g[i]))
        throw std::runtime_error("attack: non-finite input gradient at batch index " +
                                 std::to_string(per > 0 ? i / per : 0));
  }
  return g;
}

}  // namespace

Tensor fgsm(const AttackLossFn& loss_fn, const Tensor& x, const AttackSpec& spec) {
  spec.validate();
  Tensor g = input_gradient(loss_fn, x);
  Tensor out = x;
  for (int i = 0; i < out.numel(); ++i) {
    const double v = x[i] + spec.epsilon * sign(g[i]);
    out[i] = std::clamp(v, spec.pixel_lo, spec.pixel_hi);
  }
  return out;
}

Tensor pgd(const AttackLossFn& loss_fn, const Tensor& x, const AttackSpec& spec, Rng* rng) {
  spec.validate();
  Tensor adv = x;
  if (spec.random_init) {
    require(rng != nullptr, "pgd: random_init requires an rng");
    for (int i = 0; i < adv.numel(); ++i) {
      const double v = x[i] + rng->uniform(-spec.epsilon, spec.epsilon);
      adv[i] = std::clamp(v, spec.pixel_lo, spec.pixel_hi);
    }
  }
  for (int t = 0; t < spec.iterations; ++t) {
    Tensor g = input_gradient(loss_fn, adv);
    for (int i = 0; i < adv.numel(); ++i) {
      double v = adv[i] + spec.epsilon_step * sign(g[i]);
      v = std::clamp(v, x[i] - spec.epsilon, x[i] + spec.epsilon);  // l-inf ball
      adv[i] = std::clamp(v, spec.pixel_lo, spec.pixel_hi);         // pixel range
    }
  }
  return adv;
}

Tensor run_attack(const AttackLossFn& loss_fn, const Tensor& x, const AttackSpec& spec, Rng* rng) {
  switch (spec.family) {
    case AttackFamily::None: return x;
    case AttackFamily::Fgsm: return fgsm(loss_fn, x, spec);
    case AttackFamily::Pgd: return pgd(loss_fn, x, spec, rng);
  }
  return x;
}

Tensor attack_batch(const AttackTarget& target, const Tensor& x, const std::vector<int>& labels,
                    LabelSource source, const AttackSpec& spec, Rng* rng) {
  require(x.ndim() == 4 && x.dim(0) >= 1, "attack_batch: empty batch");
  if (spec.family == AttackFamily::None) return x;

  std::vector<int> y = labels;
  if (source == LabelSource::ModelPrediction) {
    const Tensor logits = target.logits(x);
    require(logits.ndim() == 2 && logits.dim(0) == x.dim(0),
            "attack_batch: logits shape " + shape_str(logits.shape) + " does not match batch");
    const int c = logits.dim(1);
    y.assign(static_cast<size_t>(x.dim(0)), 0);
    for (int i = 0; i < x.dim(0); ++i) {
      int best = 0;
      for (int j = 1; j < c; ++j)
        if (logits[i * c + j] > logits[i * c + best]) best = j;
      y[static_cast<size_t>(i)] = best;
    }
  } else {
    require(static_cast<int>(y.size()) == x.dim(0),
            "attack_batch: ground-truth labels required for every sample");
  }

  AttackLossFn loss_fn = [&](Tape& t, Var xv) { return target.loss(t, xv, y); };
  return run_attack(loss_fn, x, spec, rng);
}

}  // namespace osdn
