#include <doctest.h>

#include <cmath>

#include "osdn/attack.hpp"
#include "osdn/targets.hpp"
#include "test_support.hpp"

using namespace osdn;

namespace {

// One-dense-layer classifier on flattened images, smooth and fast.
struct ToyClassifier {
  Tensor w, b;
  int h, wdt, classes;

  ToyClassifier(int size, int classes_, Rng& rng)
      : w(rng.normal_tensor({size * size, classes_}, 0.0, 0.4)),
        b(rng.normal_tensor({classes_}, 0.0, 0.1)),
        h(size),
        wdt(size),
        classes(classes_) {}

  Var logits(Tape& t, Var x) const {
    const int n = x.val().dim(0);
    Var flat = reshape(x, {n, h * wdt});
    return dense(flat, t.input(w, false), t.input(b, false));
  }

  Tensor logits_values(const Tensor& x) const {
    Tape t;
    Var xv = t.input(x, false);
    return logits(t, xv).val();
  }

  AttackTarget target() const {
    AttackTarget tgt;
    tgt.loss = [this](Tape& t, Var x, const std::vector<int>& y) {
      return cross_entropy(logits(t, x), y, Reduction::Sum);
    };
    tgt.logits = [this](const Tensor& x) { return logits_values(x); };
    return tgt;
  }
};

}  // namespace

TEST_CASE("fgsm with zero radius returns the input exactly") {
  Rng rng(21);
  ToyClassifier clf(4, 3, rng);
  const Tensor x = rng.uniform_tensor({2, 1, 4, 4}, 0.1, 0.9);
  AttackSpec spec;
  spec.family = AttackFamily::Fgsm;
  spec.epsilon = 0.0;
  AttackLossFn loss = [&](Tape& t, Var xv) {
    return cross_entropy(clf.logits(t, xv), {0, 1}, Reduction::Sum);
  };
  const Tensor adv = fgsm(loss, x, spec);
  CHECK(max_abs_diff(adv, x) == 0.0);
}

TEST_CASE("fgsm follows the hand-computed signed gradient on a scalar") {
  // L = (w*x - t)^2 with w=1, x=0.4, t=0: dL/dx = 0.8 > 0, so x + 0.1 = 0.5.
  AttackLossFn loss = [](Tape& t, Var xv) { return mse(xv, t.input(Tensor({1}))); };
  AttackSpec spec;
  spec.family = AttackFamily::Fgsm;
  spec.epsilon = 0.1;
  const Tensor adv = fgsm(loss, Tensor({1}, {0.4}), spec);
  CHECK(adv[0] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("pgd iterates stay inside the ball and the pixel range") {
  Rng rng(22);
  ToyClassifier clf(4, 3, rng);
  AttackTarget target = clf.target();
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor x = rng.uniform_tensor({3, 1, 4, 4}, 0.0, 1.0);
    std::vector<int> y = {rng.below(3), rng.below(3), rng.below(3)};
    AttackSpec spec;
    spec.family = AttackFamily::Pgd;
    spec.epsilon = rng.uniform(0.01, 0.4);
    spec.iterations = 1 + rng.below(6);
    // full-size steps, so the unprojected walk would leave the ball
    spec.epsilon_step = spec.epsilon;
    const Tensor adv = attack_batch(target, x, y, LabelSource::GroundTruth, spec);
    for (int i = 0; i < adv.numel(); ++i) {
      CHECK(std::fabs(adv[i] - x[i]) <= spec.epsilon + 1e-9);
      CHECK(adv[i] >= 0.0);
      CHECK(adv[i] <= 1.0);
    }
  }
}

TEST_CASE("pgd with one full-size step is bitwise fgsm") {
  Rng rng(23);
  ToyClassifier clf(5, 4, rng);
  const Tensor x = rng.uniform_tensor({2, 1, 5, 5}, 0.0, 1.0);
  AttackLossFn loss = [&](Tape& t, Var xv) {
    return cross_entropy(clf.logits(t, xv), {1, 2}, Reduction::Sum);
  };
  AttackSpec spec;
  spec.family = AttackFamily::Fgsm;
  spec.epsilon = 0.07;
  const Tensor a = fgsm(loss, x, spec);
  spec.family = AttackFamily::Pgd;
  spec.epsilon_step = spec.epsilon;
  spec.iterations = 1;
  const Tensor b = pgd(loss, x, spec);
  REQUIRE(a.numel() == b.numel());
  for (int i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("attack family none returns the batch unchanged") {
  Rng rng(24);
  ToyClassifier clf(4, 2, rng);
  const Tensor x = rng.uniform_tensor({3, 1, 4, 4}, 0.0, 1.0);
  AttackSpec spec;  // family None
  const Tensor out = attack_batch(clf.target(), x, {0, 1, 0}, LabelSource::GroundTruth, spec);
  CHECK(max_abs_diff(out, x) == 0.0);
}

TEST_CASE("attack_batch rejects an empty batch") {
  Rng rng(25);
  ToyClassifier clf(4, 2, rng);
  AttackSpec spec;
  spec.family = AttackFamily::Fgsm;
  spec.epsilon = 0.1;
  CHECK_THROWS_WITH_AS(
      attack_batch(clf.target(), Tensor({0, 1, 4, 4}), {}, LabelSource::GroundTruth, spec),
      doctest::Contains("empty"), std::runtime_error);
}

TEST_CASE("model-prediction labeling matches an independent argmax") {
  Rng rng(26);
  ToyClassifier clf(4, 5, rng);
  const Tensor x = rng.uniform_tensor({6, 1, 4, 4}, 0.0, 1.0);
  const Tensor logits = clf.logits_values(x);
  std::vector<int> oracle(6);
  for (int i = 0; i < 6; ++i) {
    int best = 0;
    for (int j = 1; j < 5; ++j)
      if (logits[i * 5 + j] > logits[i * 5 + best]) best = j;
    oracle[static_cast<size_t>(i)] = best;
  }
  AttackSpec spec;
  spec.family = AttackFamily::Fgsm;
  spec.epsilon = 0.05;
  const Tensor via_pred = attack_batch(clf.target(), x, {}, LabelSource::ModelPrediction, spec);
  const Tensor via_oracle = attack_batch(clf.target(), x, oracle, LabelSource::GroundTruth, spec);
  CHECK(max_abs_diff(via_pred, via_oracle) == 0.0);
}

TEST_CASE("fgsm ascends the loss for most samples of a smooth model") {
  Rng rng(27);
  ToyClassifier clf(5, 3, rng);
  const int n = 40;
  const Tensor x = rng.uniform_tensor({n, 1, 5, 5}, 0.2, 0.8);
  std::vector<int> y(static_cast<size_t>(n));
  for (int& l : y) l = rng.below(3);
  AttackSpec spec;
  spec.family = AttackFamily::Fgsm;
  spec.epsilon = 0.01;
  const Tensor adv = attack_batch(clf.target(), x, y, LabelSource::GroundTruth, spec);

  auto per_sample_ce = [&](const Tensor& batch) {
    const Tensor logits = clf.logits_values(batch);
    std::vector<double> ce(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      std::vector<double> row(logits.data() + i * 3, logits.data() + (i + 1) * 3);
      ce[static_cast<size_t>(i)] =
          -std::log(softmax_vec(row)[static_cast<size_t>(y[static_cast<size_t>(i)])]);
    }
    return ce;
  };
  const auto before = per_sample_ce(x);
  const auto after = per_sample_ce(adv);
  int ascended = 0;
  for (size_t i = 0; i < static_cast<size_t>(n); ++i)
    if (after[i] >= before[i]) ++ascended;
  CHECK(ascended >= (n * 9) / 10);
}

TEST_CASE("attack generation leaves model parameters untouched") {
  Rng rng(28);
  ArchConfig arch = osdn::testing::tiny_arch(8, 3, true, true);
  OsdnModel model = OsdnModel::init(arch, rng);
  const ParamSet before = model.params();

  const Tensor x = rng.uniform_tensor({2, 1, 8, 8}, 0.0, 1.0);
  AttackSpec spec;
  spec.family = AttackFamily::Pgd;
  spec.epsilon = 0.1;
  spec.epsilon_step = 0.03;
  spec.iterations = 3;
  (void)attack_batch(classification_target(model), x, {0, 1}, LabelSource::GroundTruth, spec);
  (void)attack_batch(rotation_target(model), x, {2, 3}, LabelSource::GroundTruth, spec);

  REQUIRE(model.params().size() == before.size());
  for (int i = 0; i < before.size(); ++i)
    CHECK(max_abs_diff(model.params()[i], before[i]) == 0.0);
}

TEST_CASE("attacks are deterministic given identical inputs") {
  Rng rng(29);
  ToyClassifier clf(4, 3, rng);
  const Tensor x = rng.uniform_tensor({2, 1, 4, 4}, 0.0, 1.0);
  AttackSpec spec;
  spec.family = AttackFamily::Pgd;
  spec.epsilon = 0.2;
  spec.epsilon_step = 0.05;
  spec.iterations = 4;
  const Tensor a = attack_batch(clf.target(), x, {0, 2}, LabelSource::GroundTruth, spec);
  const Tensor b = attack_batch(clf.target(), x, {0, 2}, LabelSource::GroundTruth, spec);
  for (int i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("non-finite attack gradients raise an error naming the sample") {
  AttackLossFn loss = [](Tape& t, Var xv) {
    Var big = scale(scale(xv, 1e200), 1e200);  // overflows to inf
    return mse(big, t.input(Tensor({2, 1, 2, 2})));
  };
  AttackSpec spec;
  spec.family = AttackFamily::Fgsm;
  spec.epsilon = 0.1;
  Rng rng(30);
  CHECK_THROWS_WITH_AS(fgsm(loss, rng.uniform_tensor({2, 1, 2, 2}, 0.5, 1.0), spec),
                       doctest::Contains("batch index"), std::runtime_error);
}

TEST_CASE("attack spec validation rejects bad parameters") {
  AttackSpec spec;
  spec.family = AttackFamily::Pgd;
  spec.epsilon = 0.1;
  spec.epsilon_step = 0.2;  // step > epsilon
  spec.iterations = 5;
  CHECK_THROWS_AS(spec.validate(), std::runtime_error);
  spec.epsilon_step = 0.02;
  spec.iterations = 0;
  CHECK_THROWS_AS(spec.validate(), std::runtime_error);
  spec.iterations = 5;
  spec.pixel_lo = 1.0;
  spec.pixel_hi = 0.0;
  CHECK_THROWS_AS(spec.validate(), std::runtime_error);
}
