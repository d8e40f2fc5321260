#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "osdn/openmax.hpp"
#include "osdn/ops.hpp"
#include "osdn/training.hpp"
#include "test_support.hpp"

using namespace osdn;
using osdn::testing::TempDir;

namespace {

std::vector<double> weibull_samples(int n, double shape, double scale, Rng& rng) {
  std::vector<double> xs(static_cast<size_t>(n));
  for (double& x : xs) {
    const double u = rng.uniform();
    x = scale * std::pow(-std::log(1.0 - u), 1.0 / shape);
  }
  return xs;
}

}  // namespace

TEST_CASE("compute_mav averages latent vectors") {
  CHECK_THROWS_AS(compute_mav({}), std::runtime_error);
  const std::vector<double> single = {1.0, 2.0, 3.0};
  CHECK(compute_mav({single}) == single);
  const auto two = compute_mav({{1.0, 0.0}, {3.0, 4.0}});
  CHECK(two[0] == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(two[1] == doctest::Approx(2.0).epsilon(1e-15));

  // 100 random vectors against an independent streaming mean
  Rng rng(71);
  std::vector<std::vector<double>> latents;
  std::vector<double> stream(5, 0.0);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> v(5);
    for (double& e : v) e = rng.uniform(-10, 10);
    for (size_t k = 0; k < 5; ++k) stream[k] += (v[k] - stream[k]) / (i + 1.0);
    latents.push_back(std::move(v));
  }
  const auto mav = compute_mav(latents);
  for (size_t k = 0; k < 5; ++k) CHECK(std::fabs(mav[k] - stream[k]) < 1e-12);
}

TEST_CASE("weibull fit recovers sampled parameters") {
  Rng rng(72);
  {
    const auto xs = weibull_samples(2000, 2.0, 1.0, rng);
    const WeibullFit fit = fit_weibull_tail(xs, 2000);
    CHECK(std::fabs(fit.shape - 2.0) < 0.15);
    CHECK(std::fabs(fit.scale - 1.0) < 0.05);
  }
  {
    // exponential data is Weibull with shape 1
    const auto xs = weibull_samples(2000, 1.0, 2.5, rng);
    const WeibullFit fit = fit_weibull_tail(xs, 2000);
    CHECK(std::fabs(fit.shape - 1.0) < 0.1);
  }
}

TEST_CASE("weibull fit of two points is a local likelihood optimum") {
  const std::vector<double> xs = {1.0, 2.0};
  const WeibullFit fit = fit_weibull_tail(xs, 2);
  CHECK(fit.shape > 0.0);
  CHECK(fit.scale > 0.0);
  CHECK(std::isfinite(fit.shape));
  CHECK(std::isfinite(fit.scale));
  const double best = weibull_log_likelihood(xs, fit.shape, fit.scale);
  int neighbors = 0;
  for (double ds : {-0.02, -0.01, 0.01, 0.02})
    for (double dl : {-0.02, -0.01, 0.01, 0.02}) {
      CHECK(best >= weibull_log_likelihood(xs, fit.shape * (1.0 + ds), fit.scale * (1.0 + dl)) -
                        1e-9);
      ++neighbors;
    }
  for (double ds : {-0.02, -0.01, 0.01, 0.02}) {
    CHECK(best >= weibull_log_likelihood(xs, fit.shape * (1.0 + ds), fit.scale) - 1e-9);
    CHECK(best >= weibull_log_likelihood(xs, fit.shape, fit.scale * (1.0 + ds)) - 1e-9);
    neighbors += 2;
  }
  CHECK(neighbors >= 24);
  // degenerate tail falls back to the documented cap
  const WeibullFit degenerate = fit_weibull_tail({5.0, 5.0, 5.0}, 3);
  CHECK(degenerate.shape == 100.0);
  CHECK(degenerate.scale == 5.0);
}

TEST_CASE("weibull fit only uses the tail and validates input") {
  Rng rng(73);
  auto xs = weibull_samples(500, 2.0, 1.0, rng);
  // tail restriction: result must equal fitting the largest k values
  auto sorted = xs;
  std::sort(sorted.begin(), sorted.end(), std::greater<double>());
  sorted.resize(100);
  const WeibullFit full = fit_weibull_tail(xs, 100);
  const WeibullFit tail_only = fit_weibull_tail(sorted, 100);
  CHECK(full.shape == doctest::Approx(tail_only.shape).epsilon(1e-12));
  CHECK(full.scale == doctest::Approx(tail_only.scale).epsilon(1e-12));

  CHECK_THROWS_AS(fit_weibull_tail({1.0}, 2), std::runtime_error);
  CHECK_THROWS_AS(fit_weibull_tail({1.0, -2.0, 3.0}, 2), std::runtime_error);
  CHECK_THROWS_AS(fit_weibull_tail({1.0, 2.0}, 1), std::runtime_error);
}

TEST_CASE("weibull fit is scale-equivariant") {
  Rng rng(74);
  const auto xs = weibull_samples(400, 1.7, 0.8, rng);
  const WeibullFit base = fit_weibull_tail(xs, 200);
  for (double k : {0.001, 0.5, 3.0, 1200.0}) {
    auto scaled = xs;
    for (double& x : scaled) x *= k;
    const WeibullFit fit = fit_weibull_tail(scaled, 200);
    CHECK(std::fabs(fit.shape - base.shape) <= 1e-6 * base.shape);
    CHECK(std::fabs(fit.scale - k * base.scale) <= 1e-6 * k * base.scale);
  }
}

TEST_CASE("belief weights follow the rank and distance rules") {
  const int c = 4;
  std::vector<WeibullClassModel> models(c);
  for (int i = 0; i < c; ++i) {
    models[static_cast<size_t>(i)].class_id = i;
    models[static_cast<size_t>(i)].mu = {static_cast<double>(i), 0.0};
    models[static_cast<size_t>(i)].shape = 2.0;
    models[static_cast<size_t>(i)].scale = 1.0;
  }
  const std::vector<double> logits = {4.0, 3.0, 2.0, 1.0};  // ranks 1..4

  SUBCASE("classes ranked beyond sigma keep weight exactly one") {
    const auto w = belief_weights({0.0, 0.0}, logits, models, 2);
    CHECK(w[2] == 1.0);
    CHECK(w[3] == 1.0);
    CHECK(w[0] < 1.0);
  }
  SUBCASE("zero distance kills the top-class belief for any sigma") {
    for (int sigma : {1, 2, 4}) {
      const auto w = belief_weights({0.0, 0.0}, logits, models, sigma);
      CHECK(w[0] == doctest::Approx(0.0).epsilon(1e-15));
    }
  }
  SUBCASE("unit normalized distance at shape 2 gives 1 - 1/e") {
    // top-ranked class, distance equal to the scale, shape 2
    const auto w = belief_weights({1.0, 0.0}, {9.0, -1.0, -2.0, -3.0}, models, 3);
    CHECK(w[0] == doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-12));
    CHECK(std::fabs(w[0] - 0.6321205588285577) < 1e-12);
  }
}

TEST_CASE("openmax probabilities form a simplex and match the brute force") {
  Rng rng(75);
  const int c = 3, d = 4;
  std::vector<WeibullClassModel> models(c);
  for (int i = 0; i < c; ++i) {
    WeibullClassModel& m = models[static_cast<size_t>(i)];
    m.class_id = i;
    m.mu.assign(d, 0.0);
    for (double& v : m.mu) v = rng.uniform(-1, 1);
    m.shape = rng.uniform(0.8, 4.0);
    m.scale = rng.uniform(0.3, 2.0);
  }
  const int sigma = 2;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> logits(c), latent(d);
    for (double& l : logits) l = rng.uniform(-3, 3);
    for (double& v : latent) v = rng.uniform(-2, 2);
    const auto probs = openmax_probs(logits, latent, models, sigma);

    REQUIRE(probs.size() == static_cast<size_t>(c + 1));
    double sum = 0.0;
    for (double p : probs) {
      CHECK(p >= 0.0);
      sum += p;
    }
    CHECK(std::fabs(sum - 1.0) < 1e-9);

    // independent recomputation from the written-out formulas
    std::vector<size_t> order = {0, 1, 2};
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return logits[a] > logits[b]; });
    std::vector<double> revised(static_cast<size_t>(c + 1), 0.0);
    double open_logit = 0.0;
    for (size_t pos = 0; pos < order.size(); ++pos) {
      const size_t i = order[pos];
      double dist = 0.0;
      for (int k = 0; k < d; ++k)
        dist += (latent[static_cast<size_t>(k)] - models[i].mu[static_cast<size_t>(k)]) *
                (latent[static_cast<size_t>(k)] - models[i].mu[static_cast<size_t>(k)]);
      dist = std::sqrt(dist);
      const double coef = std::max(0.0, (sigma - static_cast<double>(pos)) / sigma);
      const double w = 1.0 - coef * std::exp(-std::pow(dist / models[i].scale, models[i].shape));
      revised[i] = logits[i] * w;
      open_logit += logits[i] * (1.0 - w);
    }
    revised[static_cast<size_t>(c)] = open_logit;
    double mx = revised[0];
    for (double r : revised) mx = std::max(mx, r);
    double norm = 0.0;
    for (double r : revised) norm += std::exp(r - mx);
    for (int i = 0; i <= c; ++i) {
      const double expect = std::exp(revised[static_cast<size_t>(i)] - mx) / norm;
      CHECK(std::fabs(probs[static_cast<size_t>(i)] - expect) < 1e-10);
    }
  }
}

TEST_CASE("with all beliefs at one, openmax is softmax with a zero open logit") {
  // distances big enough that exp(-(d/eta)^m) underflows to exactly zero
  const int c = 3;
  std::vector<WeibullClassModel> models(c);
  for (int i = 0; i < c; ++i) {
    WeibullClassModel& m = models[static_cast<size_t>(i)];
    m.class_id = i;
    m.mu = {1000.0, 1000.0};
    m.shape = 4.0;
    m.scale = 0.01;
  }
  const std::vector<double> logits = {1.25, -0.5, 0.75};
  const std::vector<double> latent = {0.0, 0.0};
  const auto w = belief_weights(latent, logits, models, 2);
  for (double wi : w) CHECK(wi == 1.0);
  const auto probs = openmax_probs(logits, latent, models, 2);
  std::vector<double> reference = logits;
  reference.push_back(0.0);
  const auto expected = softmax_vec(reference);
  for (size_t i = 0; i < expected.size(); ++i) CHECK(probs[i] == expected[i]);
}

TEST_CASE("top-class revision weakens with distance") {
  // The belief weight uses the Weibull survival function, so the revision of
  // the top logit is strongest at zero distance and fades as the latent
  // moves away from the class mean; the open-class probability follows.
  const int c = 3;
  std::vector<WeibullClassModel> models(c);
  for (int i = 0; i < c; ++i) {
    WeibullClassModel& m = models[static_cast<size_t>(i)];
    m.class_id = i;
    m.mu = {0.0};
    m.shape = 2.0;
    m.scale = 1.0;
  }
  const std::vector<double> logits = {3.0, 1.0, 0.5};
  double last_w = -1.0, last_open = 2.0;
  for (double dist : {0.0, 0.5, 1.0, 2.0, 4.0}) {
    const auto w = belief_weights({dist}, logits, models, 1);
    CHECK(w[0] >= last_w - 1e-12);  // belief grows with distance
    last_w = w[0];
    const auto probs = openmax_probs(logits, {dist}, models, 1);
    CHECK(probs[3] <= last_open + 1e-12);  // shaved-off open mass shrinks
    last_open = probs[3];
  }
}

TEST_CASE("held-out same-cluster distances land mid-distribution") {
  // Gaussian cluster latents: fit on half (full-sample fit, so the CDF of a
  // typical distance is informative), check the median CDF of the rest.
  Rng rng(76);
  const int d = 6;
  std::vector<double> fit_dists, held_dists;
  for (int i = 0; i < 400; ++i) {
    double sq = 0.0;
    for (int k = 0; k < d; ++k) {
      const double z = rng.normal(0.0, 0.7);
      sq += z * z;
    }
    (i % 2 == 0 ? fit_dists : held_dists).push_back(std::sqrt(sq));
  }
  const WeibullFit fit = fit_weibull_tail(fit_dists, static_cast<int>(fit_dists.size()));
  std::vector<double> cdf;
  for (double x : held_dists)
    cdf.push_back(1.0 - std::exp(-std::pow(x / fit.scale, fit.shape)));
  std::nth_element(cdf.begin(), cdf.begin() + static_cast<long>(cdf.size() / 2), cdf.end());
  const double median = cdf[cdf.size() / 2];
  CHECK(median > 0.2);
  CHECK(median < 0.8);
}

TEST_CASE("calibrate fits one model per class from a trained network") {
  Rng rng(77);
  const LabeledSet data = osdn::testing::shape_set(3, 20, 321);
  ArchConfig arch = osdn::testing::tiny_arch(16, 3);
  arch.channels = {4, 8, 12, 16};
  OsdnModel model = OsdnModel::init(arch, rng);
  TrainConfig tc;
  tc.loss.rec = false;
  tc.loss.ssd = false;
  tc.epochs = 12;
  tc.batch_size = 12;
  tc.adam.lr = 3e-3;
  tc.val_attacked = false;
  TrainResult result = train(std::move(model), data, data, tc, rng);
  REQUIRE(result.best_val_accuracy > 0.9);

  OpenMaxConfig cfg;
  cfg.tail_size = 5;
  const Calibration cal = calibrate(result.best_model, data.x, data.labels, cfg);
  CHECK(cal.models.size() == 3);
  for (const WeibullClassModel& m : cal.models) {
    CHECK(m.shape > 0.0);
    CHECK(m.scale > 0.0);
    CHECK(std::isfinite(m.shape));
    CHECK(std::isfinite(m.scale));
    CHECK(m.mu.size() == static_cast<size_t>(result.best_model.arch().latent_dim()));
  }

  SUBCASE("calibration files round-trip exactly") {
    TempDir dir("cal");
    const std::string path = (dir.path / "calibration").string();
    cal.save(path);
    const Calibration loaded = Calibration::load(path);
    REQUIRE(loaded.models.size() == cal.models.size());
    CHECK(loaded.sigma == cal.sigma);
    CHECK(loaded.threshold == cal.threshold);
    for (size_t i = 0; i < cal.models.size(); ++i) {
      CHECK(loaded.models[i].class_id == cal.models[i].class_id);
      CHECK(loaded.models[i].tail_size == cal.models[i].tail_size);
      CHECK(loaded.models[i].shape == cal.models[i].shape);
      CHECK(loaded.models[i].scale == cal.models[i].scale);
      CHECK(loaded.models[i].mu == cal.models[i].mu);
    }
  }

  SUBCASE("a class with no correct predictions is reported") {
    std::vector<int> broken = data.labels;
    for (int& l : broken) l = 0;  // classes 1 and 2 can have no correct samples
    CHECK_THROWS_WITH_AS(calibrate(result.best_model, data.x, broken, cfg),
                         doctest::Contains("class"), std::runtime_error);
  }
}
