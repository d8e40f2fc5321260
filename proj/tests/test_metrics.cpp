#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "osdn/metrics.hpp"
#include "osdn/rng.hpp"

using namespace osdn;

namespace {

// Exhaustive pair counting: open scores above known count 1, ties 0.5.
double brute_force_auc(const std::vector<double>& known, const std::vector<double>& open) {
  double wins = 0.0;
  for (double o : open)
    for (double k : known) {
      if (o > k)
        wins += 1.0;
      else if (o == k)
        wins += 0.5;
    }
  return wins / (static_cast<double>(known.size()) * static_cast<double>(open.size()));
}

}  // namespace

TEST_CASE("auc is 1 for separated scores and exactly half for full ties") {
  CHECK(auc_from_scores({0.1, 0.2, 0.3}, {0.7, 0.8}) == 1.0);
  CHECK(auc_from_scores({0.7, 0.8}, {0.1, 0.2, 0.3}) == 0.0);
  CHECK(auc_from_scores({0.5, 0.5, 0.5}, {0.5, 0.5}) == 0.5);
}

TEST_CASE("auc equals exhaustive pair counting on the six-four case") {
  const std::vector<double> known = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
  const std::vector<double> open = {0.35, 0.55, 0.7, 0.8};
  const double expected = brute_force_auc(known, open);
  CHECK(auc_from_scores(known, open) == expected);
  CHECK(expected == doctest::Approx(20.0 / 24.0));  // 3 + 5 + 6 + 6 winning pairs
}

TEST_CASE("auc equals exhaustive pair counting on random tied grids") {
  Rng rng(91);
  for (int trial = 0; trial < 50; ++trial) {
    const int nk = 1 + rng.below(30), no = 1 + rng.below(30);
    std::vector<double> known(static_cast<size_t>(nk)), open(static_cast<size_t>(no));
    // grid scores force plenty of exact ties
    for (double& s : known) s = rng.below(16) / 16.0;
    for (double& s : open) s = rng.below(16) / 16.0;
    CHECK(auc_from_scores(known, open) == brute_force_auc(known, open));
  }
}

TEST_CASE("auc is invariant under strictly increasing transforms") {
  Rng rng(92);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> known(10), open(8);
    for (double& s : known) s = rng.below(64) / 64.0;
    for (double& s : open) s = rng.below(64) / 64.0;
    const double base = auc_from_scores(known, open);
    auto apply = [&](auto f) {
      std::vector<double> k2 = known, o2 = open;
      for (double& s : k2) s = f(s);
      for (double& s : o2) s = f(s);
      return auc_from_scores(k2, o2);
    };
    CHECK(apply([](double s) { return 2.0 * s + 1.0; }) == base);
    CHECK(apply([](double s) { return std::exp(s); }) == base);
    CHECK(apply([](double s) { return s * s * s; }) == base);
  }
}

TEST_CASE("swapping the score sets complements the auc") {
  Rng rng(93);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> known(12), open(9);
    for (double& s : known) s = rng.below(32) / 32.0;
    for (double& s : open) s = rng.below(32) / 32.0;
    const double a = auc_from_scores(known, open);
    const double b = auc_from_scores(open, known);
    CHECK(std::fabs(a + b - 1.0) < 1e-12);
  }
}

TEST_CASE("auc rejects empty score sets") {
  CHECK_THROWS_AS(auc_from_scores({}, {0.5}), std::runtime_error);
  CHECK_THROWS_AS(auc_from_scores({0.5}, {}), std::runtime_error);
}

TEST_CASE("macro f1 matches hand-computed confusion matrices") {
  struct Case {
    std::vector<std::vector<int>> confusion;
    double expected;
  };
  // per-class f1 = 2tp / (2tp + fp + fn), macro = mean over classes
  const std::vector<Case> cases = {
      // all correct, two classes
      {{{5, 0}, {0, 7}}, 1.0},
      // all correct including the open class
      {{{3, 0, 0}, {0, 4, 0}, {0, 0, 5}}, 1.0},
      // everything wrong
      {{{0, 4}, {6, 0}}, 0.0},
      // one-sided: f1_0 = 2*3/(2*3+1) = 6/7, f1_1 = 2*2/(2*2+1) = 4/5
      {{{3, 1}, {0, 2}}, 0.5 * (6.0 / 7.0 + 4.0 / 5.0)},
      // diagonal plus uniform confusion
      {{{2, 1, 1}, {1, 2, 1}, {1, 1, 2}}, (2.0 * 2.0 / (2.0 * 2.0 + 4.0))},
      // empty predicted class: f1_1 = 0 (2*0/(0+0+3))
      {{{4, 0}, {3, 0}}, 0.5 * (2.0 * 4.0 / (2.0 * 4.0 + 3.0))},
      // class with no support and no predictions scores 0
      {{{4, 0, 0}, {0, 5, 0}, {0, 0, 0}}, (1.0 + 1.0 + 0.0) / 3.0},
      // skewed three-class
      {{{5, 2, 0}, {1, 3, 1}, {0, 2, 4}},
       (2.0 * 5 / (10 + 2 + 1) + 2.0 * 3 / (6 + 4 + 2) + 2.0 * 4 / (8 + 1 + 2)) / 3.0},
      // single class, all correct
      {{{9}}, 1.0},
      // open-class recall failure: f1_open = 2*1/(2*1+0+4)
      {{{6, 0}, {4, 1}}, 0.5 * (2.0 * 6 / (12 + 4) + 2.0 * 1 / (2 + 4))},
  };
  for (const Case& c : cases) {
    const F1Result r = macro_f1_from_confusion(c.confusion);
    CHECK(r.macro_f1 == doctest::Approx(c.expected).epsilon(1e-15));
  }
}

TEST_CASE("micro accuracy from a confusion matrix is trace over total") {
  // 10 samples, 7 on the diagonal
  const std::vector<std::vector<int>> confusion = {{4, 1, 0}, {1, 2, 0}, {0, 1, 1}};
  int trace = 0, total = 0;
  for (size_t i = 0; i < confusion.size(); ++i)
    for (size_t j = 0; j < confusion.size(); ++j) {
      total += confusion[i][j];
      if (i == j) trace += confusion[i][j];
    }
  CHECK(total == 10);
  CHECK(trace == 7);
  CHECK(static_cast<double>(trace) / total == doctest::Approx(0.7));
  // and the per-class f1 values come from the same matrix consistently
  const F1Result r = macro_f1_from_confusion(confusion);
  CHECK(r.per_class.size() == 3);
  for (double f1 : r.per_class) {
    CHECK(f1 >= 0.0);
    CHECK(f1 <= 1.0);
  }
}

TEST_CASE("aggregate reports mean and sample deviation") {
  const Aggregate same = aggregate({0.8, 0.8, 0.8});
  CHECK(same.mean == doctest::Approx(0.8));
  CHECK(same.stddev == 0.0);
  const Aggregate mixed = aggregate({0.5, 0.7, 0.9});
  CHECK(mixed.mean == doctest::Approx(0.7));
  CHECK(mixed.stddev == doctest::Approx(0.2));
  const Aggregate single = aggregate({0.3});
  CHECK(single.stddev == 0.0);
  CHECK_THROWS_AS(aggregate({}), std::runtime_error);
}

TEST_CASE("metrics reports round-trip through json") {
  MetricsReport r;
  r.closed_set_accuracy = 0.8125;
  r.clean_closed_set_accuracy = 0.9375;
  r.auc_roc = 0.7421875;
  r.clean_auc_roc = 0.8046875;
  r.macro_f1 = 0.5;
  r.per_class_f1 = {1.0, 0.25, 0.3125};
  r.n_known = 90;
  r.n_open = 60;
  r.attack = "pgd";
  r.split_id = 2;
  r.seed = 12345;
  const std::string path =
      (std::filesystem::temp_directory_path() / "osdn_metrics_test.json").string();
  write_metrics_json(path, r);
  const MetricsReport back = read_metrics_json(path);
  CHECK(back.closed_set_accuracy == r.closed_set_accuracy);
  CHECK(back.clean_closed_set_accuracy == r.clean_closed_set_accuracy);
  CHECK(back.auc_roc == r.auc_roc);
  CHECK(back.clean_auc_roc == r.clean_auc_roc);
  CHECK(back.macro_f1 == r.macro_f1);
  CHECK(back.per_class_f1 == r.per_class_f1);
  CHECK(back.n_known == r.n_known);
  CHECK(back.n_open == r.n_open);
  CHECK(back.attack == r.attack);
  CHECK(back.split_id == r.split_id);
  CHECK(back.seed == r.seed);
  std::filesystem::remove(path);
}
