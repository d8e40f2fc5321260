#include "osdn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>

#include <json.hpp>

namespace osdn {

double closed_set_accuracy(const OsdnModel& model, const Calibration& cal,
                           const LabeledSet& attacked_known) {
  require(attacked_known.size() > 0, "closed_set_accuracy: empty set");
  const Tensor probs = openmax_batch(model, cal, attacked_known.x);
  const int n = probs.dim(0), width = probs.dim(1);
  const int c = width - 1;
  int correct = 0;
  for (int i = 0; i < n; ++i) {
    int best = 0;
    for (int j = 1; j < c; ++j)
      if (probs[i * width + j] > probs[i * width + best]) best = j;
    if (best == attacked_known.labels[static_cast<size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / n;
}

std::vector<double> openset_scores(const OsdnModel& model, const Calibration& cal,
                                   const Tensor& x, OpenScoreKind kind) {
  const Tensor probs = openmax_batch(model, cal, x);
  const int n = probs.dim(0), width = probs.dim(1);
  const int c = width - 1;
  std::vector<double> scores(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    if (kind == OpenScoreKind::OpenProbability) {
      scores[static_cast<size_t>(i)] = probs[i * width + c];
    } else {
      double mx = probs[i * width + 0];
      for (int j = 1; j < c; ++j) mx = std::max(mx, probs[i * width + j]);
      scores[static_cast<size_t>(i)] = 1.0 - mx;
    }
  }
  return scores;
}

double auc_from_scores(const std::vector<double>& known_scores,
                       const std::vector<double>& open_scores) {
  const size_t nk = known_scores.size(), no = open_scores.size();
  require(nk > 0 && no > 0, "auc: both score sets must be non-empty");

  struct Item {
    double score;
    bool open;
  };
  std::vector<Item> items;
  items.reserve(nk + no);
  for (double s : known_scores) items.push_back({s, false});
  for (double s : open_scores) items.push_back({s, true});
  std::stable_sort(items.begin(), items.end(),
                   [](const Item& a, const Item& b) { return a.score < b.score; });

  // Average ranks over tied runs, 1-based.
  double rank_sum_open = 0.0;
  size_t i = 0;
  while (i < items.size()) {
    size_t j = i;
    while (j < items.size() && items[j].score == items[i].score) ++j;
    const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (size_t k = i; k < j; ++k)
      if (items[k].open) rank_sum_open += avg_rank;
    i = j;
  }
  const double u = rank_sum_open - static_cast<double>(no) * (static_cast<double>(no) + 1.0) / 2.0;
  return u / (static_cast<double>(no) * static_cast<double>(nk));
}

double openset_auc(const OsdnModel& model, const Calibration& cal, const LabeledSet& known,
                   const LabeledSet& open, OpenScoreKind kind) {
  require(known.size() > 0 && open.size() > 0, "openset_auc: empty set");
  return auc_from_scores(openset_scores(model, cal, known.x, kind),
                         openset_scores(model, cal, open.x, kind));
}

F1Result macro_f1_from_confusion(const std::vector<std::vector<int>>& confusion) {
  const size_t k = confusion.size();
  require(k > 0, "macro_f1: empty confusion matrix");
  for (const auto& row : confusion)
    require(row.size() == k, "macro_f1: confusion matrix must be square");

  F1Result out;
  out.per_class.resize(k, 0.0);
  double sum = 0.0;
  for (size_t c = 0; c < k; ++c) {
    long tp = confusion[c][c];
    long fp = 0, fn = 0;
    for (size_t o = 0; o < k; ++o) {
      if (o == c) continue;
      fp += confusion[o][c];
      fn += confusion[c][o];
    }
    const long denom = 2 * tp + fp + fn;
    const double f1 = denom > 0 ? 2.0 * static_cast<double>(tp) / static_cast<double>(denom) : 0.0;
    out.per_class[c] = f1;
    sum += f1;
  }
  out.macro_f1 = sum / static_cast<double>(k);
  return out;
}

F1Result ood_macro_f1(const OsdnModel& model, const Calibration& cal, const LabeledSet& in_dist,
                      const LabeledSet& out_dist, double threshold) {
  require(in_dist.size() > 0 && out_dist.size() > 0, "ood_macro_f1: empty set");
  require(threshold > 0.0 && threshold < 1.0, "ood_macro_f1: threshold must be in (0,1)");
  const int c = static_cast<int>(cal.models.size());
  std::vector<std::vector<int>> confusion(static_cast<size_t>(c + 1),
                                          std::vector<int>(static_cast<size_t>(c + 1), 0));

  auto decide = [&](const Tensor& probs, int row, int true_class) {
    const int width = c + 1;
    double max_known = probs[row * width];
    int best = 0;
    for (int j = 1; j < c; ++j)
      if (probs[row * width + j] > max_known) {
        max_known = probs[row * width + j];
        best = j;
      }
    const double open_p = probs[row * width + c];
    const int pred = (open_p > max_known || max_known < threshold) ? c : best;
    confusion[static_cast<size_t>(true_class)][static_cast<size_t>(pred)] += 1;
  };

  const Tensor in_probs = openmax_batch(model, cal, in_dist.x);
  for (int i = 0; i < in_dist.size(); ++i)
    decide(in_probs, i, in_dist.labels[static_cast<size_t>(i)]);
  const Tensor out_probs = openmax_batch(model, cal, out_dist.x);
  for (int i = 0; i < out_dist.size(); ++i) decide(out_probs, i, c);

  return macro_f1_from_confusion(confusion);
}

Aggregate aggregate(const std::vector<double>& values) {
  require(!values.empty(), "aggregate: no values");
  Aggregate a;
  bool all_equal = true;
  for (double v : values) {
    a.mean += v;
    all_equal = all_equal && v == values[0];
  }
  a.mean /= static_cast<double>(values.size());
  if (all_equal) {  // identical inputs get an exact zero deviation
    a.mean = values[0];
    return a;
  }
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - a.mean) * (v - a.mean);
    a.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return a;
}

// --- serialization -------------------------------------------------------

using nlohmann::json;

void write_metrics_json(const std::string& path, const MetricsReport& r) {
  json j;
  j["closed_set_accuracy"] = r.closed_set_accuracy;
  j["clean_closed_set_accuracy"] = r.clean_closed_set_accuracy;
  j["auc_roc"] = r.auc_roc;
  j["clean_auc_roc"] = r.clean_auc_roc;
  j["macro_f1"] = r.macro_f1;
  j["per_class_f1"] = r.per_class_f1;
  j["n_known"] = r.n_known;
  j["n_open"] = r.n_open;
  j["attack"] = r.attack;
  j["split_id"] = r.split_id;
  j["seed"] = r.seed;
  std::ofstream os(path);
  require(os.good(), "metrics: cannot write " + path);
  os << j.dump(2) << '\n';
}

MetricsReport read_metrics_json(const std::string& path) {
  std::ifstream is(path);
  require(is.good(), "metrics: cannot read " + path);
  json j;
  is >> j;
  MetricsReport r;
  r.closed_set_accuracy = j.at("closed_set_accuracy").get<double>();
  r.clean_closed_set_accuracy = j.at("clean_closed_set_accuracy").get<double>();
  r.auc_roc = j.at("auc_roc").get<double>();
  r.clean_auc_roc = j.at("clean_auc_roc").get<double>();
  r.macro_f1 = j.at("macro_f1").get<double>();
  r.per_class_f1 = j.at("per_class_f1").get<std::vector<double>>();
  r.n_known = j.at("n_known").get<int>();
  r.n_open = j.at("n_open").get<int>();
  r.attack = j.at("attack").get<std::string>();
  r.split_id = j.at("split_id").get<int>();
  r.seed = j.at("seed").get<unsigned long long>();
  return r;
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsReport>& rows) {
  require(!rows.empty(), "metrics csv: no rows");
  std::ofstream os(path);
  require(os.good(), "metrics: cannot write " + path);
  os << std::setprecision(17);
  os << "split,seed,attack,closed_set_accuracy,clean_closed_set_accuracy,auc_roc,clean_auc_roc,"
        "macro_f1,n_known,n_open\n";
  std::vector<double> acc, cacc, auc, cauc, f1;
  for (const MetricsReport& r : rows) {
    os << r.split_id << ',' << r.seed << ',' << r.attack << ',' << r.closed_set_accuracy << ','
       << r.clean_closed_set_accuracy << ',' << r.auc_roc << ',' << r.clean_auc_roc << ','
       << r.macro_f1 << ',' << r.n_known << ',' << r.n_open << '\n';
    acc.push_back(r.closed_set_accuracy);
    cacc.push_back(r.clean_closed_set_accuracy);
    auc.push_back(r.auc_roc);
    cauc.push_back(r.clean_auc_roc);
    f1.push_back(r.macro_f1);
  }
  const Aggregate a_acc = aggregate(acc), a_cacc = aggregate(cacc), a_auc = aggregate(auc),
                  a_cauc = aggregate(cauc), a_f1 = aggregate(f1);
  os << "mean,,," << a_acc.mean << ',' << a_cacc.mean << ',' << a_auc.mean << ',' << a_cauc.mean
     << ',' << a_f1.mean << ",,\n";
  os << "std,,," << a_acc.stddev << ',' << a_cacc.stddev << ',' << a_auc.stddev << ','
     << a_cauc.stddev << ',' << a_f1.stddev << ",,\n";
}

}  // namespace osdn
