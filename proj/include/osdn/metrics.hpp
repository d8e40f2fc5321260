#pragma once

#include <string>
#include <vector>

#include "osdn/dataset.hpp"
#include "osdn/openmax.hpp"

namespace osdn {

enum class OpenScoreKind {
  OpenProbability,    // OpenMax probability of class c+1 (default)
  OneMinusMaxKnown,   // 1 - max_i OpenMax_i over known classes
};

struct MetricsReport {
  double closed_set_accuracy = 0.0;        // attacked known samples
  double clean_closed_set_accuracy = 0.0;  // same samples, no attack
  double auc_roc = 0.0;                    // attacked known vs attacked open
  double clean_auc_roc = 0.0;
  double macro_f1 = 0.0;                   // OOD decision at the threshold
  std::vector<double> per_class_f1;        // c known classes then open
  int n_known = 0;
  int n_open = 0;
  std::string attack = "none";
  int split_id = 0;
  unsigned long long seed = 0;
};

/// Fraction of attacked known-class samples whose OpenMax known-class argmax
/// matches the label.
double closed_set_accuracy(const OsdnModel& model, const Calibration& cal,
                           const LabeledSet& attacked_known);

/// Open-set score per sample.
std::vector<double> openset_scores(const OsdnModel& model, const Calibration& cal,
                                   const Tensor& x, OpenScoreKind kind);

/// Mann-Whitney rank AUC with ties counted half; open samples are the
/// positive class.
double auc_from_scores(const std::vector<double>& known_scores,
                       const std::vector<double>& open_scores);

double openset_auc(const OsdnModel& model, const Calibration& cal, const LabeledSet& known,
                   const LabeledSet& open, OpenScoreKind kind = OpenScoreKind::OpenProbability);

struct F1Result {
  double macro_f1 = 0.0;
  std::vector<double> per_class;
};

/// Macro F1 over a (k x k) confusion matrix (rows true, cols predicted).
/// A class with no true or predicted samples scores 0.
F1Result macro_f1_from_confusion(const std::vector<std::vector<int>>& confusion);

/// OOD protocol: a sample is labeled open when the open probability is the
/// argmax or the top known OpenMax probability falls below the threshold;
/// macro-F1 averages the c known classes plus the open class.
F1Result ood_macro_f1(const OsdnModel& model, const Calibration& cal,
                      const LabeledSet& in_dist, const LabeledSet& out_dist, double threshold);

struct Aggregate {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation, 0 for a single value
};
Aggregate aggregate(const std::vector<double>& values);

void write_metrics_json(const std::string& path, const MetricsReport& r);
MetricsReport read_metrics_json(const std::string& path);
void write_metrics_csv(const std::string& path, const std::vector<MetricsReport>& rows);

}  // namespace osdn
