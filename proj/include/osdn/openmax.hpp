#pragma once

#include <string>
#include <vector>

#include "osdn/networks.hpp"

namespace osdn {

/// Per-class extreme-value model: mean activation vector in latent space and
/// a two-parameter Weibull fitted to the tail of same-class distances.
struct WeibullClassModel {
  int class_id = -1;
  std::vector<double> mu;
  double shape = 0.0;
  double scale = 0.0;
  int tail_size = 0;
};

struct OpenMaxConfig {
  int sigma = 0;          // top-class revision count; 0 resolves to min(3, c)
  int tail_size = 0;      // 0 resolves to max(20, correct/10), capped per class
  double threshold = 0.95;
  bool calibrate_on_adversarial = false;

  int resolved_sigma(int c) const;
  void validate(int c) const;
};

struct WeibullFit {
  double shape = 0.0;
  double scale = 0.0;
};

/// Arithmetic mean of the given latent vectors; throws when empty.
std::vector<double> compute_mav(const std::vector<std::vector<double>>& latents);

/// Maximum-likelihood two-parameter Weibull fit on the `tail_size` largest
/// distances. The shape solves the profile-likelihood equation by bracketed
/// bisection (relative step < 1e-10 or 200 iterations) and the scale follows
/// in closed form. A degenerate tail (all values equal) falls back to
/// shape 100 with that value as the scale.
WeibullFit fit_weibull_tail(std::vector<double> distances, int tail_size);

/// Sum of log-densities of the two-parameter Weibull; used by the
/// local-optimality probes in the tests.
double weibull_log_likelihood(const std::vector<double>& xs, double shape, double scale);

/// Belief that the sample belongs to each known class:
///   w_i = 1 - max(0, (sigma - rank0(i))/sigma) * exp(-(|v - mu_i|/eta_i)^m_i)
/// where rank0(i) is the 0-based index of class i in the logits sorted
/// descending (top class has rank0 = 0 and coefficient 1, classes ranked
/// below sigma keep w_i = 1 exactly).
std::vector<double> belief_weights(const std::vector<double>& latent,
                                   const std::vector<double>& logits,
                                   const std::vector<WeibullClassModel>& models, int sigma);

/// Recalibrated probabilities over c+1 classes: logits are scaled by the
/// beliefs, the shaved mass sum_i l_i (1 - w_i) becomes the open-class
/// logit, and a softmax maps the c+1 vector to the simplex.
std::vector<double> openmax_probs(const std::vector<double>& logits,
                                  const std::vector<double>& latent,
                                  const std::vector<WeibullClassModel>& models, int sigma);

/// Fitted calibration for a trained model.
struct Calibration {
  std::vector<WeibullClassModel> models;  // one per known class, in class order
  int sigma = 0;
  double threshold = 0.95;

  void save(const std::string& path) const;
  static Calibration load(const std::string& path);
};

/// Fits MAVs and Weibull tails from correctly-classified samples of every
/// class. Throws, naming the class, when some class has no correct
/// predictions.
Calibration calibrate(const OsdnModel& model, const Tensor& x, const std::vector<int>& labels,
                      const OpenMaxConfig& cfg);

/// OpenMax probabilities for a batch: rows of [N, c+1].
Tensor openmax_batch(const OsdnModel& model, const Calibration& cal, const Tensor& x);

}  // namespace osdn
