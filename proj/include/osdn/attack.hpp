#pragma once

#include <functional>
#include <vector>

#include "osdn/ops.hpp"
#include "osdn/rng.hpp"

namespace osdn {

enum class AttackFamily { None, Fgsm, Pgd };

struct AttackSpec {
  AttackFamily family = AttackFamily::None;
  double epsilon = 0.0;        // l-inf radius in pixel units
  double epsilon_step = 0.0;   // per-iteration step (PGD)
  int iterations = 1;          // T (PGD)
  double pixel_lo = 0.0;
  double pixel_hi = 1.0;
  bool random_init = false;    // uniform start inside the ball (extension; off
                               // matches the plain recursion from the clean image)

  void validate() const;
};

enum class LabelSource { GroundTruth, ModelPrediction };

AttackFamily attack_family_from_string(const std::string& s);
std::string to_string(AttackFamily f);

/// Builds a scalar loss for the batch `x` registered on the tape. Labels and
/// model parameters are captured by the closure; parameters must be bound
/// without gradient tracking and with normalization statistics frozen.
using AttackLossFn = std::function<Var(Tape&, Var x)>;

/// Single signed-gradient step, clamped to the valid pixel range.
/// Leaves everything captured by loss_fn untouched.
Tensor fgsm(const AttackLossFn& loss_fn, const Tensor& x, const AttackSpec& spec);

/// `iterations` signed steps of size epsilon_step, each projected onto the
/// epsilon ball around x intersected with the pixel range. Returns the final
/// iterate. With iterations=1, epsilon_step=epsilon and no random init this
/// is bitwise identical to fgsm.
Tensor pgd(const AttackLossFn& loss_fn, const Tensor& x, const AttackSpec& spec,
           Rng* rng = nullptr);

/// Dispatch on spec.family; None returns x unchanged.
Tensor run_attack(const AttackLossFn& loss_fn, const Tensor& x, const AttackSpec& spec,
                  Rng* rng = nullptr);

/// Model surface needed to attack a batch: a loss builder given per-sample
/// labels, and clean known-class logits for ModelPrediction labeling.
struct AttackTarget {
  std::function<Var(Tape&, Var x, const std::vector<int>& labels)> loss;
  std::function<Tensor(const Tensor& x)> logits;  // [N, c], inference mode
};

/// Per-batch attack generation. With ModelPrediction the labels are the
/// argmax of the model's known-class logits on the clean samples.
Tensor attack_batch(const AttackTarget& target, const Tensor& x, const std::vector<int>& labels,
                    LabelSource source, const AttackSpec& spec, Rng* rng = nullptr);

}  // namespace osdn
