#pragma once

#include <vector>

#include "osdn/dataset.hpp"
#include "osdn/targets.hpp"

namespace osdn {

struct LossToggles {
  bool cls = true;
  bool rec = true;
  bool ssd = true;
  double w_cls = 1.0;
  double w_rec = 1.0;
  double w_ssd = 1.0;
};

/// The three loss terms of one step. total is the optimized sum of the
/// enabled terms; disabled terms contribute exactly 0.
struct LossBundle {
  double l_cls = 0.0;
  double l_rec = 0.0;
  double l_ssd = 0.0;
  double total = 0.0;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Moments are kept per parameter tensor in the
/// order of the ParamSet the optimizer was built for.
class Adam {
 public:
  Adam() = default;
  Adam(const AdamConfig& cfg, const ParamSet& params);

  /// grads must be aligned with the ParamSet; parameters whose gradient is
  /// identically zero stay bitwise unchanged.
  void step(ParamSet& params, const std::vector<Tensor>& grads);

  int steps_taken() const { return t_; }

 private:
  AdamConfig cfg_;
  std::vector<Tensor> m_, v_;
  int t_ = 0;
};

struct TrainConfig {
  LossToggles loss;
  AttackSpec attack;
  AdamConfig adam;
  int epochs = 15;
  int batch_size = 32;
  bool val_attacked = true;  // validate on attacked images when attacking
};

/// One optimizer step on a known-class batch: generates the adversarial
/// batch for the classification/reconstruction paths and a second one for
/// the rotation path, evaluates the enabled losses, and applies Adam to all
/// parameters. Throws with diagnostics when a loss term is non-finite.
LossBundle train_step(OsdnModel& model, Adam& opt, const LabeledSet& batch,
                      const LossToggles& toggles, const AttackSpec& attack, Rng& rng,
                      int step_index = -1);

struct EpochRow {
  int epoch = 0;
  double l_cls = 0.0, l_rec = 0.0, l_ssd = 0.0;
  double val_accuracy = 0.0;
};

struct TrainResult {
  OsdnModel best_model;
  double best_val_accuracy = 0.0;
  int best_epoch = -1;
  std::vector<EpochRow> log;
};

/// Full training run with per-epoch validation; returns the checkpoint with
/// the best validation closed-set accuracy (raw argmax over known classes).
TrainResult train(OsdnModel model, const LabeledSet& train_set, const LabeledSet& val_set,
                  const TrainConfig& cfg, Rng& rng);

/// Closed-set accuracy of raw argmax predictions.
double argmax_accuracy(const OsdnModel& model, const LabeledSet& set);

/// Applies the attack to a set in chunks (ground-truth labels).
LabeledSet attack_set(const OsdnModel& model, const LabeledSet& set, const AttackSpec& spec,
                      LabelSource source, int chunk = 64);

void write_training_log(const std::string& path, const std::vector<EpochRow>& log);

}  // namespace osdn
