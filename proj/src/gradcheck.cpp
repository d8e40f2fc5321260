#include "osdn/gradcheck.hpp"

#include <cmath>

namespace osdn {

namespace {

double eval_loss(const GraphBuilder& build, const std::vector<Tensor>& inputs) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const Tensor& t : inputs) vars.push_back(tape.input(t, false));
  return build(tape, vars).val().item();
}

}  // namespace

GradCheckReport grad_check(const GraphBuilder& build, const std::vector<Tensor>& inputs,
                           double tol, double h) {
  // One forward/backward pass for the analytic gradients.
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const Tensor& t : inputs) vars.push_back(tape.input(t, true));
  Var loss = build(tape, vars);
  tape.backward(loss);

  GradCheckReport rep;
  std::vector<Tensor> probe = inputs;
  for (size_t vi = 0; vi < inputs.size(); ++vi) {
    const Tensor& analytic = vars[vi].grad();
    for (int i = 0; i < probe[vi].numel(); ++i) {
      const double orig = probe[vi][i];
      probe[vi][i] = orig + h;
      const double lp = eval_loss(build, probe);
      probe[vi][i] = orig - h;
      const double lm = eval_loss(build, probe);
      probe[vi][i] = orig;
      const double numeric = (lp - lm) / (2.0 * h);
      const double rel = std::fabs(analytic[i] - numeric) / std::max(1e-8, std::fabs(numeric));
      rep.max_rel_err = std::max(rep.max_rel_err, rel);
    }
  }
  rep.pass = rep.max_rel_err < tol;
  return rep;
}

}  // namespace osdn
