#include "osdn/autodiff.hpp"

#include <stdexcept>

namespace osdn {

const Tensor& Var::val() const {
  require(defined(), "Var: use of an undefined variable");
  return tape->value(id);
}

const Tensor& Var::grad() const {
  require(defined(), "Var: use of an undefined variable");
  return tape->grad_buf(id);
}

Var Tape::input(Tensor value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::op_node(Tensor value, std::vector<int> parents, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  n.parents = std::move(parents);
  for (int p : n.parents) {
    require(p >= 0 && p < size(), "op_node: parent id out of range");
    if (nodes_[static_cast<size_t>(p)].requires_grad) n.requires_grad = true;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Tensor& Tape::grad_buf(int id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (!n.has_grad) {
    n.grad = Tensor(n.value.shape);
    n.has_grad = true;
  }
  return n.grad;
}

void Tape::backward(Var loss) {
  require(!consumed_, "backward: tape already consumed; run a new forward pass");
  require(loss.defined() && loss.tape == this, "backward: loss is not on this tape");
  require(loss.val().numel() == 1,
          "backward: loss must be scalar, got shape " + shape_str(loss.val().shape));
  consumed_ = true;
  grad_buf(loss.id)[0] = 1.0;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.requires_grad || !n.has_grad || !n.backward) continue;
    n.backward(*this, id);
  }
}

}  // namespace osdn
