#pragma once

#include <functional>
#include <vector>

#include "osdn/tensor.hpp"

namespace osdn {

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid as long as the tape lives.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  bool defined() const { return tape != nullptr && id >= 0; }
  const Tensor& val() const;
  const Shape& shape() const { return val().shape; }
  // Gradient accumulated by Tape::backward; zeros if this node never
  // received one.
  const Tensor& grad() const;
};

/// Record of one forward pass. Nodes are stored in execution order, which is
/// a topological order of the DAG, so backward walks the vector in reverse.
/// A tape is consumed by backward(): calling it twice throws, so gradients
/// can never be double-accumulated.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Register a leaf value. Gradients are accumulated for it only when
  /// requires_grad is set.
  Var input(Tensor value, bool requires_grad = false);

  /// Record an op node. requires_grad is inherited from the parents.
  Var op_node(Tensor value, std::vector<int> parents, BackwardFn backward);

  /// Reverse sweep from a scalar loss. Consumes the tape.
  void backward(Var loss);

  const Tensor& value(int id) const { return nodes_[static_cast<size_t>(id)].value; }
  bool requires_grad(int id) const { return nodes_[static_cast<size_t>(id)].requires_grad; }
  bool consumed() const { return consumed_; }
  int size() const { return static_cast<int>(nodes_.size()); }

  /// Gradient accumulator for a node, allocated as zeros on first access.
  Tensor& grad_buf(int id);
  bool has_grad(int id) const { return nodes_[static_cast<size_t>(id)].has_grad; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<int> parents;
    BackwardFn backward;
    bool requires_grad = false;
    bool has_grad = false;
  };
  std::vector<Node> nodes_;
  bool consumed_ = false;
};

}  // namespace osdn
