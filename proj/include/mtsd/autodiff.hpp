#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "mtsd/rng.hpp"
#include "mtsd/tensor.hpp"

namespace mtsd::ad {

// One recorded operation. Nodes form a DAG through `parents`; creation order
// is a topological order, and backward() visits each reachable node exactly
// once. Values saved for the backward pass live either in the parents' value
// tensors or inside the `backprop` closure (e.g. the dropout mask).
struct Node {
  Tensor value;
  Tensor grad;  // allocated by backward(); empty before that
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;  // accumulates into parents' grads
  const char* op = "leaf";
};

// Cheap handle to a node. Copying a Var shares the node.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  const Tensor& value() const;
  Tensor& mutable_value();  // in-place parameter updates (optimizer)
  bool requires_grad() const;

  // Gradient after backward(); zeros if this node was not reached by the
  // loss (a loss that ignores a parameter yields exactly zero gradient).
  Tensor grad() const;
  bool has_grad() const;

  bool valid() const { return node_ != nullptr; }
  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  friend Var make_op(Tensor out, std::vector<Var> inputs, std::function<void(Node&)> backprop,
                     const char* op);
  std::shared_ptr<Node> node_;
};

// Gradient recording is enabled by default and controlled per thread.
// Ops built while disabled do not link parents, so eval-mode forwards
// retain no graph.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

Var constant(Tensor value);

// Elementwise binary ops. Shapes must match, or one operand may be a scalar
// ({1}) or a row vector broadcast across a 2-D matrix.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);

Var add_scalar(const Var& a, double s);
Var mul_scalar(const Var& a, double s);

Var matmul(const Var& a, const Var& b);  // 2-D only

Var relu(const Var& a);
Var sigmoid(const Var& a);
Var softmax_rows(const Var& a);  // rowwise softmax of a 2-D tensor
Var log(const Var& a);           // inputs must be > 0; clamp first for probabilities
Var clamp(const Var& a, double lo, double hi);

Var sum_all(const Var& a);   // -> scalar
Var mean_all(const Var& a);  // -> scalar

Var concat_cols(const Var& a, const Var& b);
Var slice_cols(const Var& a, std::size_t start, std::size_t count);
Var reshape(const Var& a, std::vector<std::size_t> shape);

// Inverted dropout: keeps units with probability 1-p and scales them by
// 1/(1-p); the Boolean mask is stored on the tape for the backward pass.
// p == 0 is the identity.
Var dropout(const Var& a, double p, Rng& rng);

// Reverse pass from a recorded scalar loss. Fills `grad` on every node
// reachable from the loss; throws if the loss is not scalar, was not
// recorded, or produces non-finite gradients.
void backward(const Var& loss);

}  // namespace mtsd::ad
