#include "mtsd/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_set>

namespace mtsd::ad {

namespace {

thread_local bool g_grad_enabled = true;

[[noreturn]] void fail(const char* op, const std::string& msg) {
  throw std::runtime_error(std::string(op) + ": " + msg);
}

void check_finite(const Tensor& t, const char* op) {
  if (!t.all_finite()) fail(op, "non-finite output");
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

Var::Var(Tensor value, bool requires_grad) {
  node_ = std::make_shared<Node>();
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

const Tensor& Var::value() const {
  if (!node_) throw std::logic_error("Var::value: empty handle");
  return node_->value;
}

Tensor& Var::mutable_value() {
  if (!node_) throw std::logic_error("Var::mutable_value: empty handle");
  return node_->value;
}

bool Var::requires_grad() const { return node_ && node_->requires_grad; }

bool Var::has_grad() const { return node_ && !node_->grad.empty(); }

Tensor Var::grad() const {
  if (!node_) throw std::logic_error("Var::grad: empty handle");
  if (node_->grad.empty()) return Tensor::zeros(node_->value.shape);
  return node_->grad;
}

Var constant(Tensor value) { return Var(std::move(value), false); }

// Shared op constructor: validates finiteness and records the node when
// gradient recording is on and some input needs gradients.
Var make_op(Tensor out, std::vector<Var> inputs, std::function<void(Node&)> backprop,
            const char* op) {
  check_finite(out, op);
  Var result(std::move(out), false);
  bool any_grad = false;
  for (const Var& v : inputs) any_grad = any_grad || v.requires_grad();
  if (g_grad_enabled && any_grad) {
    result.node_->requires_grad = true;
    result.node_->parents.reserve(inputs.size());
    for (const Var& v : inputs) result.node_->parents.push_back(v.node());
    result.node_->backprop = std::move(backprop);
    result.node_->op = op;
  }
  return result;
}

// ---------------------------------------------------------------------------
// elementwise binary ops with limited broadcasting
// ---------------------------------------------------------------------------

namespace {

enum class BCast { Same, BScalar, AScalar, BRow, ARow };

BCast resolve_broadcast(const Tensor& a, const Tensor& b, const char* op) {
  if (a.same_shape(b)) return BCast::Same;
  if (b.is_scalar()) return BCast::BScalar;
  if (a.is_scalar()) return BCast::AScalar;
  auto is_row_of = [](const Tensor& m, const Tensor& r) {
    if (m.shape.size() != 2) return false;
    if (r.shape.size() == 1) return r.shape[0] == m.shape[1];
    return r.shape.size() == 2 && r.shape[0] == 1 && r.shape[1] == m.shape[1];
  };
  if (is_row_of(a, b)) return BCast::BRow;
  if (is_row_of(b, a)) return BCast::ARow;
  fail(op, "shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
}

// Index of b's element paired with flat index i of the output (which has a's
// shape), under the resolved broadcast. For ARow the roles are swapped by the
// caller.
inline std::size_t bcast_index(BCast bc, std::size_t i, std::size_t cols) {
  switch (bc) {
    case BCast::Same: return i;
    case BCast::BScalar: return 0;
    case BCast::BRow: return i % cols;
    default: return i;  // unreachable for AScalar/ARow (handled by swap)
  }
}

// Accumulates `contrib` (shaped like the output) into the grad of a
// broadcast operand.
void accumulate_broadcast(Tensor& grad, BCast bc, const std::vector<double>& contrib,
                          std::size_t cols) {
  switch (bc) {
    case BCast::Same:
      for (std::size_t i = 0; i < contrib.size(); ++i) grad.data[i] += contrib[i];
      break;
    case BCast::BScalar:
      for (double v : contrib) grad.data[0] += v;
      break;
    case BCast::BRow:
      for (std::size_t i = 0; i < contrib.size(); ++i) grad.data[i % cols] += contrib[i];
      break;
    default:
      break;
  }
}

struct BinaryPartials {
  // partial derivatives of out wrt a and b at each output element
  std::function<double(double, double)> dfda;
  std::function<double(double, double)> dfdb;
};

Var binary_op(const Var& a, const Var& b, const char* op,
              const std::function<double(double, double)>& f, BinaryPartials partials) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  BCast bc = resolve_broadcast(av, bv, op);
  if (bc == BCast::AScalar || bc == BCast::ARow) {
    // Normalize so the broadcast operand is always b.
    BCast swapped = (bc == BCast::AScalar) ? BCast::BScalar : BCast::BRow;
    const Tensor& big = bv;
    Tensor out = Tensor::zeros(big.shape);
    const std::size_t cols = big.shape.size() == 2 ? big.shape[1] : big.numel();
    for (std::size_t i = 0; i < out.numel(); ++i) {
      out.data[i] = f(av.data[bcast_index(swapped, i, cols)], bv.data[i]);
    }
    auto bp = [swapped, cols, partials](Node& n) {
      const Tensor& pa = n.parents[0]->value;
      const Tensor& pb = n.parents[1]->value;
      std::vector<double> ca(n.grad.numel()), cb(n.grad.numel());
      for (std::size_t i = 0; i < n.grad.numel(); ++i) {
        const double x = pa.data[bcast_index(swapped, i, cols)];
        const double y = pb.data[i];
        ca[i] = n.grad.data[i] * partials.dfda(x, y);
        cb[i] = n.grad.data[i] * partials.dfdb(x, y);
      }
      accumulate_broadcast(n.parents[0]->grad, swapped, ca, cols);
      accumulate_broadcast(n.parents[1]->grad, BCast::Same, cb, cols);
    };
    return make_op(std::move(out), {a, b}, std::move(bp), op);
  }

  Tensor out = Tensor::zeros(av.shape);
  const std::size_t cols = av.shape.size() == 2 ? av.shape[1] : av.numel();
  for (std::size_t i = 0; i < out.numel(); ++i) {
    out.data[i] = f(av.data[i], bv.data[bcast_index(bc, i, cols)]);
  }
  auto bp = [bc, cols, partials](Node& n) {
    const Tensor& pa = n.parents[0]->value;
    const Tensor& pb = n.parents[1]->value;
    std::vector<double> ca(n.grad.numel()), cb(n.grad.numel());
    for (std::size_t i = 0; i < n.grad.numel(); ++i) {
      const double x = pa.data[i];
      const double y = pb.data[bcast_index(bc, i, cols)];
      ca[i] = n.grad.data[i] * partials.dfda(x, y);
      cb[i] = n.grad.data[i] * partials.dfdb(x, y);
    }
    accumulate_broadcast(n.parents[0]->grad, BCast::Same, ca, cols);
    accumulate_broadcast(n.parents[1]->grad, bc, cb, cols);
  };
  return make_op(std::move(out), {a, b}, std::move(bp), op);
}

}  // namespace

Var add(const Var& a, const Var& b) {
  return binary_op(a, b, "add", [](double x, double y) { return x + y; },
                   {[](double, double) { return 1.0; }, [](double, double) { return 1.0; }});
}

Var sub(const Var& a, const Var& b) {
  return binary_op(a, b, "sub", [](double x, double y) { return x - y; },
                   {[](double, double) { return 1.0; }, [](double, double) { return -1.0; }});
}

Var mul(const Var& a, const Var& b) {
  return binary_op(a, b, "mul", [](double x, double y) { return x * y; },
                   {[](double, double y) { return y; }, [](double x, double) { return x; }});
}

Var div(const Var& a, const Var& b) {
  return binary_op(a, b, "div", [](double x, double y) { return x / y; },
                   {[](double, double y) { return 1.0 / y; },
                    [](double x, double y) { return -x / (y * y); }});
}

Var add_scalar(const Var& a, double s) {
  Tensor out = a.value();
  for (double& v : out.data) v += s;
  return make_op(std::move(out), {a},
                 [](Node& n) {
                   for (std::size_t i = 0; i < n.grad.numel(); ++i)
                     n.parents[0]->grad.data[i] += n.grad.data[i];
                 },
                 "add_scalar");
}

Var mul_scalar(const Var& a, double s) {
  Tensor out = a.value();
  for (double& v : out.data) v *= s;
  return make_op(std::move(out), {a},
                 [s](Node& n) {
                   for (std::size_t i = 0; i < n.grad.numel(); ++i)
                     n.parents[0]->grad.data[i] += s * n.grad.data[i];
                 },
                 "mul_scalar");
}

// ---------------------------------------------------------------------------
// matmul
// ---------------------------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape.size() != 2 || bv.shape.size() != 2) fail("matmul", "operands must be 2-D");
  if (av.cols() != bv.rows()) {
    fail("matmul", "inner dimension mismatch " + shape_str(av.shape) + " vs " + shape_str(bv.shape));
  }
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  Tensor out = Tensor::zeros({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av.data[i * k + p];
      if (aip == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) {
        out.data[i * n + j] += aip * bv.data[p * n + j];
      }
    }
  }
  auto bp = [m, k, n](Node& node) {
    const Tensor& av2 = node.parents[0]->value;
    const Tensor& bv2 = node.parents[1]->value;
    Tensor& ga = node.parents[0]->grad;
    Tensor& gb = node.parents[1]->grad;
    // dA = G * B^T
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double g = node.grad.data[i * n + j];
        if (g == 0.0) continue;
        for (std::size_t p = 0; p < k; ++p) {
          ga.data[i * k + p] += g * bv2.data[p * n + j];
        }
      }
    }
    // dB = A^T * G
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t p = 0; p < k; ++p) {
        const double aip = av2.data[i * k + p];
        if (aip == 0.0) continue;
        for (std::size_t j = 0; j < n; ++j) {
          gb.data[p * n + j] += aip * node.grad.data[i * n + j];
        }
      }
    }
  };
  return make_op(std::move(out), {a, b}, std::move(bp), "matmul");
}

// ---------------------------------------------------------------------------
// elementwise unary ops
// ---------------------------------------------------------------------------

Var relu(const Var& a) {
  Tensor out = a.value();
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  return make_op(std::move(out), {a},
                 [](Node& n) {
                   const Tensor& x = n.parents[0]->value;
                   for (std::size_t i = 0; i < n.grad.numel(); ++i) {
                     if (x.data[i] > 0.0) n.parents[0]->grad.data[i] += n.grad.data[i];
                   }
                 },
                 "relu");
}

static double stable_sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Var sigmoid(const Var& a) {
  Tensor out = a.value();
  for (double& v : out.data) v = stable_sigmoid(v);
  return make_op(std::move(out), {a},
                 [](Node& n) {
                   for (std::size_t i = 0; i < n.grad.numel(); ++i) {
                     const double y = n.value.data[i];
                     n.parents[0]->grad.data[i] += n.grad.data[i] * y * (1.0 - y);
                   }
                 },
                 "sigmoid");
}

Var softmax_rows(const Var& a) {
  const Tensor& av = a.value();
  if (av.shape.size() != 2) fail("softmax_rows", "operand must be 2-D");
  const std::size_t r = av.rows(), c = av.cols();
  Tensor out = Tensor::zeros({r, c});
  for (std::size_t i = 0; i < r; ++i) {
    double mx = av.data[i * c];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, av.data[i * c + j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double e = std::exp(av.data[i * c + j] - mx);
      out.data[i * c + j] = e;
      sum += e;
    }
    for (std::size_t j = 0; j < c; ++j) out.data[i * c + j] /= sum;
  }
  auto bp = [r, c](Node& n) {
    for (std::size_t i = 0; i < r; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        dot += n.grad.data[i * c + j] * n.value.data[i * c + j];
      }
      for (std::size_t j = 0; j < c; ++j) {
        const double y = n.value.data[i * c + j];
        n.parents[0]->grad.data[i * c + j] += y * (n.grad.data[i * c + j] - dot);
      }
    }
  };
  return make_op(std::move(out), {a}, std::move(bp), "softmax_rows");
}

Var log(const Var& a) {
  Tensor out = a.value();
  for (double& v : out.data) v = std::log(v);
  return make_op(std::move(out), {a},
                 [](Node& n) {
                   const Tensor& x = n.parents[0]->value;
                   for (std::size_t i = 0; i < n.grad.numel(); ++i) {
                     n.parents[0]->grad.data[i] += n.grad.data[i] / x.data[i];
                   }
                 },
                 "log");
}

Var clamp(const Var& a, double lo, double hi) {
  if (!(lo < hi)) fail("clamp", "invalid bounds");
  Tensor out = a.value();
  for (double& v : out.data) v = std::min(std::max(v, lo), hi);
  return make_op(std::move(out), {a},
                 [lo, hi](Node& n) {
                   const Tensor& x = n.parents[0]->value;
                   for (std::size_t i = 0; i < n.grad.numel(); ++i) {
                     if (x.data[i] > lo && x.data[i] < hi) {
                       n.parents[0]->grad.data[i] += n.grad.data[i];
                     }
                   }
                 },
                 "clamp");
}

// ---------------------------------------------------------------------------
// reductions and shape ops
// ---------------------------------------------------------------------------

Var sum_all(const Var& a) {
  double s = 0.0;
  for (double v : a.value().data) s += v;
  return make_op(Tensor::scalar(s), {a},
                 [](Node& n) {
                   const double g = n.grad.data[0];
                   for (double& gv : n.parents[0]->grad.data) gv += g;
                 },
                 "sum_all");
}

Var mean_all(const Var& a) {
  const std::size_t n = a.value().numel();
  double s = 0.0;
  for (double v : a.value().data) s += v;
  return make_op(Tensor::scalar(s / static_cast<double>(n)), {a},
                 [n](Node& node) {
                   const double g = node.grad.data[0] / static_cast<double>(n);
                   for (double& gv : node.parents[0]->grad.data) gv += g;
                 },
                 "mean_all");
}

Var concat_cols(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape.size() != 2 || bv.shape.size() != 2 || av.rows() != bv.rows()) {
    fail("concat_cols", "operands must be 2-D with equal row counts");
  }
  const std::size_t r = av.rows(), ca = av.cols(), cb = bv.cols();
  Tensor out = Tensor::zeros({r, ca + cb});
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < ca; ++j) out.data[i * (ca + cb) + j] = av.data[i * ca + j];
    for (std::size_t j = 0; j < cb; ++j) out.data[i * (ca + cb) + ca + j] = bv.data[i * cb + j];
  }
  auto bp = [r, ca, cb](Node& n) {
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < ca; ++j) {
        n.parents[0]->grad.data[i * ca + j] += n.grad.data[i * (ca + cb) + j];
      }
      for (std::size_t j = 0; j < cb; ++j) {
        n.parents[1]->grad.data[i * cb + j] += n.grad.data[i * (ca + cb) + ca + j];
      }
    }
  };
  return make_op(std::move(out), {a, b}, std::move(bp), "concat_cols");
}

Var slice_cols(const Var& a, std::size_t start, std::size_t count) {
  const Tensor& av = a.value();
  if (av.shape.size() != 2) fail("slice_cols", "operand must be 2-D");
  if (count == 0 || start + count > av.cols()) fail("slice_cols", "slice out of range");
  const std::size_t r = av.rows(), c = av.cols();
  Tensor out = Tensor::zeros({r, count});
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < count; ++j) {
      out.data[i * count + j] = av.data[i * c + start + j];
    }
  }
  auto bp = [r, c, start, count](Node& n) {
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < count; ++j) {
        n.parents[0]->grad.data[i * c + start + j] += n.grad.data[i * count + j];
      }
    }
  };
  return make_op(std::move(out), {a}, std::move(bp), "slice_cols");
}

Var reshape(const Var& a, std::vector<std::size_t> shape) {
  Tensor out(std::move(shape), a.value().data);
  return make_op(std::move(out), {a},
                 [](Node& n) {
                   for (std::size_t i = 0; i < n.grad.numel(); ++i) {
                     n.parents[0]->grad.data[i] += n.grad.data[i];
                   }
                 },
                 "reshape");
}

Var dropout(const Var& a, double p, Rng& rng) {
  if (p < 0.0 || p >= 1.0) fail("dropout", "rate must be in [0, 1)");
  if (p == 0.0) {
    // Identity; no mask drawn, so eval-style calls consume no randomness.
    Tensor out = a.value();
    return make_op(std::move(out), {a},
                   [](Node& n) {
                     for (std::size_t i = 0; i < n.grad.numel(); ++i) {
                       n.parents[0]->grad.data[i] += n.grad.data[i];
                     }
                   },
                   "dropout");
  }
  const double scale = 1.0 / (1.0 - p);
  std::vector<double> mask(a.value().numel());
  for (double& m : mask) m = rng.uniform() >= p ? scale : 0.0;
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] *= mask[i];
  return make_op(std::move(out), {a},
                 [mask = std::move(mask)](Node& n) {
                   for (std::size_t i = 0; i < n.grad.numel(); ++i) {
                     n.parents[0]->grad.data[i] += n.grad.data[i] * mask[i];
                   }
                 },
                 "dropout");
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

void backward(const Var& loss) {
  if (!loss.valid()) throw std::logic_error("backward: empty loss handle");
  Node* root = loss.node().get();
  if (!root->value.is_scalar()) {
    throw std::runtime_error("backward: loss must be scalar, got shape " +
                             shape_str(root->value.shape));
  }
  if (!root->backprop && root->parents.empty()) {
    throw std::runtime_error("backward: loss was not recorded on a tape");
  }

  // Iterative post-order DFS; the resulting list is a topological order.
  std::vector<Node*> topo;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next].get();
      ++next;
      if (visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      topo.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : topo) n->grad = Tensor::zeros(n->value.shape);
  root->grad.data[0] = 1.0;

  // topo is post-order, so reverse iteration visits children before parents.
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    Node* n = *it;
    if (n->backprop) n->backprop(*n);
  }

  for (Node* n : topo) {
    if (!n->grad.all_finite()) {
      throw std::runtime_error(std::string("backward: non-finite gradient at op ") + n->op);
    }
  }
}

}  // namespace mtsd::ad
