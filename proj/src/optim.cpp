#include "mtsd/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace mtsd {

AdamState AdamState::init(const std::vector<ad::Var>& params) {
  AdamState st;
  st.m.reserve(params.size());
  st.v.reserve(params.size());
  for (const ad::Var& p : params) {
    st.m.push_back(Tensor::zeros(p.value().shape));
    st.v.push_back(Tensor::zeros(p.value().shape));
  }
  return st;
}

void adam_step(std::vector<ad::Var>& params, const std::vector<Tensor>& grads, AdamState& state,
               double lr) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw std::invalid_argument("adam_step: parameter/gradient/state count mismatch");
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i].mutable_value();
    const Tensor& g = grads[i];
    if (!p.same_shape(g) || !p.same_shape(state.m[i])) {
      throw std::invalid_argument("adam_step: shape mismatch at parameter " + std::to_string(i));
    }
    for (std::size_t j = 0; j < p.numel(); ++j) {
      double& m = state.m[i].data[j];
      double& v = state.v[i].data[j];
      m = state.beta1 * m + (1.0 - state.beta1) * g.data[j];
      v = state.beta2 * v + (1.0 - state.beta2) * g.data[j] * g.data[j];
      const double mhat = m / bc1;
      const double vhat = v / bc2;
      const double upd = lr * mhat / (std::sqrt(vhat) + state.eps);
      if (!std::isfinite(upd)) {
        throw std::runtime_error("adam_step: non-finite update at parameter " + std::to_string(i));
      }
      p.data[j] -= upd;
    }
  }
}

}  // namespace mtsd
