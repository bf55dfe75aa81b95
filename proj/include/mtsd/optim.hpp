#pragma once

#include <vector>

#include "mtsd/autodiff.hpp"
#include "mtsd/tensor.hpp"

namespace mtsd {

// Adam with the optimizer's canonical constants. One state per trained model.
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::vector<Tensor> m;  // first moments, one per parameter
  std::vector<Tensor> v;  // second moments

  static AdamState init(const std::vector<ad::Var>& params);
};

// In-place bias-corrected Adam update. `grads` must align with `params`;
// throws on shape disagreement or a non-finite update.
void adam_step(std::vector<ad::Var>& params, const std::vector<Tensor>& grads, AdamState& state,
               double lr);

}  // namespace mtsd
