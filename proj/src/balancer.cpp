#include "mtsd/balancer.hpp"

#include <cmath>
#include <stdexcept>

namespace mtsd {

BalancerState update_balancer(BalancerState state, const std::array<double, 3>& val_metrics) {
  for (double m : val_metrics) {
    if (std::isnan(m)) throw std::runtime_error("update_balancer: NaN validation metric");
  }
  std::array<double, 3> raw{};
  double sum = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    if (val_metrics[i] > state.best[i]) {
      state.best[i] = val_metrics[i];
      state.stall[i] = 1;
    } else {
      state.stall[i] += 1;
    }
    raw[i] = std::max(1.0, std::log2(static_cast<double>(state.stall[i])));
    sum += raw[i];
  }
  for (std::size_t i = 0; i < 3; ++i) state.lambda[i] = raw[i] / sum;
  return state;
}

}  // namespace mtsd
