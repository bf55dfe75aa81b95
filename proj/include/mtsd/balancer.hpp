#pragma once

#include <array>

namespace mtsd {

// Stall-counter loss balancing: a task that has not improved its validation
// metric for m epochs gets raw weight max(1, log2(m)); weights are then
// normalized to a probability vector. Counters start at 1 and reset to 1 on
// any strict improvement.
struct BalancerState {
  std::array<int, 3> stall{1, 1, 1};  // epochs since last improvement, per task
  std::array<double, 3> best{-1e300, -1e300, -1e300};
  std::array<double, 3> lambda{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
};

// One update per epoch, after validation. Metrics are higher-is-better;
// ties count as no improvement. Throws on NaN metrics.
BalancerState update_balancer(BalancerState state, const std::array<double, 3>& val_metrics);

}  // namespace mtsd
