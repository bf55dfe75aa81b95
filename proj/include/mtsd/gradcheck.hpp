#pragma once

#include <functional>
#include <vector>

#include "mtsd/autodiff.hpp"

namespace mtsd {

// Compares the analytic gradient of a scalar-valued function against central
// finite differences. `f` must rebuild the scalar from the current parameter
// values on every call (the closure re-reads params). Returns the maximum
// over all parameter entries of
//   |analytic - numeric| / max(|analytic|, |numeric|, 1e-12).
double finite_difference_check(const std::function<ad::Var()>& f, std::vector<ad::Var>& params,
                               double step = 1e-5);

}  // namespace mtsd
