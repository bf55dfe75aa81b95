#include "mtsd/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

namespace mtsd {

double finite_difference_check(const std::function<ad::Var()>& f, std::vector<ad::Var>& params,
                               double step) {
  if (step <= 0.0) throw std::invalid_argument("finite_difference_check: step must be > 0");

  ad::Var loss = f();
  ad::backward(loss);
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (const ad::Var& p : params) analytic.push_back(p.grad());

  auto eval = [&]() {
    ad::NoGradGuard guard;
    const double v = f().value().data[0];
    if (!std::isfinite(v)) {
      throw std::runtime_error("finite_difference_check: non-finite value at perturbed point");
    }
    return v;
  };

  double max_rel = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i].mutable_value();
    for (std::size_t j = 0; j < p.numel(); ++j) {
      const double saved = p.data[j];
      p.data[j] = saved + step;
      const double plus = eval();
      p.data[j] = saved - step;
      const double minus = eval();
      p.data[j] = saved;
      const double numeric = (plus - minus) / (2.0 * step);
      const double a = analytic[i].data[j];
      const double rel = std::fabs(a - numeric) /
                         std::max({std::fabs(a), std::fabs(numeric), 1e-12});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace mtsd
