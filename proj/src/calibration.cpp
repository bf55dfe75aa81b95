#include "mtsd/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

namespace mtsd {

namespace {

double clamp_prob(double p) { return std::clamp(p, 1e-12, 1.0 - 1e-12); }

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Golden-section minimization on [lo, hi] to absolute tolerance 1e-4.
// Detectably flat objectives return the bracket midpoint.
double golden_section(const std::function<double(double)>& f, double lo, double hi) {
  const double mid = 0.5 * (lo + hi);
  const double f_lo = f(lo), f_mid = f(mid), f_hi = f(hi);
  const double spread = std::max({f_lo, f_mid, f_hi}) - std::min({f_lo, f_mid, f_hi});
  if (spread < 1e-12) return mid;

  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > 1e-4) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

}  // namespace

double nll_binary_logits(std::span<const double> logits, std::span<const double> labels,
                         double temp) {
  if (logits.size() != labels.size() || logits.empty()) {
    throw std::runtime_error("nll_binary_logits: length mismatch");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double p = clamp_prob(stable_sigmoid(logits[i] / temp));
    sum -= labels[i] > 0.5 ? std::log(p) : std::log(1.0 - p);
  }
  return sum / static_cast<double>(logits.size());
}

double nll_categorical_logits(const Tensor& logits, std::span<const std::size_t> true_classes,
                              double temp) {
  const std::size_t n = logits.rows(), k = logits.cols();
  if (true_classes.size() != n || n == 0) {
    throw std::runtime_error("nll_categorical_logits: length mismatch");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double mx = logits.at(i, 0) / temp;
    for (std::size_t c = 1; c < k; ++c) mx = std::max(mx, logits.at(i, c) / temp);
    double z = 0.0;
    for (std::size_t c = 0; c < k; ++c) z += std::exp(logits.at(i, c) / temp - mx);
    const double log_p = logits.at(i, true_classes[i]) / temp - mx - std::log(z);
    sum -= std::max(log_p, std::log(1e-12));
  }
  return sum / static_cast<double>(n);
}

TemperatureSet fit_temperature(const MultitaskModel& model, const MultitaskDataset& dataset,
                               std::span<const int> half_a, std::pair<double, double> bracket) {
  if (bracket.first <= 0.0 || bracket.first >= bracket.second) {
    throw std::runtime_error("fit_temperature: invalid bracket");
  }
  TemperatureSet temps;
  temps.fit_rows.assign(half_a.begin(), half_a.end());

  auto fit = [&](const std::function<double(double)>& nll) {
    const double t = golden_section(nll, bracket.first, bracket.second);
    // T=1 is inside the bracket, so the fit must never be worse than it.
    return nll(t) <= nll(1.0) ? t : 1.0;
  };

  // AU: one shared temperature over all 12 sigmoids.
  std::vector<int> au_rows = rows_with_task(dataset, half_a, Task::AU);
  if (au_rows.empty()) throw std::runtime_error("fit_temperature: no AU rows in fitting half");
  {
    LogitOutputs lo = eval_logits(model, gather_features(dataset, au_rows));
    std::vector<double> flat_logits, flat_labels;
    for (std::size_t i = 0; i < au_rows.size(); ++i) {
      const Instance& inst = dataset.instances[au_rows[i]];
      for (std::size_t c = 0; c < kNumAu; ++c) {
        flat_logits.push_back(lo.au.at(i, c));
        flat_labels.push_back(inst.y[c]);
      }
    }
    temps.au = fit([&](double t) { return nll_binary_logits(flat_logits, flat_labels, t); });
  }

  std::vector<int> expr_rows = rows_with_task(dataset, half_a, Task::EXPR);
  if (expr_rows.empty()) throw std::runtime_error("fit_temperature: no EXPR rows in fitting half");
  {
    LogitOutputs lo = eval_logits(model, gather_features(dataset, expr_rows));
    std::vector<std::size_t> truth(expr_rows.size());
    for (std::size_t i = 0; i < expr_rows.size(); ++i) {
      const Instance& inst = dataset.instances[expr_rows[i]];
      for (std::size_t c = 0; c < kNumExpr; ++c) {
        if (inst.y[c] > 0.5) truth[i] = c;
      }
    }
    temps.expr = fit([&](double t) { return nll_categorical_logits(lo.expr, truth, t); });
  }

  std::vector<int> va_rows = rows_with_task(dataset, half_a, Task::VA);
  if (va_rows.empty()) throw std::runtime_error("fit_temperature: no VA rows in fitting half");
  {
    LogitOutputs lo = eval_logits(model, gather_features(dataset, va_rows));
    std::vector<std::size_t> v_bins(va_rows.size()), a_bins(va_rows.size());
    for (std::size_t i = 0; i < va_rows.size(); ++i) {
      const Instance& inst = dataset.instances[va_rows[i]];
      v_bins[i] = va_bin(inst.y[0]);
      a_bins[i] = va_bin(inst.y[1]);
    }
    temps.valence = fit([&](double t) { return nll_categorical_logits(lo.valence, v_bins, t); });
    temps.arousal = fit([&](double t) { return nll_categorical_logits(lo.arousal, a_bins, t); });
  }
  return temps;
}

ProbOutputs apply_temperature(const LogitOutputs& logits, const TemperatureSet& temps) {
  for (double t : {temps.au, temps.expr, temps.valence, temps.arousal}) {
    if (!(t > 0.0)) throw std::runtime_error("apply_temperature: temperature must be > 0");
  }
  LogitOutputs scaled = logits;
  for (double& v : scaled.au.data) v /= temps.au;
  for (double& v : scaled.expr.data) v /= temps.expr;
  for (double& v : scaled.valence.data) v /= temps.valence;
  for (double& v : scaled.arousal.data) v /= temps.arousal;
  return probs_from_logits(scaled);
}

ProbOutputs mc_dropout_predict(const MultitaskModel& model, const Tensor& features, int passes,
                               Rng& rng) {
  if (passes < 1) throw std::runtime_error("mc_dropout_predict: passes must be >= 1");
  if (model.arch.dropout == 0.0) {
    // Every pass is the same deterministic forward; the mean is that forward.
    return eval_forward(model, features);
  }
  ProbOutputs acc;
  for (int pass = 0; pass < passes; ++pass) {
    ad::NoGradGuard guard;
    TapedParams tp = TapedParams::from(model);
    ForwardResult r = forward(tp, model.arch, features, /*train_mode=*/true, &rng);
    ProbOutputs p{r.au_probs.value(), r.expr_probs.value(), r.valence_probs.value(),
                  r.arousal_probs.value(), r.va_scalars.value()};
    if (pass == 0) {
      acc = std::move(p);
    } else {
      for (std::size_t i = 0; i < acc.au.numel(); ++i) acc.au.data[i] += p.au.data[i];
      for (std::size_t i = 0; i < acc.expr.numel(); ++i) acc.expr.data[i] += p.expr.data[i];
      for (std::size_t i = 0; i < acc.valence.numel(); ++i) acc.valence.data[i] += p.valence.data[i];
      for (std::size_t i = 0; i < acc.arousal.numel(); ++i) acc.arousal.data[i] += p.arousal.data[i];
    }
  }
  const double inv = 1.0 / static_cast<double>(passes);
  for (double& v : acc.au.data) v *= inv;
  for (double& v : acc.expr.data) v *= inv;
  for (double& v : acc.valence.data) v *= inv;
  for (double& v : acc.arousal.data) v *= inv;
  for (std::size_t i = 0; i < acc.au.rows(); ++i) {
    acc.va.at(i, 0) = decode_expectation(
        std::span<const double>(acc.valence.data).subspan(i * kNumVaBins, kNumVaBins));
    acc.va.at(i, 1) = decode_expectation(
        std::span<const double>(acc.arousal.data).subspan(i * kNumVaBins, kNumVaBins));
  }
  return acc;
}

}  // namespace mtsd
