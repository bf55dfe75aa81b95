#include "mtsd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mtsd {

namespace {

double entropy_nats(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

void check_simplex(std::span<const double> probs, const char* what) {
  double sum = 0.0;
  for (double p : probs) {
    if (p < -1e-12) throw std::runtime_error(std::string(what) + ": negative probability");
    sum += p;
  }
  if (std::fabs(sum - 1.0) > 1e-6) {
    throw std::runtime_error(std::string(what) + ": distribution does not sum to 1");
  }
}

double clamp_prob(double p) { return std::clamp(p, 1e-12, 1.0 - 1e-12); }

}  // namespace

double normalized_entropy(std::span<const double> probs) {
  if (probs.size() < 2) throw std::runtime_error("normalized_entropy: need at least 2 outcomes");
  check_simplex(probs, "normalized_entropy");
  return entropy_nats(probs) / std::log(static_cast<double>(probs.size()));
}

UncertaintyTriple decompose_uncertainty(const std::vector<std::vector<double>>& member_probs) {
  if (member_probs.empty()) throw std::runtime_error("decompose_uncertainty: no members");
  const std::size_t k = member_probs.front().size();
  if (k < 2) throw std::runtime_error("decompose_uncertainty: need at least 2 outcomes");
  std::vector<double> mean(k, 0.0);
  double aleatoric = 0.0;
  for (const auto& row : member_probs) {
    if (row.size() != k) throw std::runtime_error("decompose_uncertainty: inconsistent outcome count");
    check_simplex(row, "decompose_uncertainty");
    for (std::size_t j = 0; j < k; ++j) mean[j] += row[j];
    aleatoric += entropy_nats(row);
  }
  const double inv_t = 1.0 / static_cast<double>(member_probs.size());
  for (double& v : mean) v *= inv_t;
  aleatoric *= inv_t;
  const double total = entropy_nats(mean);
  return {total, aleatoric, total - aleatoric};
}

UncertaintyTriple decompose_uncertainty_normalized(
    const std::vector<std::vector<double>>& member_probs) {
  UncertaintyTriple t = decompose_uncertainty(member_probs);
  const double log_k = std::log(static_cast<double>(member_probs.front().size()));
  return {t.total / log_k, t.aleatoric / log_k, t.epistemic / log_k};
}

AuNll au_nll(const Tensor& au_probs, const std::vector<std::vector<double>>& labels) {
  const std::size_t n = au_probs.rows();
  if (labels.size() != n || n == 0) throw std::runtime_error("au_nll: label count mismatch");
  AuNll out;
  for (std::size_t c = 0; c < kNumAu; ++c) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double p = clamp_prob(au_probs.at(i, c));
      sum -= labels[i][c] > 0.5 ? std::log(p) : std::log(1.0 - p);
    }
    out.per_au[c] = sum / static_cast<double>(n);
    out.avg += out.per_au[c];
  }
  out.avg /= static_cast<double>(kNumAu);
  return out;
}

double expr_nll(const Tensor& expr_probs, const std::vector<std::vector<double>>& one_hot_labels) {
  const std::size_t n = expr_probs.rows();
  if (one_hot_labels.size() != n || n == 0) throw std::runtime_error("expr_nll: label count mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < kNumExpr; ++c) {
      if (one_hot_labels[i][c] > 0.5) {
        sum -= std::log(clamp_prob(expr_probs.at(i, c)));
        break;
      }
    }
  }
  return sum / static_cast<double>(n);
}

double rmse(std::span<const double> predictions, std::span<const double> targets) {
  if (predictions.size() != targets.size() || predictions.empty()) {
    throw std::runtime_error("rmse: length mismatch");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double d = predictions[i] - targets[i];
    sum += d * d;
  }
  return std::sqrt(sum / static_cast<double>(predictions.size()));
}

double ccc_value(std::span<const double> predictions, std::span<const double> targets) {
  const std::size_t n = predictions.size();
  if (n != targets.size() || n < 2) throw std::runtime_error("ccc_value: need >= 2 pairs");
  double mu_p = 0.0, mu_t = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mu_p += predictions[i];
    mu_t += targets[i];
  }
  mu_p /= static_cast<double>(n);
  mu_t /= static_cast<double>(n);
  double var_p = 0.0, var_t = 0.0, cov = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dp = predictions[i] - mu_p;
    const double dt = targets[i] - mu_t;
    var_p += dp * dp;
    var_t += dt * dt;
    cov += dp * dt;
  }
  var_p /= static_cast<double>(n);
  var_t /= static_cast<double>(n);
  cov /= static_cast<double>(n);
  const double gap = mu_p - mu_t;
  const double denom = var_p + var_t + gap * gap;
  if (denom == 0.0) return 1.0;  // both constant and equal
  return 2.0 * cov / denom;
}

namespace {

// Macro F1 over binary decisions for one class column; returns 0 when the
// class never appears in labels or predictions.
double binary_f1(std::size_t tp, std::size_t fp, std::size_t fn) {
  const std::size_t denom = 2 * tp + fp + fn;
  if (denom == 0) return 0.0;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

std::size_t argmax_row(const Tensor& m, std::size_t row) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < m.cols(); ++c) {
    if (m.at(row, c) > m.at(row, best)) best = c;
  }
  return best;
}

}  // namespace

double macro_f1_au(const Tensor& au_probs, const std::vector<std::vector<double>>& labels) {
  const std::size_t n = au_probs.rows();
  double f1_sum = 0.0;
  for (std::size_t c = 0; c < kNumAu; ++c) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const bool pred = au_probs.at(i, c) >= 0.5;
      const bool truth = labels[i][c] > 0.5;
      if (pred && truth) ++tp;
      else if (pred && !truth) ++fp;
      else if (!pred && truth) ++fn;
    }
    f1_sum += binary_f1(tp, fp, fn);
  }
  return f1_sum / static_cast<double>(kNumAu);
}

double element_accuracy_au(const Tensor& au_probs, const std::vector<std::vector<double>>& labels) {
  const std::size_t n = au_probs.rows();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < kNumAu; ++c) {
      if ((au_probs.at(i, c) >= 0.5) == (labels[i][c] > 0.5)) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(n * kNumAu);
}

double macro_f1_expr(const Tensor& expr_probs, const std::vector<std::vector<double>>& one_hot) {
  const std::size_t n = expr_probs.rows();
  double f1_sum = 0.0;
  for (std::size_t c = 0; c < kNumExpr; ++c) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const bool pred = argmax_row(expr_probs, i) == c;
      const bool truth = one_hot[i][c] > 0.5;
      if (pred && truth) ++tp;
      else if (pred && !truth) ++fp;
      else if (!pred && truth) ++fn;
    }
    f1_sum += binary_f1(tp, fp, fn);
  }
  return f1_sum / static_cast<double>(kNumExpr);
}

double accuracy_expr(const Tensor& expr_probs, const std::vector<std::vector<double>>& one_hot) {
  const std::size_t n = expr_probs.rows();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (one_hot[i][argmax_row(expr_probs, i)] > 0.5) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

EmotionMetrics emotion_metrics(const Tensor& au_probs, const std::vector<std::vector<double>>& au_labels,
                               const Tensor& expr_probs, const std::vector<std::vector<double>>& expr_labels,
                               const Tensor& va_scalars, const std::vector<std::array<double, 2>>& va_labels) {
  EmotionMetrics m;
  m.au_f1 = macro_f1_au(au_probs, au_labels);
  m.au_acc = element_accuracy_au(au_probs, au_labels);
  m.au_metric = 0.5 * m.au_f1 + 0.5 * m.au_acc;
  m.expr_f1 = macro_f1_expr(expr_probs, expr_labels);
  m.expr_acc = accuracy_expr(expr_probs, expr_labels);
  m.expr_metric = 0.67 * m.expr_f1 + 0.33 * m.expr_acc;

  const std::size_t n = va_scalars.rows();
  if (va_labels.size() != n) throw std::runtime_error("emotion_metrics: VA label count mismatch");
  std::vector<double> pv(n), pa(n), tv(n), ta(n);
  for (std::size_t i = 0; i < n; ++i) {
    pv[i] = va_scalars.at(i, 0);
    pa[i] = va_scalars.at(i, 1);
    tv[i] = va_labels[i][0];
    ta[i] = va_labels[i][1];
  }
  m.ccc_valence = ccc_value(pv, tv);
  m.ccc_arousal = ccc_value(pa, ta);
  m.total = m.au_metric + m.expr_metric + m.ccc_valence + m.ccc_arousal;
  return m;
}

std::vector<double> entropy_histogram(std::span<const double> values, int bins) {
  if (bins < 1) throw std::runtime_error("entropy_histogram: bins must be >= 1");
  std::vector<double> hist(static_cast<std::size_t>(bins), 0.0);
  if (values.empty()) return hist;
  for (double v : values) {
    const double c = std::clamp(v, 0.0, 1.0);
    std::size_t b = static_cast<std::size_t>(c * bins);
    if (b >= hist.size()) b = hist.size() - 1;
    hist[b] += 1.0;
  }
  for (double& h : hist) h /= static_cast<double>(values.size());
  return hist;
}

OodSeparation ood_separation(std::span<const double> in_domain_epistemic,
                             std::span<const double> ood_epistemic, double tau, int bins) {
  if (tau <= 0.0 || tau >= 1.0) throw std::runtime_error("ood_separation: tau must be in (0,1)");
  auto fraction_below = [tau](std::span<const double> v) {
    if (v.empty()) return 0.0;
    std::size_t below = 0;
    for (double x : v) {
      if (x < tau) ++below;
    }
    return static_cast<double>(below) / static_cast<double>(v.size());
  };
  OodSeparation sep;
  sep.tau = tau;
  sep.in_domain_fraction_below = fraction_below(in_domain_epistemic);
  sep.ood_fraction_below = fraction_below(ood_epistemic);
  sep.in_domain_hist = entropy_histogram(in_domain_epistemic, bins);
  sep.ood_hist = entropy_histogram(ood_epistemic, bins);
  return sep;
}

}  // namespace mtsd
