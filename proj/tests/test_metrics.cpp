#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mtsd/metrics.hpp"
#include "mtsd/rng.hpp"
#include "oracles.hpp"

using namespace mtsd;

namespace {

std::vector<double> random_simplex(Rng& rng, std::size_t k) {
  std::vector<double> p(k);
  double sum = 0.0;
  for (double& v : p) {
    v = -std::log(1.0 - rng.uniform());
    sum += v;
  }
  for (double& v : p) v /= sum;
  return p;
}

}  // namespace

TEST_CASE("normalized entropy pinned values") {
  std::vector<double> uniform7(7, 1.0 / 7.0);
  CHECK(normalized_entropy(uniform7) == doctest::Approx(1.0).epsilon(1e-12));
  std::vector<double> one_hot{1.0, 0.0, 0.0, 0.0};
  CHECK(normalized_entropy(one_hot) == doctest::Approx(0.0).epsilon(1e-12));
  // Hand evaluation: -(0.75 ln 0.75 + 0.25 ln 0.25) / ln 2.
  std::vector<double> p{0.75, 0.25};
  CHECK(normalized_entropy(p) == doctest::Approx(0.811278124459).epsilon(1e-9));
  std::vector<double> degenerate{1.0};
  CHECK_THROWS(normalized_entropy(degenerate));
}

TEST_CASE("normalized entropy is permutation invariant") {
  Rng rng(4);
  std::vector<double> p = random_simplex(rng, 7);
  const double base = normalized_entropy(p);
  for (int rep = 0; rep < 10; ++rep) {
    rng.shuffle(p);
    CHECK(normalized_entropy(p) == doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("uncertainty decomposition pinned cases") {
  // Identical members: epistemic exactly zero.
  std::vector<std::vector<double>> same(5, {0.2, 0.3, 0.5});
  UncertaintyTriple t = decompose_uncertainty(same);
  CHECK(std::fabs(t.epistemic) < 1e-12);
  CHECK(t.total == doctest::Approx(t.aleatoric).epsilon(1e-12));

  // Maximal two-member disagreement: aleatoric 0, total ln 2.
  std::vector<std::vector<double>> disagree{{1.0, 0.0}, {0.0, 1.0}};
  t = decompose_uncertainty(disagree);
  CHECK(t.aleatoric == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(t.total == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(t.epistemic == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  UncertaintyTriple norm = decompose_uncertainty_normalized(disagree);
  CHECK(norm.epistemic == doctest::Approx(1.0).epsilon(1e-12));

  std::vector<std::vector<double>> ragged{{0.5, 0.5}, {0.3, 0.3, 0.4}};
  CHECK_THROWS(decompose_uncertainty(ragged));
}

TEST_CASE("decomposition identity and nonnegative epistemic on random members") {
  Rng rng(10);
  for (int rep = 0; rep < 2000; ++rep) {
    const std::size_t k = 2 + rng.uniform_index(19);
    const std::size_t members = 1 + rng.uniform_index(8);
    std::vector<std::vector<double>> rows;
    for (std::size_t m = 0; m < members; ++m) rows.push_back(random_simplex(rng, k));
    UncertaintyTriple t = decompose_uncertainty(rows);
    CHECK(std::fabs(t.total - (t.aleatoric + t.epistemic)) < 1e-9);
    CHECK(t.epistemic >= -1e-12);
  }
}

TEST_CASE("NLL pinned values") {
  // Probability 1 on the truth: zero loss at the clamp.
  Tensor expr = Tensor::zeros({1, kNumExpr});
  expr.at(0, 4) = 1.0;
  std::vector<std::vector<double>> label{{0, 0, 0, 0, 1, 0, 0}};
  CHECK(expr_nll(expr, label) == doctest::Approx(0.0).epsilon(1e-10));
  // Uniform prediction: ln 7.
  Tensor uniform = Tensor::full({1, kNumExpr}, 1.0 / kNumExpr);
  CHECK(expr_nll(uniform, label) == doctest::Approx(std::log(7.0)).epsilon(1e-12));
  // Binary 0.5 everywhere: ln 2 per AU.
  Tensor au = Tensor::full({3, kNumAu}, 0.5);
  std::vector<std::vector<double>> au_labels(3, std::vector<double>(kNumAu, 1.0));
  AuNll nll = au_nll(au, au_labels);
  for (double v : nll.per_au) CHECK(v == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(nll.avg == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("rmse pinned values") {
  std::vector<double> a{0.1, -0.2, 0.3};
  CHECK(rmse(a, a) == 0.0);
  std::vector<double> b{0.4, 0.1, 0.6};
  CHECK(rmse(a, b) == doctest::Approx(0.3).epsilon(1e-12));
  std::vector<double> zeros{0.0, 0.0};
  std::vector<double> t{0.3, -0.4};
  CHECK(rmse(zeros, t) == doctest::Approx(std::sqrt((0.09 + 0.16) / 2.0)).epsilon(1e-12));
}

TEST_CASE("perfect AU predictions give metric 1") {
  Rng rng(3);
  const std::size_t n = 20;
  Tensor probs = Tensor::zeros({n, kNumAu});
  std::vector<std::vector<double>> labels(n, std::vector<double>(kNumAu, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < kNumAu; ++c) {
      const bool on = rng.uniform() < 0.5;
      labels[i][c] = on ? 1.0 : 0.0;
      probs.at(i, c) = on ? 0.9 : 0.1;
    }
  }
  CHECK(macro_f1_au(probs, labels) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(element_accuracy_au(probs, labels) == 1.0);
}

TEST_CASE("EXPR single-class predictor on a balanced set matches the confusion oracle") {
  const std::size_t per_class = 4;
  const std::size_t n = per_class * kNumExpr;
  Tensor probs = Tensor::zeros({n, kNumExpr});
  std::vector<std::vector<double>> labels;
  std::vector<std::size_t> pred_classes, true_classes;
  for (std::size_t i = 0; i < n; ++i) {
    probs.at(i, 2) = 1.0;  // always predicts class 2
    pred_classes.push_back(2);
    const std::size_t truth = i / per_class;
    true_classes.push_back(truth);
    std::vector<double> row(kNumExpr, 0.0);
    row[truth] = 1.0;
    labels.push_back(row);
  }
  const oracle::ConfusionStats ref = oracle::confusion_oracle(pred_classes, true_classes, kNumExpr);
  CHECK(accuracy_expr(probs, labels) == doctest::Approx(ref.accuracy).epsilon(1e-12));
  CHECK(macro_f1_expr(probs, labels) == doctest::Approx(ref.macro_f1).epsilon(1e-12));
  // Analytic values: acc 1/7, macro F1 (2/8)/7.
  CHECK(ref.accuracy == doctest::Approx(1.0 / 7.0).epsilon(1e-12));
  CHECK(ref.macro_f1 == doctest::Approx(0.25 / 7.0).epsilon(1e-12));
}

TEST_CASE("random EXPR predictions match the confusion oracle") {
  Rng rng(8);
  const std::size_t n = 200;
  Tensor probs = Tensor::zeros({n, kNumExpr});
  std::vector<std::vector<double>> labels;
  std::vector<std::size_t> pred_classes, true_classes;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> p = random_simplex(rng, kNumExpr);
    std::size_t arg = 0;
    for (std::size_t c = 0; c < kNumExpr; ++c) {
      probs.at(i, c) = p[c];
      if (p[c] > p[arg]) arg = c;
    }
    pred_classes.push_back(arg);
    const std::size_t truth = rng.uniform_index(kNumExpr);
    true_classes.push_back(truth);
    std::vector<double> row(kNumExpr, 0.0);
    row[truth] = 1.0;
    labels.push_back(row);
  }
  const oracle::ConfusionStats ref = oracle::confusion_oracle(pred_classes, true_classes, kNumExpr);
  CHECK(accuracy_expr(probs, labels) == doctest::Approx(ref.accuracy).epsilon(1e-12));
  CHECK(macro_f1_expr(probs, labels) == doctest::Approx(ref.macro_f1).epsilon(1e-12));
}

TEST_CASE("perfect VA predictions contribute 2 to the total emotion metric") {
  const std::size_t n = 10;
  Rng rng(6);
  Tensor au = Tensor::full({n, kNumAu}, 0.9);
  std::vector<std::vector<double>> au_labels(n, std::vector<double>(kNumAu, 1.0));
  Tensor expr = Tensor::zeros({n, kNumExpr});
  std::vector<std::vector<double>> expr_labels;
  for (std::size_t i = 0; i < n; ++i) {
    expr.at(i, 1) = 1.0;
    std::vector<double> row(kNumExpr, 0.0);
    row[1] = 1.0;
    expr_labels.push_back(row);
  }
  Tensor va = Tensor::zeros({n, 2});
  std::vector<std::array<double, 2>> va_labels;
  for (std::size_t i = 0; i < n; ++i) {
    va.at(i, 0) = rng.normal() * 0.3;
    va.at(i, 1) = rng.normal() * 0.3;
    va_labels.push_back({va.at(i, 0), va.at(i, 1)});
  }
  EmotionMetrics m = emotion_metrics(au, au_labels, expr, expr_labels, va, va_labels);
  CHECK(m.ccc_valence == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(m.ccc_arousal == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(m.total == doctest::Approx(m.au_metric + m.expr_metric + 2.0).epsilon(1e-12));
}

TEST_CASE("ood separation pinned cases") {
  std::vector<double> zeros(50, 0.0), ones(50, 1.0);
  OodSeparation sep = ood_separation(zeros, ones, 0.05);
  CHECK(sep.in_domain_fraction_below == 1.0);
  CHECK(sep.ood_fraction_below == 0.0);
  std::vector<double> same{0.01, 0.2, 0.6};
  sep = ood_separation(same, same, 0.05);
  CHECK(sep.in_domain_fraction_below == sep.ood_fraction_below);
  CHECK_THROWS(ood_separation(zeros, ones, 0.0));
}

TEST_CASE("histogram ratios sum to 1") {
  Rng rng(2);
  std::vector<double> values;
  for (int i = 0; i < 333; ++i) values.push_back(rng.uniform());
  std::vector<double> hist = entropy_histogram(values, 20);
  double sum = 0.0;
  for (double h : hist) sum += h;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
}
