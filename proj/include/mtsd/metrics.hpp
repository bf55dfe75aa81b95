#pragma once

#include <array>
#include <span>
#include <vector>

#include "mtsd/dataset.hpp"
#include "mtsd/model.hpp"
#include "mtsd/tensor.hpp"

namespace mtsd {

// Shannon entropy of a distribution divided by log(k); in [0, 1].
// Natural logs throughout (the ratio is base-invariant).
double normalized_entropy(std::span<const double> probs);

struct UncertaintyTriple {
  double total = 0.0;
  double aleatoric = 0.0;
  double epistemic = 0.0;  // total - aleatoric, the member-disagreement part
};

// Entropy decomposition over T member distributions on k outcomes:
// total = H(mean), aleatoric = mean member entropy, epistemic = difference.
UncertaintyTriple decompose_uncertainty(const std::vector<std::vector<double>>& member_probs);
// Same, with all three divided by log(k).
UncertaintyTriple decompose_uncertainty_normalized(
    const std::vector<std::vector<double>>& member_probs);

struct AuNll {
  std::array<double, kNumAu> per_au{};
  double avg = 0.0;
};

// Per-AU mean binary NLL (then averaged across the 12 AUs), in nats.
AuNll au_nll(const Tensor& au_probs, const std::vector<std::vector<double>>& labels);
// Mean categorical NLL of the true class, in nats.
double expr_nll(const Tensor& expr_probs, const std::vector<std::vector<double>>& one_hot_labels);

double rmse(std::span<const double> predictions, std::span<const double> targets);

// Concordance correlation coefficient on plain scalars (population moments),
// for evaluation; the differentiable version lives with the losses.
double ccc_value(std::span<const double> predictions, std::span<const double> targets);

struct EmotionMetrics {
  double au_f1 = 0.0, au_acc = 0.0, au_metric = 0.0;          // 0.5*F1 + 0.5*Acc
  double expr_f1 = 0.0, expr_acc = 0.0, expr_metric = 0.0;    // 0.67*F1 + 0.33*Acc
  double ccc_valence = 0.0, ccc_arousal = 0.0;
  double total = 0.0;  // au_metric + expr_metric + ccc_valence + ccc_arousal
};

// AU decisions threshold probabilities at 0.5; EXPR takes the argmax; a class
// absent from both predictions and labels contributes F1 = 0 to the macro
// average.
double macro_f1_au(const Tensor& au_probs, const std::vector<std::vector<double>>& labels);
double element_accuracy_au(const Tensor& au_probs, const std::vector<std::vector<double>>& labels);
double macro_f1_expr(const Tensor& expr_probs, const std::vector<std::vector<double>>& one_hot);
double accuracy_expr(const Tensor& expr_probs, const std::vector<std::vector<double>>& one_hot);

EmotionMetrics emotion_metrics(const Tensor& au_probs, const std::vector<std::vector<double>>& au_labels,
                               const Tensor& expr_probs, const std::vector<std::vector<double>>& expr_labels,
                               const Tensor& va_scalars, const std::vector<std::array<double, 2>>& va_labels);

struct OodSeparation {
  double tau = 0.0;
  double in_domain_fraction_below = 0.0;
  double ood_fraction_below = 0.0;
  std::vector<double> in_domain_hist;  // ratios over uniform bins on [0,1]
  std::vector<double> ood_hist;
};

OodSeparation ood_separation(std::span<const double> in_domain_epistemic,
                             std::span<const double> ood_epistemic, double tau, int bins = 20);

// Ratio histogram of values clamped into [0,1]; ratios sum to 1 for
// non-empty input.
std::vector<double> entropy_histogram(std::span<const double> values, int bins);

}  // namespace mtsd
