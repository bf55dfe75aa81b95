#pragma once

#include <array>
#include <span>

#include "mtsd/autodiff.hpp"
#include "mtsd/dataset.hpp"
#include "mtsd/tensor.hpp"

namespace mtsd {

// Probabilities are clamped to [kProbClamp, 1-kProbClamp] before any log.
inline constexpr double kProbClamp = 1e-12;

// Per-task losses with the weights used to combine them. The combined value
// is exactly lambda_au*au + lambda_expr*expr + lambda_va*va.
struct LossBreakdown {
  double au = 0.0;
  double expr = 0.0;
  double va = 0.0;
  std::array<double, 3> lambda{};
  double combined = 0.0;
};

// Class-reweighted binary cross entropy over 12 AUs: the positive-label term
// is scaled by the per-class negative/positive ratio; mean over the batch,
// then mean over classes. Labels must be exactly 0 or 1.
ad::Var loss_au_supervised(const ad::Var& logits, const Tensor& labels,
                           std::span<const double> au_weights);

// Reweighted cross entropy with one-hot targets; the true class's weight
// scales each instance's term.
ad::Var loss_expr_supervised(const ad::Var& logits, const Tensor& one_hot_labels,
                             std::span<const double> expr_weights);

// Concordance correlation coefficient with population (divide-by-N) moments.
// Both sequences constant and identical is the 0/0 limit and returns 1.
ad::Var ccc(const ad::Var& predictions, const Tensor& targets);

// (1 - CCC_valence) + (1 - CCC_arousal) over a B x 2 block of expectation
// decodes; the gradient flows through the decode into the softmax logits.
ad::Var loss_va_supervised(const ad::Var& va_scalars, const Tensor& targets);

// Distillation variants: soft targets replace hard labels. The AU form uses
// the same class weights as the supervised loss; EXPR uses
// KL(teacher || student); VA is the CCC loss against teacher scalars.
ad::Var loss_au_distill(const ad::Var& logits, const Tensor& teacher_probs,
                        std::span<const double> au_weights);
ad::Var loss_expr_distill(const ad::Var& logits, const Tensor& teacher_probs);
ad::Var loss_va_distill(const ad::Var& va_scalars, const Tensor& teacher_va);

// Weighted sum of the three task losses. Weights must be nonnegative and sum
// to 1 within 1e-9. Fills `out` with the scalar breakdown when non-null.
ad::Var combine_losses(const ad::Var& au, const ad::Var& expr, const ad::Var& va,
                       const std::array<double, 3>& lambda, LossBreakdown* out = nullptr);

}  // namespace mtsd
