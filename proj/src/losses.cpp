#include "mtsd/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace mtsd {

namespace {

void check_2d(const ad::Var& v, std::size_t cols, const char* what) {
  if (v.value().shape.size() != 2 || v.value().cols() != cols) {
    throw std::runtime_error(std::string(what) + ": expected B x " + std::to_string(cols) +
                             ", got " + shape_str(v.value().shape));
  }
}

// Weighted soft-target BCE shared by the supervised and distillation AU
// losses (the supervised case is the corner where targets are 0/1).
ad::Var weighted_bce(const ad::Var& logits, const Tensor& targets,
                     std::span<const double> au_weights) {
  const std::size_t batch = logits.value().rows();
  // Per-element weights: p_c on the target(-weighted) term only.
  Tensor pos_w = Tensor::zeros({batch, kNumAu});
  for (std::size_t i = 0; i < batch; ++i) {
    for (std::size_t c = 0; c < kNumAu; ++c) {
      pos_w.at(i, c) = au_weights[c] * targets.at(i, c);
    }
  }
  ad::Var probs = ad::clamp(ad::sigmoid(logits), kProbClamp, 1.0 - kProbClamp);
  ad::Var log_p = ad::log(probs);
  ad::Var log_1mp = ad::log(ad::sub(ad::constant(Tensor::full({batch, kNumAu}, 1.0)), probs));
  Tensor neg_w = Tensor::zeros({batch, kNumAu});
  for (std::size_t i = 0; i < batch; ++i) {
    for (std::size_t c = 0; c < kNumAu; ++c) neg_w.at(i, c) = 1.0 - targets.at(i, c);
  }
  ad::Var pos_term = ad::mul(ad::constant(std::move(pos_w)), log_p);
  ad::Var neg_term = ad::mul(ad::constant(std::move(neg_w)), log_1mp);
  // mean over batch and classes of -(p_c y log p + (1-y) log(1-p))
  return ad::mul_scalar(ad::mean_all(ad::add(pos_term, neg_term)), -1.0);
}

}  // namespace

ad::Var loss_au_supervised(const ad::Var& logits, const Tensor& labels,
                           std::span<const double> au_weights) {
  check_2d(logits, kNumAu, "loss_au_supervised");
  if (!labels.same_shape(logits.value())) {
    throw std::runtime_error("loss_au_supervised: label shape mismatch");
  }
  for (double v : labels.data) {
    if (v != 0.0 && v != 1.0) throw std::runtime_error("loss_au_supervised: non-binary label");
  }
  for (double w : au_weights) {
    if (!(w > 0.0)) throw std::runtime_error("loss_au_supervised: non-positive class weight");
  }
  return weighted_bce(logits, labels, au_weights);
}

ad::Var loss_expr_supervised(const ad::Var& logits, const Tensor& one_hot_labels,
                             std::span<const double> expr_weights) {
  check_2d(logits, kNumExpr, "loss_expr_supervised");
  if (!one_hot_labels.same_shape(logits.value())) {
    throw std::runtime_error("loss_expr_supervised: label shape mismatch");
  }
  const std::size_t batch = logits.value().rows();
  Tensor weighted_labels = Tensor::zeros({batch, kNumExpr});
  for (std::size_t i = 0; i < batch; ++i) {
    double sum = 0.0;
    for (std::size_t c = 0; c < kNumExpr; ++c) {
      const double y = one_hot_labels.at(i, c);
      if (y != 0.0 && y != 1.0) throw std::runtime_error("loss_expr_supervised: non-one-hot label");
      sum += y;
      weighted_labels.at(i, c) = expr_weights[c] * y;
    }
    if (sum != 1.0) throw std::runtime_error("loss_expr_supervised: label row is not one-hot");
  }
  ad::Var log_probs =
      ad::log(ad::clamp(ad::softmax_rows(logits), kProbClamp, 1.0 - kProbClamp));
  // sum over classes picks the true class; mean over batch needs sum/batch.
  ad::Var picked = ad::mul(ad::constant(std::move(weighted_labels)), log_probs);
  return ad::mul_scalar(ad::sum_all(picked), -1.0 / static_cast<double>(batch));
}

ad::Var ccc(const ad::Var& predictions, const Tensor& targets) {
  const std::size_t n = predictions.value().numel();
  if (targets.numel() != n) throw std::runtime_error("ccc: length mismatch");
  if (n < 2) throw std::runtime_error("ccc: need at least 2 samples");

  // Target moments are constants.
  double mu_t = 0.0;
  for (double v : targets.data) mu_t += v;
  mu_t /= static_cast<double>(n);
  Tensor centered_t = targets;
  double var_t = 0.0;
  for (double& v : centered_t.data) {
    v -= mu_t;
    var_t += v * v;
  }
  var_t /= static_cast<double>(n);

  ad::Var mu_p = ad::mean_all(predictions);
  ad::Var centered_p = ad::sub(predictions, mu_p);
  ad::Var var_p = ad::mean_all(ad::mul(centered_p, centered_p));
  ad::Var cov = ad::mean_all(ad::mul(centered_p, ad::constant(std::move(centered_t))));
  ad::Var gap = ad::add_scalar(mu_p, -mu_t);
  ad::Var denom = ad::add(ad::add_scalar(var_p, var_t), ad::mul(gap, gap));
  if (denom.value().data[0] == 0.0) {
    // Both sequences constant with equal means: the perfect-agreement limit.
    return ad::constant(Tensor::scalar(1.0));
  }
  return ad::div(ad::mul_scalar(cov, 2.0), denom);
}

ad::Var loss_va_supervised(const ad::Var& va_scalars, const Tensor& targets) {
  check_2d(va_scalars, 2, "loss_va_supervised");
  if (!targets.same_shape(va_scalars.value())) {
    throw std::runtime_error("loss_va_supervised: target shape mismatch");
  }
  ad::Var loss = ad::constant(Tensor::scalar(0.0));
  for (std::size_t c = 0; c < 2; ++c) {
    ad::Var pred = ad::slice_cols(va_scalars, c, 1);
    Tensor tgt = Tensor::zeros({targets.rows(), 1});
    for (std::size_t i = 0; i < targets.rows(); ++i) tgt.at(i, 0) = targets.at(i, c);
    ad::Var one_minus = ad::add_scalar(ad::mul_scalar(ccc(pred, tgt), -1.0), 1.0);
    loss = ad::add(loss, one_minus);
  }
  return loss;
}

ad::Var loss_au_distill(const ad::Var& logits, const Tensor& teacher_probs,
                        std::span<const double> au_weights) {
  check_2d(logits, kNumAu, "loss_au_distill");
  if (!teacher_probs.same_shape(logits.value())) {
    throw std::runtime_error("loss_au_distill: teacher shape mismatch");
  }
  for (double p : teacher_probs.data) {
    if (p < 0.0 || p > 1.0) throw std::runtime_error("loss_au_distill: teacher prob outside [0,1]");
  }
  return weighted_bce(logits, teacher_probs, au_weights);
}

ad::Var loss_expr_distill(const ad::Var& logits, const Tensor& teacher_probs) {
  check_2d(logits, kNumExpr, "loss_expr_distill");
  if (!teacher_probs.same_shape(logits.value())) {
    throw std::runtime_error("loss_expr_distill: teacher shape mismatch");
  }
  const std::size_t batch = teacher_probs.rows();
  // Constant part of KL(t || s): sum t log t per row; 0 log 0 := 0.
  double t_entropy_term = 0.0;
  for (std::size_t i = 0; i < batch; ++i) {
    double row_sum = 0.0;
    for (std::size_t c = 0; c < kNumExpr; ++c) {
      const double t = teacher_probs.at(i, c);
      if (t < 0.0) throw std::runtime_error("loss_expr_distill: negative teacher prob");
      row_sum += t;
      if (t > 0.0) t_entropy_term += t * std::log(t);
    }
    if (std::fabs(row_sum - 1.0) > 1e-6) {
      throw std::runtime_error("loss_expr_distill: teacher row not normalized");
    }
  }
  ad::Var log_s = ad::log(ad::clamp(ad::softmax_rows(logits), kProbClamp, 1.0 - kProbClamp));
  ad::Var cross = ad::sum_all(ad::mul(ad::constant(teacher_probs), log_s));
  // KL = (sum t log t - sum t log s) / batch
  ad::Var kl = ad::mul_scalar(cross, -1.0 / static_cast<double>(batch));
  return ad::add_scalar(kl, t_entropy_term / static_cast<double>(batch));
}

ad::Var loss_va_distill(const ad::Var& va_scalars, const Tensor& teacher_va) {
  return loss_va_supervised(va_scalars, teacher_va);
}

ad::Var combine_losses(const ad::Var& au, const ad::Var& expr, const ad::Var& va,
                       const std::array<double, 3>& lambda, LossBreakdown* out) {
  double sum = 0.0;
  for (double l : lambda) {
    if (l < 0.0) throw std::runtime_error("combine_losses: negative weight");
    sum += l;
  }
  if (std::fabs(sum - 1.0) > 1e-9) throw std::runtime_error("combine_losses: weights must sum to 1");
  ad::Var combined = ad::add(ad::add(ad::mul_scalar(au, lambda[0]), ad::mul_scalar(expr, lambda[1])),
                             ad::mul_scalar(va, lambda[2]));
  if (out) {
    out->au = au.value().data[0];
    out->expr = expr.value().data[0];
    out->va = va.value().data[0];
    out->lambda = lambda;
    out->combined = combined.value().data[0];
  }
  return combined;
}

}  // namespace mtsd
