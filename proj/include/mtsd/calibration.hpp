#pragma once

#include <span>
#include <utility>
#include <vector>

#include "mtsd/dataset.hpp"
#include "mtsd/model.hpp"
#include "mtsd/rng.hpp"

namespace mtsd {

// One positive scalar per classification head; the AU temperature is shared
// across all 12 sigmoids.
struct TemperatureSet {
  double au = 1.0;
  double expr = 1.0;
  double valence = 1.0;
  double arousal = 1.0;
  std::vector<int> fit_rows;  // validation half used for fitting
};

// Minimizes NLL(logits / T) over T in `bracket` by golden-section search
// (1e-4 tolerance) per task, on the given validation half. A flat objective
// returns the bracket midpoint; if the search somehow ends worse than T=1,
// the temperature falls back to 1.
TemperatureSet fit_temperature(const MultitaskModel& model, const MultitaskDataset& dataset,
                               std::span<const int> half_a,
                               std::pair<double, double> bracket = {0.05, 20.0});

ProbOutputs apply_temperature(const LogitOutputs& logits, const TemperatureSet& temps);

// Mean of `passes` dropout-active forward passes (the MC members). The va
// scalars come from the averaged distributions, as in ensemble prediction.
ProbOutputs mc_dropout_predict(const MultitaskModel& model, const Tensor& features, int passes,
                               Rng& rng);

// Scalar NLL helpers used by the temperature fit; exposed for tests.
double nll_binary_logits(std::span<const double> logits, std::span<const double> labels, double temp);
double nll_categorical_logits(const Tensor& logits, std::span<const std::size_t> true_classes,
                              double temp);

}  // namespace mtsd
