#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mtsd/rng.hpp"
#include "mtsd/tensor.hpp"

namespace mtsd {

inline constexpr std::size_t kNumAu = 12;
inline constexpr std::size_t kNumExpr = 7;
inline constexpr std::size_t kNumVaBins = 20;

enum class Task { AU, EXPR, VA };

std::string task_name(Task t);
Task task_from_name(const std::string& name);

// One instance carries exactly one label type:
// AU -> 12 binary values, EXPR -> one-hot 7-vector, VA -> two floats in [-1,1].
struct Instance {
  int id = 0;
  std::vector<double> x;
  Task task = Task::AU;
  std::vector<double> y;
};

struct MultitaskDataset {
  std::size_t dim = 0;
  std::vector<Instance> instances;
  std::vector<int> train_idx;  // row indices into `instances`
  std::vector<int> val_idx;

  // Throws if any structural invariant is broken (label arity, one-hot sums,
  // VA range, split partition).
  void validate() const;
};

struct GeneratorConfig {
  int n = 3000;
  int dim = 16;
  int mixture_components = 6;
  std::array<double, 3> task_proportions{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  double au_noise = 0.05;
  double expr_noise = 0.08;
  double va_noise = 0.1;
  double imbalance_skew = 0.8;  // geometric decay of AU positive rates
  double ood_shift = 6.0;       // offset in units of the component sigma
  double val_fraction = 0.25;
  int ood_n = 750;

  void validate() const;  // throws on degenerate settings
};

// The sampled generator itself, kept so labels can be re-derived in tests
// (zero noise reproduces the threshold rule exactly).
struct GeneratorModel {
  Tensor mixture_means;              // K x D
  std::vector<double> mixture_weights;
  double sigma = 1.0;                // shared spherical component sd
  Tensor au_projections;             // 12 x D, unit rows
  std::array<double, kNumAu> au_thresholds{};
  Tensor expr_projections;           // 7 x D
  std::array<double, kNumExpr> expr_offsets{};  // calibrated so no class is empty
  Tensor va_projections;             // 2 x D, unit rows
  double va_gain = 0.4;

  bool au_rule(std::span<const double> x, std::size_t au) const;
  std::size_t expr_rule(std::span<const double> x) const;
};

struct GeneratedData {
  MultitaskDataset dataset;
  GeneratorModel model;
};

// Pure functions of (config, seed): identical calls produce identical bytes.
GeneratedData generate_dataset(const GeneratorConfig& config, std::uint64_t seed);
Tensor generate_ood(const GeneratorConfig& config, std::uint64_t seed);

struct ClassWeights {
  std::array<double, kNumAu> au{};      // negatives/positives per AU
  std::array<double, kNumExpr> expr{};  // normalized inverse frequency
};

// Computed over the training split only. Throws, naming the class, when an
// AU lacks positives or negatives or an EXPR class is empty.
ClassWeights compute_class_weights(const MultitaskDataset& dataset);

// 20 half-open bins over [-1, 1); the value 1.0 falls in the last bin.
std::size_t va_bin(double value);
std::vector<double> discretize_va(double value);  // one-hot of length 20
double va_bin_center(std::size_t bin);
double decode_expectation(std::span<const double> probs);

// batch_size/3 training indices per task, drawn uniformly without
// replacement within each task, returned in shuffled order.
std::vector<int> sample_balanced_batch(const MultitaskDataset& dataset, std::size_t batch_size,
                                       Rng& rng);

// Row gathering helpers used by training and evaluation.
Tensor gather_features(const MultitaskDataset& dataset, std::span<const int> rows);
std::vector<int> rows_with_task(const MultitaskDataset& dataset, std::span<const int> rows, Task t);

// JSON-lines persistence; one record per instance:
//   {"id": int, "task": "AU"|"EXPR"|"VA", "x": [...], "y": [...]}
// Split assignment lives in a sibling JSON document {"train": [...], "val": [...]}.
void save_dataset(const MultitaskDataset& dataset, const std::filesystem::path& data_file,
                  const std::filesystem::path& splits_file);
MultitaskDataset load_dataset(const std::filesystem::path& data_file,
                              const std::filesystem::path& splits_file);

void save_features(const Tensor& features, const std::filesystem::path& file);
Tensor load_features(const std::filesystem::path& file);

}  // namespace mtsd
