#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mtsd/calibration.hpp"
#include "mtsd/config.hpp"
#include "mtsd/dataset.hpp"
#include "mtsd/engine.hpp"
#include "mtsd/metrics.hpp"

namespace mtsd {

// One method row of the comparison tables: teacher/student single-model
// means, their ensembles, temperature scaling, and MC dropout.
struct MethodRow {
  std::string name;
  bool has_au_nll = false;
  AuNll au;
  bool has_expr_nll = false;
  double expr_nll = 0.0;
  bool has_rmse = false;
  double rmse_valence = 0.0;
  double rmse_arousal = 0.0;
  bool has_emotion = false;
  EmotionMetrics emotion;
};

struct LabelHistogram {
  std::string label;  // "AU1".."AU26", "EXPR", "valence", "arousal"
  std::vector<double> total;
  std::vector<double> aleatoric;
  std::vector<double> epistemic;
};

struct UncertaintyReport {
  int evaluated_generation = 0;  // generation whose ensemble drives uncertainty
  double tau = 0.05;
  int histogram_bins = 20;
  std::vector<MethodRow> rows;
  std::vector<LabelHistogram> histograms;  // over the validation split
  OodSeparation ood_expr;     // EXPR-head epistemic, the headline OOD signal
  OodSeparation ood_au_mean;  // mean per-AU epistemic
  OodSeparation ood_valence;
  OodSeparation ood_arousal;
};

// Loads every generation's checkpoints from `run_dir` (gen{k}/member{t}.json)
// and evaluates single models, ensembles, temperature scaling on the teacher
// members ("test-time cross-validation": fit on one half of the validation
// split, score on the other), and MC dropout on the teacher members.
// `generation` restricts the single/ensemble rows to one generation when >= 0.
UncertaintyReport evaluate_run(const std::filesystem::path& run_dir,
                               const MultitaskDataset& dataset, const Tensor& ood_features,
                               const EvalOptions& options, std::uint64_t seed,
                               int generation = -1);

void save_uncertainty_report(const UncertaintyReport& report, const std::filesystem::path& file);
UncertaintyReport load_uncertainty_report(const std::filesystem::path& file);

// CSV renderings (au_nll.csv, summary.csv, emotion.csv,
// histograms_{total,aleatoric,epistemic}.csv, ood.csv).
void write_report_csvs(const UncertaintyReport& report, const std::filesystem::path& dir);

// The AU table header names the real action units.
extern const char* const kAuNames[kNumAu];

}  // namespace mtsd
