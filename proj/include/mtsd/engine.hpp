#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mtsd/balancer.hpp"
#include "mtsd/dataset.hpp"
#include "mtsd/losses.hpp"
#include "mtsd/metrics.hpp"
#include "mtsd/model.hpp"

namespace mtsd {

struct Hyper {
  int epochs = 10;
  double lr = 1e-3;
  int decay_interval = 3;   // epochs between x decay_factor steps
  double decay_factor = 0.1;
  int batch_size = 30;      // balanced: batch_size/3 instances per task

  void validate() const;
};

// Ensemble predictions cached over the training split, used as distillation
// targets for every instance regardless of its original label type.
struct SoftLabelSet {
  int generation = 0;            // ensemble that produced these labels
  std::uint64_t ensemble_checksum = 0;
  std::vector<int> ids;          // instance ids, aligned with the rows below
  Tensor au;                     // n x 12
  Tensor expr;                   // n x 7
  Tensor valence;                // n x 20
  Tensor arousal;                // n x 20
  Tensor va;                     // n x 2

  // Row position for a dataset instance id; throws if absent.
  std::size_t row_of(int id) const;
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;  // mean combined loss over the epoch's steps
  std::array<double, 3> val_metrics{};  // AU / EXPR / VA emotion metrics
  std::array<int, 3> stall{};
  std::array<double, 3> lambda{};
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
};

// Trains one member. Hard mode (soft == nullptr) uses the supervision losses
// over each instance's own labels; soft mode uses the distillation losses
// against the soft-label rows for all three tasks. The balancer updates the
// task weights after each epoch's validation in both modes. Deterministic in
// (inputs, seed); a non-finite loss aborts with the offending epoch in the
// message.
MultitaskModel train_member(const MultitaskModel& initial, const MultitaskDataset& dataset,
                            const ClassWeights& weights, const SoftLabelSet* soft,
                            const Hyper& hyper, std::uint64_t seed, TrainHistory* history);

SoftLabelSet generate_soft_labels(std::span<const MultitaskModel> members,
                                  const MultitaskDataset& dataset, int generation);

void save_soft_labels(const SoftLabelSet& soft, const std::filesystem::path& file);
SoftLabelSet load_soft_labels(const std::filesystem::path& file);

// Per-model evaluation row on the validation split.
struct MemberEval {
  EmotionMetrics emotion;
  AuNll au;
  double expr_nll = 0.0;
  double rmse_valence = 0.0;
  double rmse_arousal = 0.0;
};

MemberEval evaluate_outputs(const ProbOutputs& probs, const MultitaskDataset& dataset,
                            std::span<const int> rows);

struct GenerationRecord {
  int generation = 0;
  std::vector<TrainHistory> histories;      // one per member
  std::vector<MemberEval> member_evals;
  MemberEval ensemble_eval;
  double mean_member_au_nll = 0.0;
  double mean_member_expr_nll = 0.0;
  std::optional<std::string> soft_label_checksum;  // set when this generation produced soft labels
};

struct GenerationReport {
  int members = 0;
  int generations = 0;  // K; records span 0..K
  std::uint64_t seed = 0;
  std::vector<GenerationRecord> records;
  std::vector<std::string> checkpoint_files;  // relative to the run directory
};

struct RunSettings {
  int members = 5;       // T
  int generations = 3;   // K
  std::uint64_t seed = 1;
  // When empty, member seeds derive from `seed`; otherwise one per member
  // (equal seeds give identical members, a useful degenerate check).
  std::vector<std::uint64_t> member_seeds;
  int workers = 1;
  ArchConfig arch;
  Hyper hyper;
};

// Full teacher/student loop: generation 0 trains T members on hard labels,
// each later generation trains T freshly initialized members on the previous
// generation's soft labels. Checkpoints, caches, and the report land under
// `out_dir` (timings are written separately so the report is reproducible
// byte for byte). Results are identical for any worker count.
GenerationReport run_generations(const RunSettings& settings, const MultitaskDataset& dataset,
                                 const std::filesystem::path& out_dir);

void save_report(const GenerationReport& report, const std::filesystem::path& file);
GenerationReport load_report(const std::filesystem::path& file);

// Jensen check used on every evaluation: ensemble NLL must not exceed the
// mean member NLL (1e-9 slack). Throws on violation.
void check_jensen(const GenerationRecord& record);

}  // namespace mtsd
