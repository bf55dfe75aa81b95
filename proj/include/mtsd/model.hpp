#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "mtsd/autodiff.hpp"
#include "mtsd/dataset.hpp"
#include "mtsd/rng.hpp"
#include "mtsd/tensor.hpp"

namespace mtsd {

struct ArchConfig {
  std::size_t input_dim = 16;
  std::vector<std::size_t> hidden{64, 64};
  double dropout = 0.5;  // applied to the shared features feeding the heads

  bool operator==(const ArchConfig&) const = default;
  void validate() const;
};

// Shared feedforward backbone with three task heads: 12 AU logits (sigmoid),
// 7 EXPR logits (softmax), and one 40-logit block split into two 20-way
// softmax groups for valence/arousal.
struct MultitaskModel {
  ArchConfig arch;
  std::uint64_t seed = 0;
  int generation = 0;
  int member_index = 0;

  std::vector<Tensor> backbone_w;
  std::vector<Tensor> backbone_b;
  Tensor au_w, au_b;
  Tensor expr_w, expr_b;
  Tensor va_w, va_b;

  std::vector<const Tensor*> parameters() const;
  std::vector<Tensor*> parameters();
  std::vector<std::string> parameter_names() const;
  std::size_t parameter_count() const;
};

MultitaskModel init_model(const ArchConfig& arch, std::uint64_t seed);

// Per-task probability outputs for a batch. Categorical rows sum to 1; the
// va column pair holds expectation decodes of the 20-bin distributions.
struct ProbOutputs {
  Tensor au;       // B x 12
  Tensor expr;     // B x 7
  Tensor valence;  // B x 20
  Tensor arousal;  // B x 20
  Tensor va;       // B x 2

  std::size_t batch() const { return au.rows(); }
};

struct LogitOutputs {
  Tensor au;       // B x 12
  Tensor expr;     // B x 7
  Tensor valence;  // B x 20
  Tensor arousal;  // B x 20
};

// Model parameters lifted onto the tape for training. write_back copies the
// (optimizer-updated) values into a model.
struct TapedParams {
  std::vector<ad::Var> all;  // fixed order matching MultitaskModel::parameters()
  std::size_t n_backbone_layers = 0;

  static TapedParams from(const MultitaskModel& model);
  void write_back(MultitaskModel& model) const;
};

struct ForwardResult {
  ad::Var au_logits, expr_logits, valence_logits, arousal_logits;
  ad::Var au_probs, expr_probs, valence_probs, arousal_probs;
  ad::Var va_scalars;  // B x 2, expectation decodes (gradient flows to the softmax)
};

// Train mode applies inverted dropout to the head inputs and needs an rng;
// eval mode is deterministic and maskless.
ForwardResult forward(const TapedParams& params, const ArchConfig& arch, const Tensor& features,
                      bool train_mode, Rng* rng);

ProbOutputs eval_forward(const MultitaskModel& model, const Tensor& features);
LogitOutputs eval_logits(const MultitaskModel& model, const Tensor& features);

// Mean of member probability outputs (probability space, not logits); the va
// scalars are recomputed from the averaged distributions.
ProbOutputs ensemble_predict(std::span<const MultitaskModel> members, const Tensor& features);

ProbOutputs probs_from_logits(const LogitOutputs& logits);

// JSON checkpoint; round-trip is bitwise stable.
void save_checkpoint(const MultitaskModel& model, const std::filesystem::path& file);
MultitaskModel load_checkpoint(const std::filesystem::path& file);

}  // namespace mtsd
