#include "mtsd/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace mtsd {

using nlohmann::json;

std::string task_name(Task t) {
  switch (t) {
    case Task::AU: return "AU";
    case Task::EXPR: return "EXPR";
    case Task::VA: return "VA";
  }
  throw std::logic_error("task_name: bad task");
}

Task task_from_name(const std::string& name) {
  if (name == "AU") return Task::AU;
  if (name == "EXPR") return Task::EXPR;
  if (name == "VA") return Task::VA;
  throw std::runtime_error("unknown task tag: " + name);
}

static std::size_t label_arity(Task t) {
  switch (t) {
    case Task::AU: return kNumAu;
    case Task::EXPR: return kNumExpr;
    case Task::VA: return 2;
  }
  throw std::logic_error("label_arity: bad task");
}

void MultitaskDataset::validate() const {
  std::vector<char> seen(instances.size(), 0);
  for (int i : train_idx) {
    if (i < 0 || static_cast<std::size_t>(i) >= instances.size() || seen[i]) {
      throw std::runtime_error("dataset: invalid train split");
    }
    seen[i] = 1;
  }
  for (int i : val_idx) {
    if (i < 0 || static_cast<std::size_t>(i) >= instances.size() || seen[i]) {
      throw std::runtime_error("dataset: split is not a partition");
    }
    seen[i] = 1;
  }
  if (train_idx.size() + val_idx.size() != instances.size()) {
    throw std::runtime_error("dataset: split does not cover all instances");
  }
  for (const Instance& inst : instances) {
    if (inst.x.size() != dim) throw std::runtime_error("dataset: feature width mismatch");
    if (inst.y.size() != label_arity(inst.task)) {
      throw std::runtime_error("dataset: label arity does not match task tag");
    }
    switch (inst.task) {
      case Task::AU:
        for (double v : inst.y) {
          if (v != 0.0 && v != 1.0) throw std::runtime_error("dataset: non-binary AU label");
        }
        break;
      case Task::EXPR: {
        double sum = 0.0;
        for (double v : inst.y) {
          if (v != 0.0 && v != 1.0) throw std::runtime_error("dataset: non-one-hot EXPR label");
          sum += v;
        }
        if (sum != 1.0) throw std::runtime_error("dataset: EXPR label is not one-hot");
        break;
      }
      case Task::VA:
        for (double v : inst.y) {
          if (v < -1.0 || v > 1.0) throw std::runtime_error("dataset: VA label outside [-1,1]");
        }
        break;
    }
  }
}

void GeneratorConfig::validate() const {
  if (n <= 0) throw std::runtime_error("dataset config: n must be > 0");
  if (dim <= 0) throw std::runtime_error("dataset config: dim must be > 0");
  if (mixture_components <= 0) {
    throw std::runtime_error("dataset config: mixture_components must be > 0");
  }
  double prop_sum = 0.0;
  for (double p : task_proportions) {
    if (p < 0.0) throw std::runtime_error("dataset config: negative task proportion");
    prop_sum += p;
  }
  if (std::fabs(prop_sum - 1.0) > 1e-9) {
    throw std::runtime_error("dataset config: task_proportions must sum to 1");
  }
  for (double rate : {au_noise, expr_noise}) {
    if (rate < 0.0 || rate >= 1.0) throw std::runtime_error("dataset config: noise rate outside [0,1)");
  }
  if (va_noise < 0.0) throw std::runtime_error("dataset config: va_noise must be >= 0");
  if (imbalance_skew <= 0.0 || imbalance_skew > 1.0) {
    throw std::runtime_error("dataset config: imbalance_skew must be in (0,1]");
  }
  if (val_fraction <= 0.0 || val_fraction >= 1.0) {
    throw std::runtime_error("dataset config: val_fraction must be in (0,1)");
  }
  if (ood_n < 0) throw std::runtime_error("dataset config: ood_n must be >= 0");
  if (ood_shift < 0.0) throw std::runtime_error("dataset config: ood_shift must be >= 0");
}

bool GeneratorModel::au_rule(std::span<const double> x, std::size_t au) const {
  double score = 0.0;
  for (std::size_t d = 0; d < x.size(); ++d) score += au_projections.at(au, d) * x[d];
  return score > au_thresholds[au];
}

std::size_t GeneratorModel::expr_rule(std::span<const double> x) const {
  std::size_t best = 0;
  double best_score = -1e300;
  for (std::size_t c = 0; c < kNumExpr; ++c) {
    double score = expr_offsets[c];
    for (std::size_t d = 0; d < x.size(); ++d) score += expr_projections.at(c, d) * x[d];
    if (score > best_score) {
      best_score = score;
      best = c;
    }
  }
  return best;
}

// Sub-stream tags; feature sampling shares a stream with generate_ood so the
// zero-shift OOD control reproduces the in-domain features byte for byte.
namespace stream {
constexpr std::uint64_t kMixture = 1;
constexpr std::uint64_t kFeatures = 2;
constexpr std::uint64_t kLabels = 3;
constexpr std::uint64_t kTasks = 4;
constexpr std::uint64_t kSplit = 5;
constexpr std::uint64_t kOodDirection = 6;
}  // namespace stream

namespace {

struct Mixture {
  Tensor means;  // K x D
  std::vector<double> weights;
  double sigma = 1.0;
};

Mixture sample_mixture(const GeneratorConfig& cfg, std::uint64_t seed) {
  Rng rng(mix_seed(seed, stream::kMixture));
  const std::size_t k = static_cast<std::size_t>(cfg.mixture_components);
  const std::size_t d = static_cast<std::size_t>(cfg.dim);
  Mixture mix;
  mix.means = Tensor::zeros({k, d});
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < d; ++j) mix.means.at(i, j) = 2.0 * rng.normal();
  }
  // Geometric weights skew the component (and hence EXPR class) frequencies.
  mix.weights.resize(k);
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    mix.weights[i] = std::pow(0.7, static_cast<double>(i));
    sum += mix.weights[i];
  }
  for (double& w : mix.weights) w /= sum;
  return mix;
}

Tensor sample_features(const Mixture& mix, const GeneratorConfig& cfg, std::uint64_t seed,
                       std::size_t n) {
  Rng rng(mix_seed(seed, stream::kFeatures));
  const std::size_t d = static_cast<std::size_t>(cfg.dim);
  Tensor features = Tensor::zeros({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng.uniform();
    std::size_t comp = 0;
    double acc = 0.0;
    for (std::size_t c = 0; c < mix.weights.size(); ++c) {
      acc += mix.weights[c];
      if (u < acc) {
        comp = c;
        break;
      }
      comp = c;
    }
    for (std::size_t j = 0; j < d; ++j) {
      features.at(i, j) = mix.means.at(comp, j) + mix.sigma * rng.normal();
    }
  }
  return features;
}

Tensor unit_rows(Rng& rng, std::size_t rows, std::size_t cols) {
  Tensor m = Tensor::zeros({rows, cols});
  for (std::size_t i = 0; i < rows; ++i) {
    double norm2 = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      m.at(i, j) = rng.normal();
      norm2 += m.at(i, j) * m.at(i, j);
    }
    const double inv = 1.0 / std::sqrt(norm2);
    for (std::size_t j = 0; j < cols; ++j) m.at(i, j) *= inv;
  }
  return m;
}

// Empirical quantile threshold giving approximately `rate` positives.
double quantile_threshold(std::vector<double> scores, double rate) {
  std::sort(scores.begin(), scores.end());
  const double pos = (1.0 - rate) * static_cast<double>(scores.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  return scores[std::min(lo, scores.size() - 1)];
}

}  // namespace

GeneratedData generate_dataset(const GeneratorConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const std::size_t n = static_cast<std::size_t>(cfg.n);
  const std::size_t d = static_cast<std::size_t>(cfg.dim);

  Mixture mix = sample_mixture(cfg, seed);
  Tensor features = sample_features(mix, cfg, seed, n);

  Rng label_rng(mix_seed(seed, stream::kLabels));
  GeneratorModel model;
  model.mixture_means = mix.means;
  model.mixture_weights = mix.weights;
  model.sigma = mix.sigma;
  model.au_projections = unit_rows(label_rng, kNumAu, d);
  model.expr_projections = unit_rows(label_rng, kNumExpr, d);
  model.va_projections = unit_rows(label_rng, 2, d);

  // AU thresholds from empirical quantiles: positive rates decay
  // geometrically so later AUs are rare (class imbalance).
  for (std::size_t au = 0; au < kNumAu; ++au) {
    std::vector<double> scores(n);
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += model.au_projections.at(au, j) * features.at(i, j);
      scores[i] = s;
    }
    const double rate =
        std::max(0.02, 0.5 * std::pow(cfg.imbalance_skew, static_cast<double>(au)));
    model.au_thresholds[au] = quantile_threshold(std::move(scores), rate);
  }

  // EXPR offsets calibrated so the argmax populates every class: per-class
  // Gauss-Seidel carving picks each offset to hit a near-uniform target
  // count exactly given the others. Residual imbalance comes from the
  // skewed mixture and the flip noise.
  {
    Tensor scores = Tensor::zeros({n, kNumExpr});
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < kNumExpr; ++c) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += model.expr_projections.at(c, j) * features.at(i, j);
        scores.at(i, c) = s;
      }
    }
    std::array<std::size_t, kNumExpr> target{};
    for (std::size_t c = 0; c < kNumExpr; ++c) target[c] = n / kNumExpr + (c < n % kNumExpr ? 1 : 0);
    std::vector<double> thresholds(n);
    for (int round = 0; round < 8; ++round) {
      for (std::size_t c = 0; c < kNumExpr; ++c) {
        // Instance i picks class c iff offset_c > max_{c' != c}(score + offset) - score_ic.
        for (std::size_t i = 0; i < n; ++i) {
          double best_other = -1e300;
          for (std::size_t o = 0; o < kNumExpr; ++o) {
            if (o == c) continue;
            best_other = std::max(best_other, scores.at(i, o) + model.expr_offsets[o]);
          }
          thresholds[i] = best_other - scores.at(i, c);
        }
        std::sort(thresholds.begin(), thresholds.end());
        const std::size_t k = target[c];
        if (k == 0) {
          model.expr_offsets[c] = thresholds.front() - 1.0;
        } else if (k >= n) {
          model.expr_offsets[c] = thresholds.back() + 1.0;
        } else {
          model.expr_offsets[c] = 0.5 * (thresholds[k - 1] + thresholds[k]);
        }
      }
    }
  }

  // Task tags with exact counts per the configured proportions.
  std::vector<Task> tags;
  tags.reserve(n);
  std::array<std::size_t, 3> counts{};
  for (std::size_t t = 0; t < 3; ++t) {
    counts[t] = static_cast<std::size_t>(std::floor(cfg.task_proportions[t] * static_cast<double>(n)));
  }
  std::size_t assigned = counts[0] + counts[1] + counts[2];
  for (std::size_t t = 0; assigned < n; t = (t + 1) % 3) {
    if (cfg.task_proportions[t] > 0.0) {
      ++counts[t];
      ++assigned;
    }
  }
  for (std::size_t t = 0; t < 3; ++t) {
    for (std::size_t i = 0; i < counts[t]; ++i) tags.push_back(static_cast<Task>(t));
  }
  Rng task_rng(mix_seed(seed, stream::kTasks));
  task_rng.shuffle(tags);

  MultitaskDataset ds;
  ds.dim = d;
  ds.instances.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Instance inst;
    inst.id = static_cast<int>(i);
    inst.x.assign(features.data.begin() + static_cast<std::ptrdiff_t>(i * d),
                  features.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * d));
    inst.task = tags[i];
    switch (inst.task) {
      case Task::AU: {
        inst.y.resize(kNumAu);
        for (std::size_t au = 0; au < kNumAu; ++au) {
          bool positive = model.au_rule(inst.x, au);
          if (cfg.au_noise > 0.0 && label_rng.uniform() < cfg.au_noise) positive = !positive;
          inst.y[au] = positive ? 1.0 : 0.0;
        }
        break;
      }
      case Task::EXPR: {
        std::size_t cls = model.expr_rule(inst.x);
        if (cfg.expr_noise > 0.0 && label_rng.uniform() < cfg.expr_noise) {
          const std::size_t shift = 1 + label_rng.uniform_index(kNumExpr - 1);
          cls = (cls + shift) % kNumExpr;
        }
        inst.y.assign(kNumExpr, 0.0);
        inst.y[cls] = 1.0;
        break;
      }
      case Task::VA: {
        inst.y.resize(2);
        for (std::size_t c = 0; c < 2; ++c) {
          double s = 0.0;
          for (std::size_t j = 0; j < d; ++j) s += model.va_projections.at(c, j) * inst.x[j];
          const double noise = cfg.va_noise > 0.0 ? cfg.va_noise * label_rng.normal() : 0.0;
          inst.y[c] = std::tanh(model.va_gain * s + noise);
        }
        break;
      }
    }
    ds.instances.push_back(std::move(inst));
  }

  // Stratified split: each task keeps roughly val_fraction of its instances
  // for validation, at least one each side. EXPR is additionally stratified
  // by class so no training class ends up empty.
  Rng split_rng(mix_seed(seed, stream::kSplit));
  auto split_rows = [&](std::vector<int> rows, double fraction) {
    split_rng.shuffle(rows);
    std::size_t n_val =
        static_cast<std::size_t>(std::llround(fraction * static_cast<double>(rows.size())));
    if (rows.size() >= 2) n_val = std::min(std::max<std::size_t>(n_val, 1), rows.size() - 1);
    else n_val = 0;  // singleton groups stay in train
    for (std::size_t i = 0; i < rows.size(); ++i) {
      (i < n_val ? ds.val_idx : ds.train_idx).push_back(rows[i]);
    }
  };
  for (int t = 0; t < 3; ++t) {
    std::vector<int> rows;
    for (std::size_t i = 0; i < n; ++i) {
      if (ds.instances[i].task == static_cast<Task>(t)) rows.push_back(static_cast<int>(i));
    }
    if (rows.empty()) continue;
    if (static_cast<Task>(t) == Task::EXPR) {
      for (std::size_t c = 0; c < kNumExpr; ++c) {
        std::vector<int> class_rows;
        for (int r : rows) {
          if (ds.instances[r].y[c] > 0.5) class_rows.push_back(r);
        }
        if (!class_rows.empty()) split_rows(std::move(class_rows), cfg.val_fraction);
      }
    } else {
      split_rows(std::move(rows), cfg.val_fraction);
    }
  }
  std::sort(ds.train_idx.begin(), ds.train_idx.end());
  std::sort(ds.val_idx.begin(), ds.val_idx.end());

  ds.validate();
  return {std::move(ds), std::move(model)};
}

Tensor generate_ood(const GeneratorConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const std::size_t n = static_cast<std::size_t>(cfg.ood_n);
  const std::size_t d = static_cast<std::size_t>(cfg.dim);
  if (n == 0) return Tensor{};  // empty matrix, not an error
  Mixture mix = sample_mixture(cfg, seed);
  Tensor features = sample_features(mix, cfg, seed, n);
  if (cfg.ood_shift > 0.0) {
    Rng dir_rng(mix_seed(seed, stream::kOodDirection));
    std::vector<double> dir(d);
    double norm2 = 0.0;
    for (double& v : dir) {
      v = dir_rng.normal();
      norm2 += v * v;
    }
    const double scale = cfg.ood_shift * mix.sigma / std::sqrt(norm2);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) features.at(i, j) += scale * dir[j];
    }
  }
  return features;
}

ClassWeights compute_class_weights(const MultitaskDataset& ds) {
  ClassWeights w;
  std::array<std::size_t, kNumAu> pos{}, neg{};
  std::array<std::size_t, kNumExpr> expr_count{};
  std::size_t expr_total = 0;
  for (int row : ds.train_idx) {
    const Instance& inst = ds.instances[row];
    if (inst.task == Task::AU) {
      for (std::size_t c = 0; c < kNumAu; ++c) {
        (inst.y[c] > 0.5 ? pos[c] : neg[c]) += 1;
      }
    } else if (inst.task == Task::EXPR) {
      for (std::size_t c = 0; c < kNumExpr; ++c) {
        if (inst.y[c] > 0.5) ++expr_count[c];
      }
      ++expr_total;
    }
  }
  for (std::size_t c = 0; c < kNumAu; ++c) {
    if (pos[c] == 0) throw std::runtime_error("class weights: AU " + std::to_string(c) + " has no positive training samples");
    if (neg[c] == 0) throw std::runtime_error("class weights: AU " + std::to_string(c) + " has no negative training samples");
    w.au[c] = static_cast<double>(neg[c]) / static_cast<double>(pos[c]);
  }
  double inv_sum = 0.0;
  for (std::size_t c = 0; c < kNumExpr; ++c) {
    if (expr_count[c] == 0) {
      throw std::runtime_error("class weights: EXPR class " + std::to_string(c) + " has no training samples");
    }
    inv_sum += static_cast<double>(expr_total) / static_cast<double>(expr_count[c]);
  }
  for (std::size_t c = 0; c < kNumExpr; ++c) {
    const double inv = static_cast<double>(expr_total) / static_cast<double>(expr_count[c]);
    w.expr[c] = inv / inv_sum;
  }
  return w;
}

std::size_t va_bin(double value) {
  if (value < -1.0 || value > 1.0) {
    throw std::runtime_error("va_bin: value outside [-1,1]");
  }
  const double raw = std::floor((value + 1.0) / 0.1);
  return static_cast<std::size_t>(std::clamp(raw, 0.0, 19.0));
}

std::vector<double> discretize_va(double value) {
  std::vector<double> one_hot(kNumVaBins, 0.0);
  one_hot[va_bin(value)] = 1.0;
  return one_hot;
}

double va_bin_center(std::size_t bin) {
  return -0.95 + 0.1 * static_cast<double>(bin);
}

double decode_expectation(std::span<const double> probs) {
  if (probs.size() != kNumVaBins) throw std::runtime_error("decode_expectation: need 20 bins");
  double sum = 0.0;
  for (double p : probs) {
    if (p < 0.0) throw std::runtime_error("decode_expectation: negative probability");
    sum += p;
  }
  if (std::fabs(sum - 1.0) > 1e-9) {
    throw std::runtime_error("decode_expectation: probabilities must sum to 1");
  }
  double e = 0.0;
  for (std::size_t k = 0; k < kNumVaBins; ++k) e += probs[k] * va_bin_center(k);
  return e;
}

std::vector<int> sample_balanced_batch(const MultitaskDataset& ds, std::size_t batch_size,
                                       Rng& rng) {
  if (batch_size == 0 || batch_size % 3 != 0) {
    throw std::runtime_error("sample_balanced_batch: batch size must be a positive multiple of 3");
  }
  const std::size_t per_task = batch_size / 3;
  std::vector<int> batch;
  batch.reserve(batch_size);
  for (int t = 0; t < 3; ++t) {
    std::vector<int> rows = rows_with_task(ds, ds.train_idx, static_cast<Task>(t));
    if (rows.size() < per_task) {
      throw std::runtime_error("sample_balanced_batch: task " + task_name(static_cast<Task>(t)) +
                               " has only " + std::to_string(rows.size()) + " training instances");
    }
    // Partial Fisher-Yates: first per_task entries are a uniform sample
    // without replacement.
    for (std::size_t i = 0; i < per_task; ++i) {
      const std::size_t j = i + rng.uniform_index(rows.size() - i);
      std::swap(rows[i], rows[j]);
      batch.push_back(rows[i]);
    }
  }
  rng.shuffle(batch);
  return batch;
}

Tensor gather_features(const MultitaskDataset& ds, std::span<const int> rows) {
  if (rows.empty()) throw std::runtime_error("gather_features: empty row set");
  Tensor out = Tensor::zeros({rows.size(), ds.dim});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Instance& inst = ds.instances[rows[i]];
    std::copy(inst.x.begin(), inst.x.end(), out.data.begin() + static_cast<std::ptrdiff_t>(i * ds.dim));
  }
  return out;
}

std::vector<int> rows_with_task(const MultitaskDataset& ds, std::span<const int> rows, Task t) {
  std::vector<int> out;
  for (int r : rows) {
    if (ds.instances[r].task == t) out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// persistence
// ---------------------------------------------------------------------------

void save_dataset(const MultitaskDataset& ds, const std::filesystem::path& data_file,
                  const std::filesystem::path& splits_file) {
  std::ofstream out(data_file);
  if (!out) throw std::runtime_error("cannot write " + data_file.string());
  for (const Instance& inst : ds.instances) {
    json rec;
    rec["id"] = inst.id;
    rec["task"] = task_name(inst.task);
    rec["x"] = inst.x;
    rec["y"] = inst.y;
    out << rec.dump() << "\n";
  }
  json splits;
  splits["train"] = ds.train_idx;
  splits["val"] = ds.val_idx;
  std::ofstream sout(splits_file);
  if (!sout) throw std::runtime_error("cannot write " + splits_file.string());
  sout << splits.dump(2) << "\n";
}

MultitaskDataset load_dataset(const std::filesystem::path& data_file,
                              const std::filesystem::path& splits_file) {
  std::ifstream in(data_file);
  if (!in) throw std::runtime_error("cannot read " + data_file.string());
  MultitaskDataset ds;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json rec = json::parse(line);
    Instance inst;
    inst.id = rec.at("id").get<int>();
    inst.task = task_from_name(rec.at("task").get<std::string>());
    inst.x = rec.at("x").get<std::vector<double>>();
    inst.y = rec.at("y").get<std::vector<double>>();
    ds.instances.push_back(std::move(inst));
  }
  if (ds.instances.empty()) throw std::runtime_error("dataset file is empty: " + data_file.string());
  ds.dim = ds.instances.front().x.size();
  std::ifstream sin(splits_file);
  if (!sin) throw std::runtime_error("cannot read " + splits_file.string());
  json splits = json::parse(sin);
  ds.train_idx = splits.at("train").get<std::vector<int>>();
  ds.val_idx = splits.at("val").get<std::vector<int>>();
  ds.validate();
  return ds;
}

void save_features(const Tensor& features, const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  for (std::size_t i = 0; i < features.rows(); ++i) {
    json rec;
    rec["id"] = i;
    rec["x"] = std::vector<double>(features.data.begin() + static_cast<std::ptrdiff_t>(i * features.cols()),
                                   features.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * features.cols()));
    out << rec.dump() << "\n";
  }
}

Tensor load_features(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot read " + file.string());
  std::vector<double> data;
  std::size_t rows = 0, cols = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json rec = json::parse(line);
    auto x = rec.at("x").get<std::vector<double>>();
    if (cols == 0) cols = x.size();
    if (x.size() != cols) throw std::runtime_error("feature file has ragged rows: " + file.string());
    data.insert(data.end(), x.begin(), x.end());
    ++rows;
  }
  if (rows == 0) throw std::runtime_error("feature file is empty: " + file.string());
  return Tensor({rows, cols}, std::move(data));
}

}  // namespace mtsd
