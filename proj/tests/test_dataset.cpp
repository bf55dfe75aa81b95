#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "mtsd/dataset.hpp"

using namespace mtsd;

namespace {

GeneratorConfig small_config() {
  GeneratorConfig cfg;
  cfg.n = 300;
  cfg.dim = 8;
  cfg.mixture_components = 4;
  cfg.ood_n = 100;
  return cfg;
}

}  // namespace

TEST_CASE("equal task proportions give exact per-task counts") {
  GeneratedData gen = generate_dataset(small_config(), 7);
  std::array<int, 3> counts{};
  for (const Instance& inst : gen.dataset.instances) counts[static_cast<int>(inst.task)] += 1;
  CHECK(counts[0] == 100);
  CHECK(counts[1] == 100);
  CHECK(counts[2] == 100);
}

TEST_CASE("zero noise reproduces the stored threshold rule exactly") {
  GeneratorConfig cfg = small_config();
  cfg.au_noise = 0.0;
  cfg.expr_noise = 0.0;
  GeneratedData gen = generate_dataset(cfg, 11);
  for (const Instance& inst : gen.dataset.instances) {
    if (inst.task == Task::AU) {
      for (std::size_t au = 0; au < kNumAu; ++au) {
        CHECK(inst.y[au] == (gen.model.au_rule(inst.x, au) ? 1.0 : 0.0));
      }
    } else if (inst.task == Task::EXPR) {
      CHECK(inst.y[gen.model.expr_rule(inst.x)] == 1.0);
    }
  }
}

TEST_CASE("default imbalance produces at least one rare AU") {
  GeneratorConfig cfg;
  cfg.n = 1200;
  cfg.dim = 8;
  GeneratedData gen = generate_dataset(cfg, 3);
  ClassWeights w = compute_class_weights(gen.dataset);
  double max_weight = 0.0;
  for (double pc : w.au) max_weight = std::max(max_weight, pc);
  CHECK(max_weight > 9.0);  // positive rate below 10% somewhere
}

TEST_CASE("generation is a pure function of config and seed") {
  GeneratedData a = generate_dataset(small_config(), 21);
  GeneratedData b = generate_dataset(small_config(), 21);
  REQUIRE(a.dataset.instances.size() == b.dataset.instances.size());
  for (std::size_t i = 0; i < a.dataset.instances.size(); ++i) {
    CHECK(a.dataset.instances[i].x == b.dataset.instances[i].x);
    CHECK(a.dataset.instances[i].y == b.dataset.instances[i].y);
    CHECK(a.dataset.instances[i].task == b.dataset.instances[i].task);
  }
  CHECK(a.dataset.train_idx == b.dataset.train_idx);
  GeneratedData c = generate_dataset(small_config(), 22);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.dataset.instances.size() && !any_diff; ++i) {
    any_diff = a.dataset.instances[i].x != c.dataset.instances[i].x;
  }
  CHECK(any_diff);
}

TEST_CASE("every instance has exactly the label field of its task") {
  GeneratedData gen = generate_dataset(small_config(), 15);
  gen.dataset.validate();  // structural invariants
  for (const Instance& inst : gen.dataset.instances) {
    switch (inst.task) {
      case Task::AU: CHECK(inst.y.size() == kNumAu); break;
      case Task::EXPR: CHECK(inst.y.size() == kNumExpr); break;
      case Task::VA: CHECK(inst.y.size() == 2); break;
    }
  }
}

TEST_CASE("degenerate generator configs are rejected") {
  GeneratorConfig cfg = small_config();
  cfg.n = 0;
  CHECK_THROWS(generate_dataset(cfg, 1));
  cfg = small_config();
  cfg.mixture_components = 0;
  CHECK_THROWS(generate_dataset(cfg, 1));
  cfg = small_config();
  cfg.au_noise = 1.0;
  CHECK_THROWS(generate_dataset(cfg, 1));
}

TEST_CASE("ood: zero shift reproduces the in-domain features byte for byte") {
  GeneratorConfig cfg = small_config();
  cfg.ood_n = cfg.n;
  cfg.ood_shift = 0.0;
  GeneratedData gen = generate_dataset(cfg, 33);
  Tensor ood = generate_ood(cfg, 33);
  REQUIRE(ood.rows() == gen.dataset.instances.size());
  for (std::size_t i = 0; i < ood.rows(); ++i) {
    for (std::size_t j = 0; j < ood.cols(); ++j) {
      CHECK(ood.at(i, j) == gen.dataset.instances[i].x[j]);
    }
  }
}

TEST_CASE("ood: default shift separates the sample means by at least 5") {
  GeneratorConfig cfg = small_config();
  cfg.n = 2000;
  cfg.ood_n = 2000;
  GeneratedData gen = generate_dataset(cfg, 5);
  Tensor ood = generate_ood(cfg, 5);
  std::vector<double> mean_in(cfg.dim, 0.0), mean_ood(cfg.dim, 0.0);
  for (const Instance& inst : gen.dataset.instances) {
    for (int j = 0; j < cfg.dim; ++j) mean_in[j] += inst.x[j];
  }
  for (std::size_t i = 0; i < ood.rows(); ++i) {
    for (std::size_t j = 0; j < ood.cols(); ++j) mean_ood[j] += ood.at(i, j);
  }
  double dist2 = 0.0;
  for (int j = 0; j < cfg.dim; ++j) {
    const double d = mean_ood[j] / ood.rows() - mean_in[j] / gen.dataset.instances.size();
    dist2 += d * d;
  }
  CHECK(std::sqrt(dist2) >= 5.0);
}

TEST_CASE("ood: n = 0 gives an empty matrix without error") {
  GeneratorConfig cfg = small_config();
  cfg.ood_n = 0;
  Tensor ood = generate_ood(cfg, 9);
  CHECK(ood.empty());
}

TEST_CASE("AU class weights are the negative/positive ratio") {
  MultitaskDataset ds;
  ds.dim = 1;
  // 40 AU instances: AU0 has 10 positives / 30 negatives; alternating others.
  for (int i = 0; i < 40; ++i) {
    Instance inst;
    inst.id = i;
    inst.x = {0.0};
    inst.task = Task::AU;
    inst.y.assign(kNumAu, i % 2 ? 1.0 : 0.0);
    inst.y[0] = i < 10 ? 1.0 : 0.0;
    ds.instances.push_back(inst);
    ds.train_idx.push_back(i);
  }
  // One instance per EXPR class so the weights are defined.
  for (int c = 0; c < static_cast<int>(kNumExpr); ++c) {
    Instance inst;
    inst.id = 40 + c;
    inst.x = {0.0};
    inst.task = Task::EXPR;
    inst.y.assign(kNumExpr, 0.0);
    inst.y[c] = 1.0;
    ds.instances.push_back(inst);
    ds.train_idx.push_back(40 + c);
  }
  ClassWeights w = compute_class_weights(ds);
  CHECK(w.au[0] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(w.au[1] == doctest::Approx(1.0).epsilon(1e-12));  // perfectly balanced
  double expr_sum = 0.0;
  for (double v : w.expr) {
    CHECK(v == doctest::Approx(1.0 / 7.0).epsilon(1e-12));  // uniform classes
    expr_sum += v;
  }
  CHECK(expr_sum == doctest::Approx(1.0).epsilon(1e-12));

  // Flipping all AU labels maps each weight to its reciprocal.
  MultitaskDataset flipped = ds;
  for (Instance& inst : flipped.instances) {
    if (inst.task == Task::AU) {
      for (double& v : inst.y) v = 1.0 - v;
    }
  }
  ClassWeights wf = compute_class_weights(flipped);
  for (std::size_t c = 0; c < kNumAu; ++c) {
    CHECK(wf.au[c] == doctest::Approx(1.0 / w.au[c]).epsilon(1e-12));
  }

  // An empty class is an explicit error naming the class.
  for (Instance& inst : ds.instances) {
    if (inst.task == Task::AU) inst.y[3] = 0.0;
  }
  CHECK_THROWS_WITH_AS(compute_class_weights(ds),
                       "class weights: AU 3 has no positive training samples", std::runtime_error);
}

TEST_CASE("discretize/decode boundary and symmetry cases") {
  CHECK(va_bin(-1.0) == 0);
  CHECK(va_bin(1.0) == 19);  // clamped into the last bin
  CHECK(decode_expectation(discretize_va(-1.0)) == doctest::Approx(-0.95).epsilon(1e-12));
  CHECK(decode_expectation(discretize_va(1.0)) == doctest::Approx(0.95).epsilon(1e-12));
  std::vector<double> uniform(kNumVaBins, 1.0 / kNumVaBins);
  CHECK(std::fabs(decode_expectation(uniform)) < 1e-12);
  CHECK_THROWS(va_bin(1.5));
  CHECK_THROWS(va_bin(-1.0001));
}

TEST_CASE("discretize round trip stays within half a bin width") {
  for (int i = 0; i <= 1000; ++i) {
    const double v = -1.0 + 2.0 * i / 1000.0;
    CHECK(std::fabs(decode_expectation(discretize_va(v)) - v) <= 0.05 + 1e-12);
  }
}

TEST_CASE("balanced batches take batch/3 from each task") {
  GeneratedData gen = generate_dataset(small_config(), 2);
  Rng rng(1);
  std::vector<int> batch = sample_balanced_batch(gen.dataset, 12, rng);
  REQUIRE(batch.size() == 12);
  std::array<int, 3> counts{};
  for (int r : batch) counts[static_cast<int>(gen.dataset.instances[r].task)] += 1;
  CHECK(counts[0] == 4);
  CHECK(counts[1] == 4);
  CHECK(counts[2] == 4);
  // No duplicates within a batch.
  std::sort(batch.begin(), batch.end());
  CHECK(std::adjacent_find(batch.begin(), batch.end()) == batch.end());
}

TEST_CASE("balanced batch with exactly one instance per task") {
  MultitaskDataset ds;
  ds.dim = 1;
  for (int t = 0; t < 3; ++t) {
    Instance inst;
    inst.id = t;
    inst.x = {0.0};
    inst.task = static_cast<Task>(t);
    if (t == 0) inst.y.assign(kNumAu, 0.0);
    if (t == 1) {
      inst.y.assign(kNumExpr, 0.0);
      inst.y[0] = 1.0;
    }
    if (t == 2) inst.y = {0.0, 0.0};
    ds.instances.push_back(inst);
    ds.train_idx.push_back(t);
  }
  Rng rng(4);
  std::vector<int> batch = sample_balanced_batch(ds, 3, rng);
  std::sort(batch.begin(), batch.end());
  CHECK(batch == std::vector<int>{0, 1, 2});
  CHECK_THROWS(sample_balanced_batch(ds, 6, rng));  // not enough instances
  CHECK_THROWS(sample_balanced_batch(ds, 4, rng));  // not divisible by 3
}

TEST_CASE("per-task selection frequencies are uniform (chi-square within 3 sigma)") {
  GeneratedData gen = generate_dataset(small_config(), 13);
  const MultitaskDataset& ds = gen.dataset;
  Rng rng(17);
  const int draws = 10000;
  std::vector<int> counts(ds.instances.size(), 0);
  for (int d = 0; d < draws; ++d) {
    for (int r : sample_balanced_batch(ds, 12, rng)) counts[r] += 1;
  }
  for (int t = 0; t < 3; ++t) {
    std::vector<int> rows = rows_with_task(ds, ds.train_idx, static_cast<Task>(t));
    const double expected = 4.0 * draws / static_cast<double>(rows.size());
    double chi2 = 0.0;
    for (int r : rows) {
      const double diff = counts[r] - expected;
      chi2 += diff * diff / expected;
    }
    const double df = static_cast<double>(rows.size() - 1);
    CHECK(chi2 > df - 3.0 * std::sqrt(2.0 * df));
    CHECK(chi2 < df + 3.0 * std::sqrt(2.0 * df));
  }
}

TEST_CASE("dataset JSONL round trip") {
  GeneratedData gen = generate_dataset(small_config(), 8);
  const auto dir = std::filesystem::temp_directory_path() / "mtsd_test_dataset";
  std::filesystem::create_directories(dir);
  save_dataset(gen.dataset, dir / "d.jsonl", dir / "s.json");
  MultitaskDataset loaded = load_dataset(dir / "d.jsonl", dir / "s.json");
  REQUIRE(loaded.instances.size() == gen.dataset.instances.size());
  for (std::size_t i = 0; i < loaded.instances.size(); ++i) {
    CHECK(loaded.instances[i].x == gen.dataset.instances[i].x);
    CHECK(loaded.instances[i].y == gen.dataset.instances[i].y);
  }
  CHECK(loaded.train_idx == gen.dataset.train_idx);
  CHECK(loaded.val_idx == gen.dataset.val_idx);
  std::filesystem::remove_all(dir);
}
