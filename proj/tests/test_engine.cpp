#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "mtsd/checksum.hpp"
#include "mtsd/engine.hpp"

using namespace mtsd;

namespace {

GeneratorConfig tiny_data_config() {
  GeneratorConfig cfg;
  cfg.n = 120;
  cfg.dim = 8;
  cfg.mixture_components = 3;
  cfg.val_fraction = 0.3;
  cfg.ood_n = 0;
  cfg.imbalance_skew = 1.0;  // tiny splits cannot afford rare AUs
  return cfg;
}

Hyper tiny_hyper(int epochs) {
  Hyper hp;
  hp.epochs = epochs;
  hp.batch_size = 12;
  hp.decay_interval = 3;
  return hp;
}

ArchConfig tiny_arch() {
  ArchConfig arch;
  arch.input_dim = 8;
  arch.hidden = {16};
  return arch;
}

std::filesystem::path fresh_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

bool same_params(const MultitaskModel& a, const MultitaskModel& b) {
  auto pa = a.parameters();
  auto pb = b.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (pa[i]->data != pb[i]->data) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("zero epochs returns the input model unchanged") {
  GeneratedData gen = generate_dataset(tiny_data_config(), 1);
  ClassWeights cw = compute_class_weights(gen.dataset);
  MultitaskModel m = init_model(tiny_arch(), 5);
  TrainHistory hist;
  MultitaskModel out = train_member(m, gen.dataset, cw, nullptr, tiny_hyper(0), 9, &hist);
  CHECK(same_params(m, out));
  CHECK(hist.epochs.empty());
}

TEST_CASE("50 epochs on a 30-instance dataset reduce the combined loss") {
  GeneratorConfig dc = tiny_data_config();
  dc.n = 30;
  GeneratedData gen = generate_dataset(dc, 2);
  ClassWeights cw = compute_class_weights(gen.dataset);
  MultitaskModel m = init_model(tiny_arch(), 5);
  Hyper hp = tiny_hyper(50);
  hp.decay_interval = 25;
  TrainHistory hist;
  train_member(m, gen.dataset, cw, nullptr, hp, 9, &hist);
  REQUIRE(hist.epochs.size() == 50);
  CHECK(hist.epochs.back().train_loss < hist.epochs.front().train_loss);
}

TEST_CASE("training is deterministic in the seed") {
  GeneratedData gen = generate_dataset(tiny_data_config(), 3);
  ClassWeights cw = compute_class_weights(gen.dataset);
  MultitaskModel m = init_model(tiny_arch(), 5);
  MultitaskModel a = train_member(m, gen.dataset, cw, nullptr, tiny_hyper(3), 11, nullptr);
  MultitaskModel b = train_member(m, gen.dataset, cw, nullptr, tiny_hyper(3), 11, nullptr);
  CHECK(same_params(a, b));
  MultitaskModel c = train_member(m, gen.dataset, cw, nullptr, tiny_hyper(3), 12, nullptr);
  CHECK_FALSE(same_params(a, c));
}

TEST_CASE("soft labels from a single-member ensemble equal its eval outputs") {
  GeneratedData gen = generate_dataset(tiny_data_config(), 4);
  MultitaskModel m = init_model(tiny_arch(), 2);
  std::vector<MultitaskModel> members{m};
  SoftLabelSet soft = generate_soft_labels(members, gen.dataset, 0);
  ProbOutputs direct = eval_forward(m, gather_features(gen.dataset, gen.dataset.train_idx));
  CHECK(soft.au.data == direct.au.data);
  CHECK(soft.expr.data == direct.expr.data);
  CHECK(soft.va.data == direct.va.data);
  CHECK(soft.ids.size() == gen.dataset.train_idx.size());
  // Every expr row is on the simplex.
  for (std::size_t i = 0; i < soft.expr.rows(); ++i) {
    double s = 0.0;
    for (std::size_t c = 0; c < kNumExpr; ++c) s += soft.expr.at(i, c);
    CHECK(std::fabs(s - 1.0) < 1e-9);
  }
}

TEST_CASE("soft label cache regeneration is byte-identical") {
  GeneratedData gen = generate_dataset(tiny_data_config(), 6);
  std::vector<MultitaskModel> members{init_model(tiny_arch(), 3), init_model(tiny_arch(), 4)};
  SoftLabelSet soft = generate_soft_labels(members, gen.dataset, 1);
  auto dir = fresh_dir("mtsd_test_soft");
  save_soft_labels(soft, dir / "a.jsonl");
  save_soft_labels(generate_soft_labels(members, gen.dataset, 1), dir / "b.jsonl");
  CHECK(checksum_file(dir / "a.jsonl") == checksum_file(dir / "b.jsonl"));
  // Round trip preserves everything bitwise.
  SoftLabelSet loaded = load_soft_labels(dir / "a.jsonl");
  CHECK(loaded.generation == soft.generation);
  CHECK(loaded.ensemble_checksum == soft.ensemble_checksum);
  CHECK(loaded.ids == soft.ids);
  CHECK(loaded.au.data == soft.au.data);
  CHECK(loaded.valence.data == soft.valence.data);
  std::filesystem::remove_all(dir);
}

TEST_CASE("soft training consumes the cached targets") {
  GeneratedData gen = generate_dataset(tiny_data_config(), 7);
  ClassWeights cw = compute_class_weights(gen.dataset);
  std::vector<MultitaskModel> teachers{init_model(tiny_arch(), 1), init_model(tiny_arch(), 2)};
  SoftLabelSet soft = generate_soft_labels(teachers, gen.dataset, 0);
  MultitaskModel student = init_model(tiny_arch(), 30);
  TrainHistory hist;
  MultitaskModel trained =
      train_member(student, gen.dataset, cw, &soft, tiny_hyper(5), 21, &hist);
  CHECK_FALSE(same_params(student, trained));
  CHECK(hist.epochs.size() == 5);
}

TEST_CASE("K=0 runs teachers only") {
  GeneratedData gen = generate_dataset(tiny_data_config(), 8);
  RunSettings settings;
  settings.members = 2;
  settings.generations = 0;
  settings.seed = 17;
  settings.arch = tiny_arch();
  settings.hyper = tiny_hyper(2);
  auto dir = fresh_dir("mtsd_test_k0");
  GenerationReport report = run_generations(settings, gen.dataset, dir);
  CHECK(report.records.size() == 1);
  CHECK(report.checkpoint_files.size() == 2);
  CHECK_FALSE(report.records[0].soft_label_checksum.has_value());
  CHECK(std::filesystem::exists(dir / "gen0" / "member1.json"));
  CHECK(std::filesystem::exists(dir / "report.json"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("K=1 T=1 is single-model self-distillation") {
  GeneratedData gen = generate_dataset(tiny_data_config(), 9);
  RunSettings settings;
  settings.members = 1;
  settings.generations = 1;
  settings.seed = 23;
  settings.arch = tiny_arch();
  settings.hyper = tiny_hyper(2);
  auto dir = fresh_dir("mtsd_test_k1t1");
  GenerationReport report = run_generations(settings, gen.dataset, dir);
  CHECK(report.records.size() == 2);
  CHECK(report.checkpoint_files.size() == 2);
  // The student's soft labels came from its single teacher: checksum matches.
  MultitaskModel teacher = load_checkpoint(dir / "gen0" / "member0.json");
  SoftLabelSet soft = load_soft_labels(dir / "gen0" / "soft_labels.jsonl");
  std::vector<MultitaskModel> tv{teacher};
  CHECK(soft.ensemble_checksum == checksum_ensemble(tv));
  CHECK(report.records[0].soft_label_checksum.value() == checksum_hex(soft.ensemble_checksum));
  std::filesystem::remove_all(dir);
}

TEST_CASE("equal member seeds make members identical within each generation") {
  GeneratedData gen = generate_dataset(tiny_data_config(), 10);
  RunSettings settings;
  settings.members = 3;
  settings.generations = 1;
  settings.seed = 31;
  settings.member_seeds = {42, 42, 42};
  settings.arch = tiny_arch();
  settings.hyper = tiny_hyper(2);
  auto dir = fresh_dir("mtsd_test_degenerate");
  GenerationReport report = run_generations(settings, gen.dataset, dir);
  for (int g = 0; g <= 1; ++g) {
    MultitaskModel m0 = load_checkpoint(dir / ("gen" + std::to_string(g)) / "member0.json");
    MultitaskModel m1 = load_checkpoint(dir / ("gen" + std::to_string(g)) / "member1.json");
    MultitaskModel m2 = load_checkpoint(dir / ("gen" + std::to_string(g)) / "member2.json");
    CHECK(same_params(m0, m1));
    CHECK(same_params(m0, m2));
    // Ensemble of identical members equals the single model.
    const MemberEval& ens = report.records[g].ensemble_eval;
    const MemberEval& single = report.records[g].member_evals[0];
    CHECK(ens.expr_nll == doctest::Approx(single.expr_nll).epsilon(1e-12));
    CHECK(ens.au.avg == doctest::Approx(single.au.avg).epsilon(1e-12));
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("serial and parallel execution produce identical reports") {
  GeneratedData gen = generate_dataset(tiny_data_config(), 11);
  RunSettings settings;
  settings.members = 3;
  settings.generations = 1;
  settings.seed = 37;
  settings.arch = tiny_arch();
  settings.hyper = tiny_hyper(2);
  auto dir1 = fresh_dir("mtsd_test_w1");
  auto dir4 = fresh_dir("mtsd_test_w4");
  settings.workers = 1;
  run_generations(settings, gen.dataset, dir1);
  settings.workers = 4;
  run_generations(settings, gen.dataset, dir4);
  CHECK(checksum_file(dir1 / "report.json") == checksum_file(dir4 / "report.json"));
  CHECK(checksum_file(dir1 / "gen0" / "soft_labels.jsonl") ==
        checksum_file(dir4 / "gen0" / "soft_labels.jsonl"));
  CHECK(checksum_file(dir1 / "gen1" / "member2.json") ==
        checksum_file(dir4 / "gen1" / "member2.json"));
  std::filesystem::remove_all(dir1);
  std::filesystem::remove_all(dir4);
}

TEST_CASE("report round trip and structural consistency") {
  GeneratedData gen = generate_dataset(tiny_data_config(), 12);
  RunSettings settings;
  settings.members = 2;
  settings.generations = 1;
  settings.seed = 41;
  settings.arch = tiny_arch();
  settings.hyper = tiny_hyper(2);
  auto dir = fresh_dir("mtsd_test_report");
  GenerationReport report = run_generations(settings, gen.dataset, dir);
  CHECK(report.checkpoint_files.size() ==
        static_cast<std::size_t>(settings.members * (settings.generations + 1)));
  GenerationReport loaded = load_report(dir / "report.json");
  CHECK(loaded.members == report.members);
  CHECK(loaded.records.size() == report.records.size());
  CHECK(loaded.records[1].member_evals[1].expr_nll == report.records[1].member_evals[1].expr_nll);
  CHECK(loaded.records[0].histories[0].epochs.size() == 2);
  // Jensen holds on every stored record.
  for (const GenerationRecord& rec : loaded.records) check_jensen(rec);
  std::filesystem::remove_all(dir);
}

TEST_CASE("member failure aborts with context but preserves other checkpoints") {
  GeneratedData gen = generate_dataset(tiny_data_config(), 13);
  // Empty training split triggers the error path inside train_member.
  MultitaskDataset broken = gen.dataset;
  broken.val_idx.insert(broken.val_idx.end(), broken.train_idx.begin(), broken.train_idx.end());
  broken.train_idx.clear();
  ClassWeights cw = compute_class_weights(gen.dataset);
  MultitaskModel m = init_model(tiny_arch(), 5);
  CHECK_THROWS(train_member(m, broken, cw, nullptr, tiny_hyper(2), 1, nullptr));
}
