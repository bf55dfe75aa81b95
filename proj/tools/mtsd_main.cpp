// mtsd: multitask ensemble self-distillation on synthetic data.
// Subcommands: gen-data, run, evaluate, report. All randomness flows from
// the config seed; identical invocations produce identical artifacts.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "mtsd/checksum.hpp"
#include "mtsd/config.hpp"
#include "mtsd/dataset.hpp"
#include "mtsd/engine.hpp"
#include "mtsd/evaluate.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct CommonArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> workers;
};

mtsd::RunConfig resolve_config(const CommonArgs& args) {
  mtsd::RunConfig cfg = mtsd::load_run_config(args.config_path);
  if (args.seed) cfg.seed = *args.seed;
  if (args.workers) cfg.workers = *args.workers;
  return cfg;
}

void write_manifest(const fs::path& dir, const std::vector<fs::path>& files, json extra) {
  json manifest = std::move(extra);
  json entries = json::object();
  for (const fs::path& f : files) {
    entries[fs::relative(f, dir).string()] = mtsd::checksum_hex(mtsd::checksum_file(f));
  }
  manifest["files"] = std::move(entries);
  std::ofstream out(dir / "manifest.json");
  if (!out) throw std::runtime_error("cannot write manifest under " + dir.string());
  out << manifest.dump(2) << "\n";
}

int cmd_gen_data(const CommonArgs& args) {
  mtsd::RunConfig cfg = resolve_config(args);
  const fs::path dir = args.out ? fs::path(*args.out) : fs::path(cfg.data_dir);
  fs::create_directories(dir);

  mtsd::GeneratedData gen = mtsd::generate_dataset(cfg.data, cfg.seed);
  const fs::path data_file = dir / "dataset.jsonl";
  const fs::path splits_file = dir / "splits.json";
  mtsd::save_dataset(gen.dataset, data_file, splits_file);

  std::vector<fs::path> files{data_file, splits_file};
  mtsd::Tensor ood = mtsd::generate_ood(cfg.data, cfg.seed);
  const fs::path ood_file = dir / "ood.jsonl";
  if (!ood.empty()) {
    mtsd::save_features(ood, ood_file);
    files.push_back(ood_file);
  }

  json extra;
  extra["seed"] = cfg.seed;
  extra["instances"] = gen.dataset.instances.size();
  extra["train"] = gen.dataset.train_idx.size();
  extra["val"] = gen.dataset.val_idx.size();
  extra["ood"] = ood.empty() ? 0 : ood.rows();
  extra["generator_checksum"] = mtsd::checksum_hex(mtsd::checksum_doubles(gen.model.au_projections.data,
      mtsd::checksum_doubles(gen.model.mixture_means.data)));
  write_manifest(dir, files, std::move(extra));
  std::cout << "wrote " << gen.dataset.instances.size() << " instances to " << dir << "\n";
  return kExitOk;
}

int cmd_run(const CommonArgs& args) {
  mtsd::RunConfig cfg = resolve_config(args);
  const fs::path data_dir(cfg.data_dir);
  mtsd::MultitaskDataset ds =
      mtsd::load_dataset(data_dir / "dataset.jsonl", data_dir / "splits.json");
  const fs::path out_dir = args.out ? fs::path(*args.out) : fs::path(cfg.out_dir);

  mtsd::RunSettings settings;
  settings.members = cfg.members;
  settings.generations = cfg.generations;
  settings.seed = cfg.seed;
  settings.member_seeds = cfg.member_seeds;
  settings.workers = cfg.workers;
  settings.arch = cfg.arch;
  settings.arch.input_dim = ds.dim;
  settings.hyper = cfg.train;

  mtsd::GenerationReport report = mtsd::run_generations(settings, ds, out_dir);

  std::vector<fs::path> files{out_dir / "report.json"};
  for (const std::string& rel : report.checkpoint_files) files.push_back(out_dir / rel);
  for (int g = 0; g < report.generations; ++g) {
    files.push_back(out_dir / ("gen" + std::to_string(g)) / "soft_labels.jsonl");
  }
  json extra;
  extra["seed"] = cfg.seed;
  extra["members"] = report.members;
  extra["generations"] = report.generations;
  write_manifest(out_dir, files, std::move(extra));
  std::cout << "trained " << report.members << " members over " << report.records.size()
            << " generations into " << out_dir << "\n";
  return kExitOk;
}

int cmd_evaluate(const CommonArgs& args, std::optional<int> generation,
                 std::optional<double> tau, std::optional<int> mc_passes) {
  mtsd::RunConfig cfg = resolve_config(args);
  if (tau) cfg.eval.tau = *tau;
  if (mc_passes) cfg.eval.mc_passes = *mc_passes;
  cfg.eval.validate();

  const fs::path data_dir(cfg.data_dir);
  mtsd::MultitaskDataset ds =
      mtsd::load_dataset(data_dir / "dataset.jsonl", data_dir / "splits.json");
  mtsd::Tensor ood;
  if (fs::exists(data_dir / "ood.jsonl")) ood = mtsd::load_features(data_dir / "ood.jsonl");

  const fs::path run_dir = args.out ? fs::path(*args.out) : fs::path(cfg.out_dir);
  mtsd::UncertaintyReport report =
      mtsd::evaluate_run(run_dir, ds, ood, cfg.eval, cfg.seed, generation.value_or(-1));

  const fs::path eval_dir = run_dir / "eval";
  fs::create_directories(eval_dir);
  mtsd::save_uncertainty_report(report, eval_dir / "uncertainty_report.json");
  mtsd::write_report_csvs(report, eval_dir);
  std::cout << "evaluation written to " << eval_dir << "\n";
  return kExitOk;
}

int cmd_report(const CommonArgs& args) {
  mtsd::RunConfig cfg = resolve_config(args);
  const fs::path run_dir = args.out ? fs::path(*args.out) : fs::path(cfg.out_dir);
  const fs::path eval_dir = run_dir / "eval";
  mtsd::UncertaintyReport report =
      mtsd::load_uncertainty_report(eval_dir / "uncertainty_report.json");
  mtsd::write_report_csvs(report, eval_dir);
  std::cout << "re-rendered CSVs under " << eval_dir << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multitask ensemble self-distillation with uncertainty estimation"};
  app.require_subcommand(1);

  CommonArgs args;
  std::optional<int> generation;
  std::optional<double> tau;
  std::optional<int> mc_passes;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", args.config_path, "config JSON path")->required();
    sub->add_option("--seed", args.seed, "override the config seed");
    sub->add_option("--out", args.out, "override the output directory");
    sub->add_option("--workers", args.workers, "member-level parallelism");
  };

  CLI::App* gen_data = app.add_subcommand("gen-data", "generate the synthetic dataset and OOD set");
  add_common(gen_data);
  CLI::App* run = app.add_subcommand("run", "train the teacher ensemble and student generations");
  add_common(run);
  CLI::App* evaluate = app.add_subcommand("evaluate", "metrics, baselines, and uncertainty report");
  add_common(evaluate);
  evaluate->add_option("--generation", generation, "evaluate a single generation");
  evaluate->add_option("--tau", tau, "epistemic threshold for OOD separation");
  evaluate->add_option("--mc-passes", mc_passes, "dropout passes for the MC baseline");
  CLI::App* report = app.add_subcommand("report", "re-render CSVs from a stored report");
  add_common(report);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen_data->parsed()) return cmd_gen_data(args);
    if (run->parsed()) return cmd_run(args);
    if (evaluate->parsed()) return cmd_evaluate(args, generation, tau, mc_passes);
    if (report->parsed()) return cmd_report(args);
  } catch (const mtsd::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
