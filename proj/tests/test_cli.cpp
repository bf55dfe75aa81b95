// End-to-end checks of the command-line tool: exit codes, artifact layout,
// and rerun determinism on a small smoke configuration. argv[1] is the path
// to the built binary.
#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "mtsd/checksum.hpp"
#include "mtsd/config.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string g_cli;

int run_cli(const std::string& args) {
  const std::string cmd = g_cli + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

const char* kSmokeConfig = R"({
  "seed": 4242,
  "dataset": {"n": 120, "dim": 8, "mixture_components": 3, "imbalance_skew": 1.0,
              "val_fraction": 0.3, "ood_n": 60},
  "arch": {"hidden": [16], "dropout": 0.5},
  "train": {"epochs": 2, "lr": 0.001, "decay_interval": 3, "decay_factor": 0.1, "batch_size": 12},
  "ensemble": {"members": 2, "generations": 1},
  "eval": {"tau": 0.05, "mc_passes": 4, "histogram_bins": 10},
  "workers": 2
})";

fs::path setup_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

}  // namespace

TEST_CASE("config validation errors exit with code 2 and name the key") {
  fs::path dir = setup_dir("mtsd_cli_config");
  write_file(dir / "missing_seed.json", R"({"dataset": {"n": 10, "dim": 4}})");
  CHECK(run_cli("gen-data --config " + (dir / "missing_seed.json").string()) == 2);
  write_file(dir / "unknown.json", R"({"seed": 1, "trian": {"epochs": 2}})");
  CHECK(run_cli("gen-data --config " + (dir / "unknown.json").string()) == 2);
  write_file(dir / "typo_nested.json", R"({"seed": 1, "train": {"epoches": 2}})");
  CHECK(run_cli("gen-data --config " + (dir / "typo_nested.json").string()) == 2);
  // Parse-level checks without the binary.
  CHECK_THROWS_WITH_AS(mtsd::parse_run_config(R"({"dataset": {}})"),
                       "missing required config key: seed", mtsd::ConfigError);
  CHECK_THROWS_WITH_AS(mtsd::parse_run_config(R"({"seed": 1, "dataset": {"nn": 3}})"),
                       "unknown config key: dataset.nn", mtsd::ConfigError);
  fs::remove_all(dir);
}

TEST_CASE("missing dataset at run time exits with code 3") {
  fs::path dir = setup_dir("mtsd_cli_norun");
  write_file(dir / "config.json", kSmokeConfig);
  const std::string base = " --config " + (dir / "config.json").string();
  CHECK(run_cli("run" + base + " --out " + (dir / "runs").string()) == 3);
  fs::remove_all(dir);
}

TEST_CASE("smoke pipeline end to end with manifest consistency") {
  fs::path dir = setup_dir("mtsd_cli_smoke");
  json patched = json::parse(kSmokeConfig);
  patched["data_dir"] = (dir / "data").string();
  patched["out_dir"] = (dir / "run").string();
  write_file(dir / "config.json", patched.dump());
  const std::string base = " --config " + (dir / "config.json").string();

  REQUIRE(run_cli("gen-data" + base) == 0);
  REQUIRE(fs::exists(dir / "data" / "dataset.jsonl"));
  REQUIRE(fs::exists(dir / "data" / "splits.json"));
  REQUIRE(fs::exists(dir / "data" / "ood.jsonl"));

  // Manifest counts match the actual line counts.
  std::ifstream man(dir / "data" / "manifest.json");
  json manifest = json::parse(man);
  std::ifstream data_file(dir / "data" / "dataset.jsonl");
  std::size_t lines = 0;
  std::string line;
  while (std::getline(data_file, line)) {
    if (!line.empty()) ++lines;
  }
  CHECK(manifest.at("instances").get<std::size_t>() == lines);
  CHECK(manifest.at("files").contains("dataset.jsonl"));

  REQUIRE(run_cli("run" + base) == 0);
  REQUIRE(fs::exists(dir / "run" / "report.json"));
  REQUIRE(fs::exists(dir / "run" / "gen0" / "member0.json"));
  REQUIRE(fs::exists(dir / "run" / "gen0" / "soft_labels.jsonl"));
  REQUIRE(fs::exists(dir / "run" / "gen1" / "member1.json"));

  REQUIRE(run_cli("evaluate" + base) == 0);
  REQUIRE(fs::exists(dir / "run" / "eval" / "uncertainty_report.json"));
  REQUIRE(fs::exists(dir / "run" / "eval" / "au_nll.csv"));
  REQUIRE(fs::exists(dir / "run" / "eval" / "summary.csv"));
  REQUIRE(fs::exists(dir / "run" / "eval" / "histograms_epistemic.csv"));
  REQUIRE(fs::exists(dir / "run" / "eval" / "ood.csv"));

  // The TS row appears for classification metrics but not the RMSE columns.
  std::ifstream summary(dir / "run" / "eval" / "summary.csv");
  bool ts_seen = false;
  while (std::getline(summary, line)) {
    if (line.rfind("ts,", 0) == 0) {
      ts_seen = true;
      CHECK(line.back() == ',');  // empty RMSE cells
    }
  }
  CHECK(ts_seen);

  // report re-renders identical CSVs from the stored JSON.
  const auto before = mtsd::checksum_file(dir / "run" / "eval" / "au_nll.csv");
  REQUIRE(run_cli("report" + base) == 0);
  CHECK(mtsd::checksum_file(dir / "run" / "eval" / "au_nll.csv") == before);

  // Rerunning gen-data reproduces the dataset byte for byte.
  const auto data_sum = mtsd::checksum_file(dir / "data" / "dataset.jsonl");
  REQUIRE(run_cli("gen-data" + base) == 0);
  CHECK(mtsd::checksum_file(dir / "data" / "dataset.jsonl") == data_sum);

  // A T=1 run's ensemble row equals its single-member row.
  json single = patched;
  single["ensemble"] = {{"members", 1}, {"generations", 0}};
  single["out_dir"] = (dir / "run1").string();
  write_file(dir / "single.json", single.dump());
  const std::string single_base = " --config " + (dir / "single.json").string();
  REQUIRE(run_cli("run" + single_base) == 0);
  REQUIRE(run_cli("evaluate" + single_base) == 0);
  std::ifstream rep(dir / "run1" / "eval" / "uncertainty_report.json");
  json report = json::parse(rep);
  const json& rows = report.at("rows");
  double tea_nll = -1.0, ens_nll = -2.0;
  for (const json& r : rows) {
    if (r.at("name") == "tea") tea_nll = r.at("expr_nll").get<double>();
    if (r.at("name") == "tea_ensemble") ens_nll = r.at("expr_nll").get<double>();
  }
  CHECK(tea_nll == ens_nll);

  fs::remove_all(dir);
}

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: test_cli <path-to-mtsd-binary>\n");
    return 1;
  }
  g_cli = argv[1];
  doctest::Context context;
  context.applyCommandLine(1, argv);
  return context.run();
}
