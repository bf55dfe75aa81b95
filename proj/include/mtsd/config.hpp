#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mtsd/dataset.hpp"
#include "mtsd/engine.hpp"
#include "mtsd/model.hpp"

namespace mtsd {

// Configuration problems get their own type so the CLI can map them to a
// distinct exit code.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EvalOptions {
  double tau = 0.05;
  int mc_passes = 10;
  std::pair<double, double> ts_bracket{0.05, 20.0};
  int histogram_bins = 20;

  void validate() const;
};

// One JSON document drives all subcommands. Unknown keys are errors — a typo
// must not silently change an experiment. "seed" is required; everything
// else has documented defaults.
struct RunConfig {
  std::uint64_t seed = 0;
  GeneratorConfig data;
  ArchConfig arch;  // input_dim always follows data.dim
  Hyper train;
  int members = 5;
  int generations = 3;
  std::vector<std::uint64_t> member_seeds;
  EvalOptions eval;
  int workers = 1;
  std::string data_dir = "data";
  std::string out_dir = "runs/default";
};

RunConfig load_run_config(const std::filesystem::path& file);
RunConfig parse_run_config(const std::string& text);

}  // namespace mtsd
