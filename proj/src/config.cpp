#include "mtsd/config.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

namespace mtsd {

using nlohmann::json;

void EvalOptions::validate() const {
  if (tau <= 0.0 || tau >= 1.0) throw ConfigError("eval.tau must be in (0,1)");
  if (mc_passes < 1) throw ConfigError("eval.mc_passes must be >= 1");
  if (ts_bracket.first <= 0.0 || ts_bracket.first >= ts_bracket.second) {
    throw ConfigError("eval.ts_bracket must satisfy 0 < lo < hi");
  }
  if (histogram_bins < 1) throw ConfigError("eval.histogram_bins must be >= 1");
}

namespace {

void check_keys(const json& obj, const std::string& scope, const std::set<std::string>& allowed) {
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.contains(key)) {
      throw ConfigError("unknown config key: " + (scope.empty() ? key : scope + "." + key));
    }
  }
}

template <typename T>
T get_or(const json& obj, const std::string& scope, const std::string& key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key has wrong type: " + (scope.empty() ? key : scope + "." + key));
  }
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");

  check_keys(j, "", {"seed", "dataset", "arch", "train", "ensemble", "eval", "workers",
                     "data_dir", "out_dir"});
  if (!j.contains("seed")) throw ConfigError("missing required config key: seed");

  RunConfig cfg;
  cfg.seed = get_or<std::uint64_t>(j, "", "seed", 0);

  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    check_keys(d, "dataset",
               {"n", "dim", "mixture_components", "task_proportions", "au_noise", "expr_noise",
                "va_noise", "imbalance_skew", "ood_shift", "val_fraction", "ood_n"});
    cfg.data.n = get_or<int>(d, "dataset", "n", cfg.data.n);
    cfg.data.dim = get_or<int>(d, "dataset", "dim", cfg.data.dim);
    cfg.data.mixture_components =
        get_or<int>(d, "dataset", "mixture_components", cfg.data.mixture_components);
    cfg.data.task_proportions =
        get_or<std::array<double, 3>>(d, "dataset", "task_proportions", cfg.data.task_proportions);
    cfg.data.au_noise = get_or<double>(d, "dataset", "au_noise", cfg.data.au_noise);
    cfg.data.expr_noise = get_or<double>(d, "dataset", "expr_noise", cfg.data.expr_noise);
    cfg.data.va_noise = get_or<double>(d, "dataset", "va_noise", cfg.data.va_noise);
    cfg.data.imbalance_skew = get_or<double>(d, "dataset", "imbalance_skew", cfg.data.imbalance_skew);
    cfg.data.ood_shift = get_or<double>(d, "dataset", "ood_shift", cfg.data.ood_shift);
    cfg.data.val_fraction = get_or<double>(d, "dataset", "val_fraction", cfg.data.val_fraction);
    cfg.data.ood_n = get_or<int>(d, "dataset", "ood_n", cfg.data.ood_n);
  }

  if (j.contains("arch")) {
    const json& a = j.at("arch");
    check_keys(a, "arch", {"hidden", "dropout"});
    cfg.arch.hidden = get_or<std::vector<std::size_t>>(a, "arch", "hidden", cfg.arch.hidden);
    cfg.arch.dropout = get_or<double>(a, "arch", "dropout", cfg.arch.dropout);
  }
  cfg.arch.input_dim = static_cast<std::size_t>(cfg.data.dim);

  if (j.contains("train")) {
    const json& t = j.at("train");
    check_keys(t, "train", {"epochs", "lr", "decay_interval", "decay_factor", "batch_size"});
    cfg.train.epochs = get_or<int>(t, "train", "epochs", cfg.train.epochs);
    cfg.train.lr = get_or<double>(t, "train", "lr", cfg.train.lr);
    cfg.train.decay_interval = get_or<int>(t, "train", "decay_interval", cfg.train.decay_interval);
    cfg.train.decay_factor = get_or<double>(t, "train", "decay_factor", cfg.train.decay_factor);
    cfg.train.batch_size = get_or<int>(t, "train", "batch_size", cfg.train.batch_size);
  }

  if (j.contains("ensemble")) {
    const json& e = j.at("ensemble");
    check_keys(e, "ensemble", {"members", "generations", "member_seeds"});
    cfg.members = get_or<int>(e, "ensemble", "members", cfg.members);
    cfg.generations = get_or<int>(e, "ensemble", "generations", cfg.generations);
    cfg.member_seeds =
        get_or<std::vector<std::uint64_t>>(e, "ensemble", "member_seeds", cfg.member_seeds);
  }

  if (j.contains("eval")) {
    const json& e = j.at("eval");
    check_keys(e, "eval", {"tau", "mc_passes", "ts_bracket", "histogram_bins"});
    cfg.eval.tau = get_or<double>(e, "eval", "tau", cfg.eval.tau);
    cfg.eval.mc_passes = get_or<int>(e, "eval", "mc_passes", cfg.eval.mc_passes);
    if (e.contains("ts_bracket")) {
      auto br = get_or<std::array<double, 2>>(e, "eval", "ts_bracket", {0.05, 20.0});
      cfg.eval.ts_bracket = {br[0], br[1]};
    }
    cfg.eval.histogram_bins = get_or<int>(e, "eval", "histogram_bins", cfg.eval.histogram_bins);
  }

  cfg.workers = get_or<int>(j, "", "workers", cfg.workers);
  cfg.data_dir = get_or<std::string>(j, "", "data_dir", cfg.data_dir);
  cfg.out_dir = get_or<std::string>(j, "", "out_dir", cfg.out_dir);

  // Range validation reuses the owning modules' checks but reports them as
  // config errors.
  try {
    cfg.data.validate();
    cfg.arch.validate();
    cfg.train.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (cfg.members < 1) throw ConfigError("ensemble.members must be >= 1");
  if (cfg.generations < 0) throw ConfigError("ensemble.generations must be >= 0");
  if (!cfg.member_seeds.empty() &&
      cfg.member_seeds.size() != static_cast<std::size_t>(cfg.members)) {
    throw ConfigError("ensemble.member_seeds must have one entry per member");
  }
  if (cfg.workers < 1) throw ConfigError("workers must be >= 1");
  cfg.eval.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot read config file " + file.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_run_config(text);
}

}  // namespace mtsd
