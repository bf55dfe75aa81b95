#include "mtsd/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace mtsd {

using nlohmann::json;

const char* const kAuNames[kNumAu] = {"AU1",  "AU2",  "AU4",  "AU6",  "AU7",  "AU10",
                                      "AU12", "AU15", "AU23", "AU24", "AU25", "AU26"};

namespace {

std::vector<std::vector<MultitaskModel>> load_all_generations(
    const std::filesystem::path& run_dir) {
  std::vector<std::vector<MultitaskModel>> gens;
  for (int g = 0;; ++g) {
    const std::filesystem::path gen_dir = run_dir / ("gen" + std::to_string(g));
    if (!std::filesystem::exists(gen_dir)) break;
    std::vector<MultitaskModel> members;
    for (int t = 0;; ++t) {
      const std::filesystem::path file = gen_dir / ("member" + std::to_string(t) + ".json");
      if (!std::filesystem::exists(file)) break;
      members.push_back(load_checkpoint(file));
    }
    if (members.empty()) break;
    gens.push_back(std::move(members));
  }
  if (gens.empty()) {
    throw std::runtime_error("evaluate: no checkpoints under " + run_dir.string());
  }
  return gens;
}

MethodRow row_from_eval(std::string name, const MemberEval& e, bool with_rmse) {
  MethodRow row;
  row.name = std::move(name);
  row.has_au_nll = true;
  row.au = e.au;
  row.has_expr_nll = true;
  row.expr_nll = e.expr_nll;
  row.has_rmse = with_rmse;
  row.rmse_valence = e.rmse_valence;
  row.rmse_arousal = e.rmse_arousal;
  row.has_emotion = true;
  row.emotion = e.emotion;
  return row;
}

MethodRow mean_member_row(std::string name, const std::vector<MemberEval>& evals) {
  MethodRow row;
  row.name = std::move(name);
  row.has_au_nll = row.has_expr_nll = row.has_rmse = row.has_emotion = true;
  const double inv = 1.0 / static_cast<double>(evals.size());
  for (const MemberEval& e : evals) {
    for (std::size_t c = 0; c < kNumAu; ++c) row.au.per_au[c] += inv * e.au.per_au[c];
    row.au.avg += inv * e.au.avg;
    row.expr_nll += inv * e.expr_nll;
    row.rmse_valence += inv * e.rmse_valence;
    row.rmse_arousal += inv * e.rmse_arousal;
    row.emotion.au_f1 += inv * e.emotion.au_f1;
    row.emotion.au_acc += inv * e.emotion.au_acc;
    row.emotion.au_metric += inv * e.emotion.au_metric;
    row.emotion.expr_f1 += inv * e.emotion.expr_f1;
    row.emotion.expr_acc += inv * e.emotion.expr_acc;
    row.emotion.expr_metric += inv * e.emotion.expr_metric;
    row.emotion.ccc_valence += inv * e.emotion.ccc_valence;
    row.emotion.ccc_arousal += inv * e.emotion.ccc_arousal;
    row.emotion.total += inv * e.emotion.total;
  }
  return row;
}

std::string generation_label(int g) { return g == 0 ? "tea" : "stu" + std::to_string(g); }

// Per-instance distributions an ensemble's members assign; feeds the
// decomposition. Outer index: member; rows: instances.
std::vector<std::vector<double>> member_row(const std::vector<ProbOutputs>& member_probs,
                                            std::size_t i,
                                            const Tensor ProbOutputs::* field, std::size_t k) {
  std::vector<std::vector<double>> rows;
  rows.reserve(member_probs.size());
  for (const ProbOutputs& p : member_probs) {
    const Tensor& m = p.*field;
    rows.emplace_back(m.data.begin() + static_cast<std::ptrdiff_t>(i * k),
                      m.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * k));
  }
  return rows;
}

struct EpistemicSets {
  std::vector<double> expr;
  std::vector<double> au_mean;
  std::vector<double> valence;
  std::vector<double> arousal;
};

EpistemicSets epistemic_per_instance(const std::vector<ProbOutputs>& member_probs) {
  EpistemicSets sets;
  if (member_probs.empty()) return sets;
  const std::size_t n = member_probs.front().batch();
  for (std::size_t i = 0; i < n; ++i) {
    sets.expr.push_back(
        decompose_uncertainty_normalized(member_row(member_probs, i, &ProbOutputs::expr, kNumExpr))
            .epistemic);
    double au_sum = 0.0;
    for (std::size_t c = 0; c < kNumAu; ++c) {
      std::vector<std::vector<double>> rows;
      for (const ProbOutputs& p : member_probs) {
        const double prob = p.au.at(i, c);
        rows.push_back({prob, 1.0 - prob});
      }
      au_sum += decompose_uncertainty_normalized(rows).epistemic;
    }
    sets.au_mean.push_back(au_sum / static_cast<double>(kNumAu));
    sets.valence.push_back(
        decompose_uncertainty_normalized(member_row(member_probs, i, &ProbOutputs::valence, kNumVaBins))
            .epistemic);
    sets.arousal.push_back(
        decompose_uncertainty_normalized(member_row(member_probs, i, &ProbOutputs::arousal, kNumVaBins))
            .epistemic);
  }
  return sets;
}

}  // namespace

UncertaintyReport evaluate_run(const std::filesystem::path& run_dir,
                               const MultitaskDataset& dataset, const Tensor& ood_features,
                               const EvalOptions& options, std::uint64_t seed, int generation) {
  options.validate();
  const auto gens = load_all_generations(run_dir);
  if (generation >= static_cast<int>(gens.size())) {
    throw std::runtime_error("evaluate: generation " + std::to_string(generation) +
                             " not present in " + run_dir.string());
  }
  for (const auto& members : gens) {
    for (const MultitaskModel& m : members) {
      if (m.arch.input_dim != dataset.dim) {
        throw std::runtime_error("evaluate: checkpoint input width " +
                                 std::to_string(m.arch.input_dim) +
                                 " does not match dataset dim " + std::to_string(dataset.dim));
      }
    }
  }

  UncertaintyReport report;
  report.tau = options.tau;
  report.histogram_bins = options.histogram_bins;

  const Tensor val_features = gather_features(dataset, dataset.val_idx);

  // Half split of the validation rows for the temperature-scaling protocol:
  // fit on half A, score methods on half B.
  std::vector<int> val_rows(dataset.val_idx.begin(), dataset.val_idx.end());
  Rng split_rng(mix_seed(seed, 0x747363766cULL));  // TS cross-validation stream
  split_rng.shuffle(val_rows);
  const std::size_t half = val_rows.size() / 2;
  std::vector<int> half_a(val_rows.begin(), val_rows.begin() + static_cast<std::ptrdiff_t>(half));
  std::vector<int> half_b(val_rows.begin() + static_cast<std::ptrdiff_t>(half), val_rows.end());
  std::sort(half_a.begin(), half_a.end());
  std::sort(half_b.begin(), half_b.end());
  const Tensor half_b_features = gather_features(dataset, half_b);

  const int first_gen = generation >= 0 ? generation : 0;
  const int last_gen = generation >= 0 ? generation : static_cast<int>(gens.size()) - 1;

  for (int g = first_gen; g <= last_gen; ++g) {
    const auto& members = gens[static_cast<std::size_t>(g)];
    std::vector<MemberEval> evals;
    for (const MultitaskModel& m : members) {
      evals.push_back(evaluate_outputs(eval_forward(m, val_features), dataset, dataset.val_idx));
    }
    report.rows.push_back(mean_member_row(generation_label(g), evals));
    MemberEval ens =
        evaluate_outputs(ensemble_predict(members, val_features), dataset, dataset.val_idx);
    report.rows.push_back(row_from_eval(generation_label(g) + "_ensemble", ens, true));

    GenerationRecord jensen;
    jensen.generation = g;
    jensen.member_evals = evals;
    jensen.ensemble_eval = ens;
    check_jensen(jensen);
  }

  // Baselines run on the teacher members (generation 0), as in the source
  // comparison. TS is fitted per member on half A and scored on half B; it
  // is a classification method, so no RMSE column.
  {
    const auto& teachers = gens.front();
    MethodRow ts_row;
    ts_row.name = "ts";
    ts_row.has_au_nll = true;
    ts_row.has_expr_nll = true;
    const double inv = 1.0 / static_cast<double>(teachers.size());
    for (const MultitaskModel& m : teachers) {
      TemperatureSet temps = fit_temperature(m, dataset, half_a, options.ts_bracket);
      ProbOutputs probs = apply_temperature(eval_logits(m, half_b_features), temps);
      MemberEval e = evaluate_outputs(probs, dataset, half_b);
      for (std::size_t c = 0; c < kNumAu; ++c) ts_row.au.per_au[c] += inv * e.au.per_au[c];
      ts_row.au.avg += inv * e.au.avg;
      ts_row.expr_nll += inv * e.expr_nll;
    }
    report.rows.push_back(std::move(ts_row));

    MethodRow mc_row;
    mc_row.name = "mc";
    mc_row.has_au_nll = true;
    mc_row.has_expr_nll = true;
    mc_row.has_rmse = true;
    for (std::size_t t = 0; t < teachers.size(); ++t) {
      Rng mc_rng(mix_seed(seed, 0x6d63ULL, static_cast<std::uint64_t>(t)));
      ProbOutputs probs =
          mc_dropout_predict(teachers[t], val_features, options.mc_passes, mc_rng);
      MemberEval e = evaluate_outputs(probs, dataset, dataset.val_idx);
      for (std::size_t c = 0; c < kNumAu; ++c) mc_row.au.per_au[c] += inv * e.au.per_au[c];
      mc_row.au.avg += inv * e.au.avg;
      mc_row.expr_nll += inv * e.expr_nll;
      mc_row.rmse_valence += inv * e.rmse_valence;
      mc_row.rmse_arousal += inv * e.rmse_arousal;
    }
    report.rows.push_back(std::move(mc_row));
  }

  // Uncertainty distributions and OOD separation use the last evaluated
  // generation's ensemble.
  report.evaluated_generation = last_gen;
  const auto& ensemble = gens[static_cast<std::size_t>(last_gen)];
  std::vector<ProbOutputs> member_probs;
  for (const MultitaskModel& m : ensemble) member_probs.push_back(eval_forward(m, val_features));

  const std::size_t n_val = dataset.val_idx.size();
  std::vector<std::vector<double>> au_total(kNumAu), au_alea(kNumAu), au_epi(kNumAu);
  std::vector<double> expr_total, expr_alea, expr_epi;
  std::vector<double> v_total, v_alea, v_epi, a_total, a_alea, a_epi;
  for (std::size_t i = 0; i < n_val; ++i) {
    for (std::size_t c = 0; c < kNumAu; ++c) {
      std::vector<std::vector<double>> rows;
      for (const ProbOutputs& p : member_probs) {
        const double prob = p.au.at(i, c);
        rows.push_back({prob, 1.0 - prob});
      }
      const UncertaintyTriple t = decompose_uncertainty_normalized(rows);
      au_total[c].push_back(t.total);
      au_alea[c].push_back(t.aleatoric);
      au_epi[c].push_back(t.epistemic);
    }
    UncertaintyTriple te =
        decompose_uncertainty_normalized(member_row(member_probs, i, &ProbOutputs::expr, kNumExpr));
    expr_total.push_back(te.total);
    expr_alea.push_back(te.aleatoric);
    expr_epi.push_back(te.epistemic);
    UncertaintyTriple tv = decompose_uncertainty_normalized(
        member_row(member_probs, i, &ProbOutputs::valence, kNumVaBins));
    v_total.push_back(tv.total);
    v_alea.push_back(tv.aleatoric);
    v_epi.push_back(tv.epistemic);
    UncertaintyTriple ta = decompose_uncertainty_normalized(
        member_row(member_probs, i, &ProbOutputs::arousal, kNumVaBins));
    a_total.push_back(ta.total);
    a_alea.push_back(ta.aleatoric);
    a_epi.push_back(ta.epistemic);
  }

  const int bins = options.histogram_bins;
  for (std::size_t c = 0; c < kNumAu; ++c) {
    report.histograms.push_back({kAuNames[c], entropy_histogram(au_total[c], bins),
                                 entropy_histogram(au_alea[c], bins),
                                 entropy_histogram(au_epi[c], bins)});
  }
  report.histograms.push_back({"EXPR", entropy_histogram(expr_total, bins),
                               entropy_histogram(expr_alea, bins),
                               entropy_histogram(expr_epi, bins)});
  report.histograms.push_back({"valence", entropy_histogram(v_total, bins),
                               entropy_histogram(v_alea, bins), entropy_histogram(v_epi, bins)});
  report.histograms.push_back({"arousal", entropy_histogram(a_total, bins),
                               entropy_histogram(a_alea, bins), entropy_histogram(a_epi, bins)});

  if (!ood_features.empty()) {
    std::vector<ProbOutputs> ood_probs;
    for (const MultitaskModel& m : ensemble) ood_probs.push_back(eval_forward(m, ood_features));
    EpistemicSets ood_sets = epistemic_per_instance(ood_probs);
    EpistemicSets in_sets;
    in_sets.expr = expr_epi;
    in_sets.valence = v_epi;
    in_sets.arousal = a_epi;
    for (std::size_t i = 0; i < n_val; ++i) {
      double s = 0.0;
      for (std::size_t c = 0; c < kNumAu; ++c) s += au_epi[c][i];
      in_sets.au_mean.push_back(s / static_cast<double>(kNumAu));
    }
    report.ood_expr = ood_separation(in_sets.expr, ood_sets.expr, options.tau, bins);
    report.ood_au_mean = ood_separation(in_sets.au_mean, ood_sets.au_mean, options.tau, bins);
    report.ood_valence = ood_separation(in_sets.valence, ood_sets.valence, options.tau, bins);
    report.ood_arousal = ood_separation(in_sets.arousal, ood_sets.arousal, options.tau, bins);
  }

  return report;
}

// ---------------------------------------------------------------------------
// serialization
// ---------------------------------------------------------------------------

namespace {

json row_to_json(const MethodRow& r) {
  json j;
  j["name"] = r.name;
  if (r.has_au_nll) j["au_nll"] = {{"per_au", r.au.per_au}, {"avg", r.au.avg}};
  if (r.has_expr_nll) j["expr_nll"] = r.expr_nll;
  if (r.has_rmse) j["rmse"] = {{"valence", r.rmse_valence}, {"arousal", r.rmse_arousal}};
  if (r.has_emotion) {
    j["emotion"] = {{"au_f1", r.emotion.au_f1},       {"au_acc", r.emotion.au_acc},
                    {"au_metric", r.emotion.au_metric}, {"expr_f1", r.emotion.expr_f1},
                    {"expr_acc", r.emotion.expr_acc},  {"expr_metric", r.emotion.expr_metric},
                    {"ccc_valence", r.emotion.ccc_valence},
                    {"ccc_arousal", r.emotion.ccc_arousal},
                    {"total", r.emotion.total}};
  }
  return j;
}

MethodRow row_from_json(const json& j) {
  MethodRow r;
  r.name = j.at("name").get<std::string>();
  if (j.contains("au_nll")) {
    r.has_au_nll = true;
    const auto per_au = j.at("au_nll").at("per_au").get<std::vector<double>>();
    std::copy(per_au.begin(), per_au.end(), r.au.per_au.begin());
    r.au.avg = j.at("au_nll").at("avg").get<double>();
  }
  if (j.contains("expr_nll")) {
    r.has_expr_nll = true;
    r.expr_nll = j.at("expr_nll").get<double>();
  }
  if (j.contains("rmse")) {
    r.has_rmse = true;
    r.rmse_valence = j.at("rmse").at("valence").get<double>();
    r.rmse_arousal = j.at("rmse").at("arousal").get<double>();
  }
  if (j.contains("emotion")) {
    r.has_emotion = true;
    const json& e = j.at("emotion");
    r.emotion.au_f1 = e.at("au_f1").get<double>();
    r.emotion.au_acc = e.at("au_acc").get<double>();
    r.emotion.au_metric = e.at("au_metric").get<double>();
    r.emotion.expr_f1 = e.at("expr_f1").get<double>();
    r.emotion.expr_acc = e.at("expr_acc").get<double>();
    r.emotion.expr_metric = e.at("expr_metric").get<double>();
    r.emotion.ccc_valence = e.at("ccc_valence").get<double>();
    r.emotion.ccc_arousal = e.at("ccc_arousal").get<double>();
    r.emotion.total = e.at("total").get<double>();
  }
  return r;
}

json ood_to_json(const OodSeparation& s) {
  return {{"tau", s.tau},
          {"in_domain_fraction_below", s.in_domain_fraction_below},
          {"ood_fraction_below", s.ood_fraction_below},
          {"in_domain_hist", s.in_domain_hist},
          {"ood_hist", s.ood_hist}};
}

OodSeparation ood_from_json(const json& j) {
  OodSeparation s;
  s.tau = j.at("tau").get<double>();
  s.in_domain_fraction_below = j.at("in_domain_fraction_below").get<double>();
  s.ood_fraction_below = j.at("ood_fraction_below").get<double>();
  s.in_domain_hist = j.at("in_domain_hist").get<std::vector<double>>();
  s.ood_hist = j.at("ood_hist").get<std::vector<double>>();
  return s;
}

}  // namespace

void save_uncertainty_report(const UncertaintyReport& report, const std::filesystem::path& file) {
  json j;
  j["evaluated_generation"] = report.evaluated_generation;
  j["tau"] = report.tau;
  j["histogram_bins"] = report.histogram_bins;
  json rows = json::array();
  for (const MethodRow& r : report.rows) rows.push_back(row_to_json(r));
  j["rows"] = std::move(rows);
  json hists = json::array();
  for (const LabelHistogram& h : report.histograms) {
    hists.push_back({{"label", h.label},
                     {"total", h.total},
                     {"aleatoric", h.aleatoric},
                     {"epistemic", h.epistemic}});
  }
  j["histograms"] = std::move(hists);
  j["ood"] = {{"expr", ood_to_json(report.ood_expr)},
              {"au_mean", ood_to_json(report.ood_au_mean)},
              {"valence", ood_to_json(report.ood_valence)},
              {"arousal", ood_to_json(report.ood_arousal)}};
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << j.dump(2) << "\n";
}

UncertaintyReport load_uncertainty_report(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot read " + file.string());
  json j = json::parse(in);
  UncertaintyReport report;
  report.evaluated_generation = j.at("evaluated_generation").get<int>();
  report.tau = j.at("tau").get<double>();
  report.histogram_bins = j.at("histogram_bins").get<int>();
  for (const json& r : j.at("rows")) report.rows.push_back(row_from_json(r));
  for (const json& h : j.at("histograms")) {
    report.histograms.push_back({h.at("label").get<std::string>(),
                                 h.at("total").get<std::vector<double>>(),
                                 h.at("aleatoric").get<std::vector<double>>(),
                                 h.at("epistemic").get<std::vector<double>>()});
  }
  report.ood_expr = ood_from_json(j.at("ood").at("expr"));
  report.ood_au_mean = ood_from_json(j.at("ood").at("au_mean"));
  report.ood_valence = ood_from_json(j.at("ood").at("valence"));
  report.ood_arousal = ood_from_json(j.at("ood").at("arousal"));
  return report;
}

// ---------------------------------------------------------------------------
// CSV output
// ---------------------------------------------------------------------------

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

void write_histogram_csv(const UncertaintyReport& report, const std::filesystem::path& file,
                         const std::vector<double> LabelHistogram::* kind) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << "label,bin_low,bin_high,ratio\n";
  const double width = 1.0 / report.histogram_bins;
  for (const LabelHistogram& h : report.histograms) {
    const std::vector<double>& ratios = h.*kind;
    for (std::size_t b = 0; b < ratios.size(); ++b) {
      out << h.label << "," << fmt(width * static_cast<double>(b)) << ","
          << fmt(width * static_cast<double>(b + 1)) << "," << fmt(ratios[b]) << "\n";
    }
  }
}

}  // namespace

void write_report_csvs(const UncertaintyReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);

  {
    std::ofstream out(dir / "au_nll.csv");
    out << "method";
    for (const char* name : kAuNames) out << "," << name;
    out << ",avg\n";
    for (const MethodRow& r : report.rows) {
      if (!r.has_au_nll) continue;
      out << r.name;
      for (std::size_t c = 0; c < kNumAu; ++c) out << "," << fmt(r.au.per_au[c]);
      out << "," << fmt(r.au.avg) << "\n";
    }
  }
  {
    // TS carries no RMSE columns: temperature scaling targets NLL and is not
    // applied to the regression readout.
    std::ofstream out(dir / "summary.csv");
    out << "method,expr_nll,valence_rmse,arousal_rmse\n";
    for (const MethodRow& r : report.rows) {
      if (!r.has_expr_nll) continue;
      out << r.name << "," << fmt(r.expr_nll) << ",";
      if (r.has_rmse) out << fmt(r.rmse_valence);
      out << ",";
      if (r.has_rmse) out << fmt(r.rmse_arousal);
      out << "\n";
    }
  }
  {
    std::ofstream out(dir / "emotion.csv");
    out << "method,au_metric,expr_metric,ccc_valence,ccc_arousal,total\n";
    for (const MethodRow& r : report.rows) {
      if (!r.has_emotion) continue;
      out << r.name << "," << fmt(r.emotion.au_metric) << "," << fmt(r.emotion.expr_metric) << ","
          << fmt(r.emotion.ccc_valence) << "," << fmt(r.emotion.ccc_arousal) << ","
          << fmt(r.emotion.total) << "\n";
    }
  }
  write_histogram_csv(report, dir / "histograms_total.csv", &LabelHistogram::total);
  write_histogram_csv(report, dir / "histograms_aleatoric.csv", &LabelHistogram::aleatoric);
  write_histogram_csv(report, dir / "histograms_epistemic.csv", &LabelHistogram::epistemic);
  {
    std::ofstream out(dir / "ood.csv");
    out << "signal,tau,in_domain_fraction_below,ood_fraction_below\n";
    auto line = [&](const char* name, const OodSeparation& s) {
      out << name << "," << fmt(s.tau) << "," << fmt(s.in_domain_fraction_below) << ","
          << fmt(s.ood_fraction_below) << "\n";
    };
    line("expr", report.ood_expr);
    line("au_mean", report.ood_au_mean);
    line("valence", report.ood_valence);
    line("arousal", report.ood_arousal);
  }
}

}  // namespace mtsd
