#include "mtsd/engine.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <stdexcept>
#include <thread>
#include <unordered_map>

#include <json.hpp>

#include "mtsd/checksum.hpp"
#include "mtsd/optim.hpp"

namespace mtsd {

using nlohmann::json;

namespace stream {
constexpr std::uint64_t kTrainLoop = 0x747261696eULL;   // batch sampling + dropout
constexpr std::uint64_t kMemberSeed = 0x6d656d62ULL;
constexpr std::uint64_t kGeneration = 0x67656eULL;
}  // namespace stream

void Hyper::validate() const {
  if (epochs < 0) throw std::runtime_error("train config: epochs must be >= 0");
  if (!(lr > 0.0)) throw std::runtime_error("train config: lr must be > 0");
  if (decay_interval <= 0) throw std::runtime_error("train config: decay_interval must be > 0");
  if (!(decay_factor > 0.0 && decay_factor <= 1.0)) {
    throw std::runtime_error("train config: decay_factor must be in (0,1]");
  }
  if (batch_size < 6 || batch_size % 3 != 0) {
    throw std::runtime_error("train config: batch_size must be a multiple of 3 and >= 6");
  }
}

std::size_t SoftLabelSet::row_of(int id) const {
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] == id) return i;
  }
  throw std::runtime_error("soft labels: no row for instance id " + std::to_string(id));
}

namespace {

Tensor take_rows(const Tensor& m, const std::vector<std::size_t>& positions) {
  Tensor out = Tensor::zeros({positions.size(), m.cols()});
  for (std::size_t i = 0; i < positions.size(); ++i) {
    for (std::size_t c = 0; c < m.cols(); ++c) out.at(i, c) = m.at(positions[i], c);
  }
  return out;
}

struct TaskBatch {
  std::vector<int> rows;
  Tensor features;
  Tensor labels;
};

TaskBatch make_task_batch(const MultitaskDataset& ds, const std::vector<int>& batch, Task t,
                          std::size_t arity) {
  TaskBatch tb;
  for (int r : batch) {
    if (ds.instances[r].task == t) tb.rows.push_back(r);
  }
  tb.features = gather_features(ds, tb.rows);
  tb.labels = Tensor::zeros({tb.rows.size(), arity});
  for (std::size_t i = 0; i < tb.rows.size(); ++i) {
    const Instance& inst = ds.instances[tb.rows[i]];
    for (std::size_t c = 0; c < arity; ++c) tb.labels.at(i, c) = inst.y[c];
  }
  return tb;
}

// Per-task emotion metrics on the validation split, for the balancer.
std::array<double, 3> validation_metrics(const MultitaskModel& model, const MultitaskDataset& ds) {
  std::array<double, 3> metrics{};

  std::vector<int> au_rows = rows_with_task(ds, ds.val_idx, Task::AU);
  if (!au_rows.empty()) {
    ProbOutputs p = eval_forward(model, gather_features(ds, au_rows));
    std::vector<std::vector<double>> labels;
    for (int r : au_rows) labels.push_back(ds.instances[r].y);
    metrics[0] = 0.5 * macro_f1_au(p.au, labels) + 0.5 * element_accuracy_au(p.au, labels);
  }

  std::vector<int> expr_rows = rows_with_task(ds, ds.val_idx, Task::EXPR);
  if (!expr_rows.empty()) {
    ProbOutputs p = eval_forward(model, gather_features(ds, expr_rows));
    std::vector<std::vector<double>> labels;
    for (int r : expr_rows) labels.push_back(ds.instances[r].y);
    metrics[1] = 0.67 * macro_f1_expr(p.expr, labels) + 0.33 * accuracy_expr(p.expr, labels);
  }

  std::vector<int> va_rows = rows_with_task(ds, ds.val_idx, Task::VA);
  if (va_rows.size() >= 2) {
    ProbOutputs p = eval_forward(model, gather_features(ds, va_rows));
    std::vector<double> pv, pa, tv, ta;
    for (std::size_t i = 0; i < va_rows.size(); ++i) {
      pv.push_back(p.va.at(i, 0));
      pa.push_back(p.va.at(i, 1));
      tv.push_back(ds.instances[va_rows[i]].y[0]);
      ta.push_back(ds.instances[va_rows[i]].y[1]);
    }
    metrics[2] = ccc_value(pv, tv) + ccc_value(pa, ta);
  }
  return metrics;
}

}  // namespace

MultitaskModel train_member(const MultitaskModel& initial, const MultitaskDataset& dataset,
                            const ClassWeights& weights, const SoftLabelSet* soft,
                            const Hyper& hyper, std::uint64_t seed, TrainHistory* history) {
  hyper.validate();
  if (dataset.train_idx.empty()) throw std::runtime_error("train_member: empty training split");

  MultitaskModel model = initial;
  if (hyper.epochs == 0) return model;

  TapedParams taped = TapedParams::from(model);
  AdamState adam = AdamState::init(taped.all);
  Rng rng(mix_seed(seed, stream::kTrainLoop));
  BalancerState balancer;
  std::array<double, 3> lambda = balancer.lambda;

  std::unordered_map<int, std::size_t> soft_row;
  if (soft) {
    for (std::size_t i = 0; i < soft->ids.size(); ++i) soft_row[soft->ids[i]] = i;
  }

  const std::size_t steps_per_epoch =
      std::max<std::size_t>(1, dataset.train_idx.size() / static_cast<std::size_t>(hyper.batch_size));

  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    const double lr = hyper.lr * std::pow(hyper.decay_factor, epoch / hyper.decay_interval);
    double loss_sum = 0.0;
    try {
      for (std::size_t step = 0; step < steps_per_epoch; ++step) {
        std::vector<int> batch =
            sample_balanced_batch(dataset, static_cast<std::size_t>(hyper.batch_size), rng);

        ad::Var au_loss, expr_loss, va_loss;
        if (soft == nullptr) {
          // Supervision: each task's loss over that task's own sub-batch.
          TaskBatch au = make_task_batch(dataset, batch, Task::AU, kNumAu);
          ForwardResult fr_au = forward(taped, model.arch, au.features, true, &rng);
          au_loss = loss_au_supervised(fr_au.au_logits, au.labels, weights.au);

          TaskBatch ex = make_task_batch(dataset, batch, Task::EXPR, kNumExpr);
          ForwardResult fr_ex = forward(taped, model.arch, ex.features, true, &rng);
          expr_loss = loss_expr_supervised(fr_ex.expr_logits, ex.labels, weights.expr);

          TaskBatch va = make_task_batch(dataset, batch, Task::VA, 2);
          ForwardResult fr_va = forward(taped, model.arch, va.features, true, &rng);
          va_loss = loss_va_supervised(fr_va.va_scalars, va.labels);
        } else {
          // Distillation: all three soft targets for every batch instance.
          Tensor features = gather_features(dataset, batch);
          const std::size_t b = batch.size();
          Tensor t_au = Tensor::zeros({b, kNumAu});
          Tensor t_expr = Tensor::zeros({b, kNumExpr});
          Tensor t_va = Tensor::zeros({b, 2});
          for (std::size_t i = 0; i < b; ++i) {
            const std::size_t r = soft_row.at(dataset.instances[batch[i]].id);
            for (std::size_t c = 0; c < kNumAu; ++c) t_au.at(i, c) = soft->au.at(r, c);
            for (std::size_t c = 0; c < kNumExpr; ++c) t_expr.at(i, c) = soft->expr.at(r, c);
            t_va.at(i, 0) = soft->va.at(r, 0);
            t_va.at(i, 1) = soft->va.at(r, 1);
          }
          ForwardResult fr = forward(taped, model.arch, features, true, &rng);
          au_loss = loss_au_distill(fr.au_logits, t_au, weights.au);
          expr_loss = loss_expr_distill(fr.expr_logits, t_expr);
          va_loss = loss_va_distill(fr.va_scalars, t_va);
        }

        LossBreakdown breakdown;
        ad::Var combined = combine_losses(au_loss, expr_loss, va_loss, lambda, &breakdown);
        ad::backward(combined);
        std::vector<Tensor> grads;
        grads.reserve(taped.all.size());
        for (const ad::Var& p : taped.all) grads.push_back(p.grad());
        adam_step(taped.all, grads, adam, lr);
        loss_sum += breakdown.combined;
      }
    } catch (const std::exception& e) {
      throw std::runtime_error("train_member: diverged at epoch " + std::to_string(epoch) + ": " +
                               e.what());
    }

    taped.write_back(model);
    const std::array<double, 3> metrics = validation_metrics(model, dataset);
    balancer = update_balancer(balancer, metrics);
    lambda = balancer.lambda;

    if (history) {
      EpochRecord rec;
      rec.epoch = epoch;
      rec.lr = lr;
      rec.train_loss = loss_sum / static_cast<double>(steps_per_epoch);
      rec.val_metrics = metrics;
      rec.stall = balancer.stall;
      rec.lambda = balancer.lambda;
      history->epochs.push_back(rec);
    }
  }

  taped.write_back(model);
  return model;
}

SoftLabelSet generate_soft_labels(std::span<const MultitaskModel> members,
                                  const MultitaskDataset& dataset, int generation) {
  if (members.empty()) throw std::runtime_error("generate_soft_labels: no members");
  SoftLabelSet soft;
  soft.generation = generation;
  soft.ensemble_checksum = checksum_ensemble(members);
  soft.ids.reserve(dataset.train_idx.size());
  for (int r : dataset.train_idx) soft.ids.push_back(dataset.instances[r].id);
  ProbOutputs probs = ensemble_predict(members, gather_features(dataset, dataset.train_idx));
  soft.au = std::move(probs.au);
  soft.expr = std::move(probs.expr);
  soft.valence = std::move(probs.valence);
  soft.arousal = std::move(probs.arousal);
  soft.va = std::move(probs.va);
  return soft;
}

void save_soft_labels(const SoftLabelSet& soft, const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write soft labels " + file.string());
  json header;
  header["generation"] = soft.generation;
  header["ensemble_checksum"] = checksum_hex(soft.ensemble_checksum);
  header["count"] = soft.ids.size();
  out << header.dump() << "\n";
  auto row = [](const Tensor& m, std::size_t i) {
    return std::vector<double>(m.data.begin() + static_cast<std::ptrdiff_t>(i * m.cols()),
                               m.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * m.cols()));
  };
  for (std::size_t i = 0; i < soft.ids.size(); ++i) {
    json rec;
    rec["id"] = soft.ids[i];
    rec["au"] = row(soft.au, i);
    rec["expr"] = row(soft.expr, i);
    rec["valence"] = row(soft.valence, i);
    rec["arousal"] = row(soft.arousal, i);
    rec["va"] = row(soft.va, i);
    out << rec.dump() << "\n";
  }
}

SoftLabelSet load_soft_labels(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot read soft labels " + file.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("soft label file is empty: " + file.string());
  json header = json::parse(line);
  SoftLabelSet soft;
  soft.generation = header.at("generation").get<int>();
  soft.ensemble_checksum = std::stoull(header.at("ensemble_checksum").get<std::string>(), nullptr, 16);
  const std::size_t count = header.at("count").get<std::size_t>();
  std::vector<double> au, expr, valence, arousal, va;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json rec = json::parse(line);
    soft.ids.push_back(rec.at("id").get<int>());
    for (double v : rec.at("au").get<std::vector<double>>()) au.push_back(v);
    for (double v : rec.at("expr").get<std::vector<double>>()) expr.push_back(v);
    for (double v : rec.at("valence").get<std::vector<double>>()) valence.push_back(v);
    for (double v : rec.at("arousal").get<std::vector<double>>()) arousal.push_back(v);
    for (double v : rec.at("va").get<std::vector<double>>()) va.push_back(v);
  }
  if (soft.ids.size() != count) {
    throw std::runtime_error("soft label file row count disagrees with header: " + file.string());
  }
  const std::size_t n = soft.ids.size();
  soft.au = Tensor({n, kNumAu}, std::move(au));
  soft.expr = Tensor({n, kNumExpr}, std::move(expr));
  soft.valence = Tensor({n, kNumVaBins}, std::move(valence));
  soft.arousal = Tensor({n, kNumVaBins}, std::move(arousal));
  soft.va = Tensor({n, 2}, std::move(va));
  return soft;
}

MemberEval evaluate_outputs(const ProbOutputs& probs, const MultitaskDataset& dataset,
                            std::span<const int> rows) {
  if (probs.batch() != rows.size()) throw std::runtime_error("evaluate_outputs: row count mismatch");

  std::vector<std::size_t> au_pos, expr_pos, va_pos;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    switch (dataset.instances[rows[i]].task) {
      case Task::AU: au_pos.push_back(i); break;
      case Task::EXPR: expr_pos.push_back(i); break;
      case Task::VA: va_pos.push_back(i); break;
    }
  }
  if (au_pos.empty() || expr_pos.empty() || va_pos.size() < 2) {
    throw std::runtime_error("evaluate_outputs: evaluation rows must cover all tasks");
  }

  Tensor au_probs = take_rows(probs.au, au_pos);
  std::vector<std::vector<double>> au_labels;
  for (std::size_t p : au_pos) au_labels.push_back(dataset.instances[rows[p]].y);

  Tensor expr_probs = take_rows(probs.expr, expr_pos);
  std::vector<std::vector<double>> expr_labels;
  for (std::size_t p : expr_pos) expr_labels.push_back(dataset.instances[rows[p]].y);

  Tensor va_scalars = take_rows(probs.va, va_pos);
  std::vector<std::array<double, 2>> va_labels;
  for (std::size_t p : va_pos) {
    const auto& y = dataset.instances[rows[p]].y;
    va_labels.push_back({y[0], y[1]});
  }

  MemberEval eval;
  eval.emotion = emotion_metrics(au_probs, au_labels, expr_probs, expr_labels, va_scalars, va_labels);
  eval.au = au_nll(au_probs, au_labels);
  eval.expr_nll = expr_nll(expr_probs, expr_labels);
  std::vector<double> pv, pa, tv, ta;
  for (std::size_t i = 0; i < va_pos.size(); ++i) {
    pv.push_back(va_scalars.at(i, 0));
    pa.push_back(va_scalars.at(i, 1));
    tv.push_back(va_labels[i][0]);
    ta.push_back(va_labels[i][1]);
  }
  eval.rmse_valence = rmse(pv, tv);
  eval.rmse_arousal = rmse(pa, ta);
  return eval;
}

void check_jensen(const GenerationRecord& record) {
  double mean_au = 0.0, mean_expr = 0.0;
  for (const MemberEval& m : record.member_evals) {
    mean_au += m.au.avg;
    mean_expr += m.expr_nll;
  }
  mean_au /= static_cast<double>(record.member_evals.size());
  mean_expr /= static_cast<double>(record.member_evals.size());
  if (record.ensemble_eval.au.avg > mean_au + 1e-9 ||
      record.ensemble_eval.expr_nll > mean_expr + 1e-9) {
    throw std::runtime_error("generation " + std::to_string(record.generation) +
                             ": ensemble NLL exceeds mean member NLL");
  }
}

GenerationReport run_generations(const RunSettings& settings, const MultitaskDataset& dataset,
                                 const std::filesystem::path& out_dir) {
  if (settings.members < 1) throw std::runtime_error("run: members must be >= 1");
  if (settings.generations < 0) throw std::runtime_error("run: generations must be >= 0");
  settings.hyper.validate();
  settings.arch.validate();
  const int workers = std::max(1, settings.workers);

  std::filesystem::create_directories(out_dir);
  const ClassWeights weights = compute_class_weights(dataset);

  std::vector<std::uint64_t> base_seeds = settings.member_seeds;
  if (base_seeds.empty()) {
    for (int t = 0; t < settings.members; ++t) {
      base_seeds.push_back(mix_seed(settings.seed, stream::kMemberSeed, static_cast<std::uint64_t>(t)));
    }
  }
  if (base_seeds.size() != static_cast<std::size_t>(settings.members)) {
    throw std::runtime_error("run: member seed count must equal the member count");
  }

  GenerationReport report;
  report.members = settings.members;
  report.generations = settings.generations;
  report.seed = settings.seed;

  json timings = json::array();
  SoftLabelSet soft;
  bool have_soft = false;

  for (int gen = 0; gen <= settings.generations; ++gen) {
    const auto gen_start = std::chrono::steady_clock::now();
    const std::filesystem::path gen_dir = out_dir / ("gen" + std::to_string(gen));
    std::filesystem::create_directories(gen_dir);

    std::vector<MultitaskModel> members(static_cast<std::size_t>(settings.members));
    std::vector<TrainHistory> histories(static_cast<std::size_t>(settings.members));
    std::vector<std::exception_ptr> failures(static_cast<std::size_t>(settings.members));

    std::atomic<int> next{0};
    auto work = [&]() {
      while (true) {
        const int t = next.fetch_add(1);
        if (t >= settings.members) return;
        try {
          const std::uint64_t seed =
              mix_seed(base_seeds[static_cast<std::size_t>(t)], stream::kGeneration,
                       static_cast<std::uint64_t>(gen));
          MultitaskModel model = init_model(settings.arch, seed);
          model.generation = gen;
          model.member_index = t;
          members[static_cast<std::size_t>(t)] =
              train_member(model, dataset, weights, have_soft ? &soft : nullptr, settings.hyper,
                           seed, &histories[static_cast<std::size_t>(t)]);
        } catch (...) {
          failures[static_cast<std::size_t>(t)] = std::current_exception();
        }
      }
    };
    {
      std::vector<std::thread> pool;
      for (int w = 0; w < std::min(workers, settings.members); ++w) pool.emplace_back(work);
      for (std::thread& th : pool) th.join();
    }

    // Preserve the checkpoints of members that finished before reporting a
    // failed generation.
    for (int t = 0; t < settings.members; ++t) {
      if (!failures[static_cast<std::size_t>(t)]) {
        const auto file = gen_dir / ("member" + std::to_string(t) + ".json");
        save_checkpoint(members[static_cast<std::size_t>(t)], file);
        report.checkpoint_files.push_back("gen" + std::to_string(gen) + "/member" +
                                          std::to_string(t) + ".json");
      }
    }
    for (int t = 0; t < settings.members; ++t) {
      if (failures[static_cast<std::size_t>(t)]) {
        try {
          std::rethrow_exception(failures[static_cast<std::size_t>(t)]);
        } catch (const std::exception& e) {
          throw std::runtime_error("generation " + std::to_string(gen) + " member " +
                                   std::to_string(t) + " failed: " + e.what());
        }
      }
    }

    GenerationRecord record;
    record.generation = gen;
    record.histories = std::move(histories);

    Tensor val_features = gather_features(dataset, dataset.val_idx);
    for (const MultitaskModel& m : members) {
      record.member_evals.push_back(
          evaluate_outputs(eval_forward(m, val_features), dataset, dataset.val_idx));
    }
    record.ensemble_eval =
        evaluate_outputs(ensemble_predict(members, val_features), dataset, dataset.val_idx);
    for (const MemberEval& m : record.member_evals) {
      record.mean_member_au_nll += m.au.avg;
      record.mean_member_expr_nll += m.expr_nll;
    }
    record.mean_member_au_nll /= static_cast<double>(settings.members);
    record.mean_member_expr_nll /= static_cast<double>(settings.members);
    check_jensen(record);

    if (gen < settings.generations) {
      soft = generate_soft_labels(members, dataset, gen);
      have_soft = true;
      save_soft_labels(soft, gen_dir / "soft_labels.jsonl");
      record.soft_label_checksum = checksum_hex(soft.ensemble_checksum);
    }

    report.records.push_back(std::move(record));
    const auto gen_end = std::chrono::steady_clock::now();
    timings.push_back({{"generation", gen},
                       {"seconds", std::chrono::duration<double>(gen_end - gen_start).count()}});
  }

  save_report(report, out_dir / "report.json");
  std::ofstream tout(out_dir / "timings.json");
  tout << timings.dump(2) << "\n";
  return report;
}

// ---------------------------------------------------------------------------
// report serialization
// ---------------------------------------------------------------------------

namespace {

json member_eval_to_json(const MemberEval& m) {
  json j;
  j["emotion"] = {{"au_f1", m.emotion.au_f1},
                  {"au_acc", m.emotion.au_acc},
                  {"au_metric", m.emotion.au_metric},
                  {"expr_f1", m.emotion.expr_f1},
                  {"expr_acc", m.emotion.expr_acc},
                  {"expr_metric", m.emotion.expr_metric},
                  {"ccc_valence", m.emotion.ccc_valence},
                  {"ccc_arousal", m.emotion.ccc_arousal},
                  {"total", m.emotion.total}};
  j["au_nll"] = {{"per_au", m.au.per_au}, {"avg", m.au.avg}};
  j["expr_nll"] = m.expr_nll;
  j["rmse_valence"] = m.rmse_valence;
  j["rmse_arousal"] = m.rmse_arousal;
  return j;
}

MemberEval member_eval_from_json(const json& j) {
  MemberEval m;
  const json& e = j.at("emotion");
  m.emotion.au_f1 = e.at("au_f1").get<double>();
  m.emotion.au_acc = e.at("au_acc").get<double>();
  m.emotion.au_metric = e.at("au_metric").get<double>();
  m.emotion.expr_f1 = e.at("expr_f1").get<double>();
  m.emotion.expr_acc = e.at("expr_acc").get<double>();
  m.emotion.expr_metric = e.at("expr_metric").get<double>();
  m.emotion.ccc_valence = e.at("ccc_valence").get<double>();
  m.emotion.ccc_arousal = e.at("ccc_arousal").get<double>();
  m.emotion.total = e.at("total").get<double>();
  const auto per_au = j.at("au_nll").at("per_au").get<std::vector<double>>();
  std::copy(per_au.begin(), per_au.end(), m.au.per_au.begin());
  m.au.avg = j.at("au_nll").at("avg").get<double>();
  m.expr_nll = j.at("expr_nll").get<double>();
  m.rmse_valence = j.at("rmse_valence").get<double>();
  m.rmse_arousal = j.at("rmse_arousal").get<double>();
  return m;
}

json history_to_json(const TrainHistory& h) {
  json epochs = json::array();
  for (const EpochRecord& r : h.epochs) {
    epochs.push_back({{"epoch", r.epoch},
                      {"lr", r.lr},
                      {"train_loss", r.train_loss},
                      {"val_metrics", r.val_metrics},
                      {"stall", r.stall},
                      {"lambda", r.lambda}});
  }
  return {{"epochs", std::move(epochs)}};
}

TrainHistory history_from_json(const json& j) {
  TrainHistory h;
  for (const json& e : j.at("epochs")) {
    EpochRecord r;
    r.epoch = e.at("epoch").get<int>();
    r.lr = e.at("lr").get<double>();
    r.train_loss = e.at("train_loss").get<double>();
    r.val_metrics = e.at("val_metrics").get<std::array<double, 3>>();
    r.stall = e.at("stall").get<std::array<int, 3>>();
    r.lambda = e.at("lambda").get<std::array<double, 3>>();
    h.epochs.push_back(r);
  }
  return h;
}

}  // namespace

void save_report(const GenerationReport& report, const std::filesystem::path& file) {
  json j;
  j["members"] = report.members;
  j["generations"] = report.generations;
  j["seed"] = report.seed;
  j["checkpoints"] = report.checkpoint_files;
  json records = json::array();
  for (const GenerationRecord& r : report.records) {
    json rec;
    rec["generation"] = r.generation;
    json hists = json::array();
    for (const TrainHistory& h : r.histories) hists.push_back(history_to_json(h));
    rec["histories"] = std::move(hists);
    json evals = json::array();
    for (const MemberEval& m : r.member_evals) evals.push_back(member_eval_to_json(m));
    rec["member_evals"] = std::move(evals);
    rec["ensemble_eval"] = member_eval_to_json(r.ensemble_eval);
    rec["mean_member_au_nll"] = r.mean_member_au_nll;
    rec["mean_member_expr_nll"] = r.mean_member_expr_nll;
    if (r.soft_label_checksum) rec["soft_label_checksum"] = *r.soft_label_checksum;
    records.push_back(std::move(rec));
  }
  j["records"] = std::move(records);
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write report " + file.string());
  out << j.dump(2) << "\n";
}

GenerationReport load_report(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot read report " + file.string());
  json j = json::parse(in);
  GenerationReport report;
  report.members = j.at("members").get<int>();
  report.generations = j.at("generations").get<int>();
  report.seed = j.at("seed").get<std::uint64_t>();
  report.checkpoint_files = j.at("checkpoints").get<std::vector<std::string>>();
  for (const json& rec : j.at("records")) {
    GenerationRecord r;
    r.generation = rec.at("generation").get<int>();
    for (const json& h : rec.at("histories")) r.histories.push_back(history_from_json(h));
    for (const json& m : rec.at("member_evals")) r.member_evals.push_back(member_eval_from_json(m));
    r.ensemble_eval = member_eval_from_json(rec.at("ensemble_eval"));
    r.mean_member_au_nll = rec.at("mean_member_au_nll").get<double>();
    r.mean_member_expr_nll = rec.at("mean_member_expr_nll").get<double>();
    if (rec.contains("soft_label_checksum")) {
      r.soft_label_checksum = rec.at("soft_label_checksum").get<std::string>();
    }
    report.records.push_back(std::move(r));
  }
  return report;
}

}  // namespace mtsd
