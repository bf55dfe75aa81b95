#include "mtsd/model.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace mtsd {

using nlohmann::json;

void ArchConfig::validate() const {
  if (input_dim == 0) throw std::runtime_error("arch: input_dim must be > 0");
  if (hidden.empty()) throw std::runtime_error("arch: need at least one hidden layer");
  for (std::size_t w : hidden) {
    if (w == 0) throw std::runtime_error("arch: zero-width hidden layer");
  }
  if (dropout < 0.0 || dropout >= 1.0) throw std::runtime_error("arch: dropout must be in [0,1)");
}

std::vector<const Tensor*> MultitaskModel::parameters() const {
  std::vector<const Tensor*> out;
  for (std::size_t i = 0; i < backbone_w.size(); ++i) {
    out.push_back(&backbone_w[i]);
    out.push_back(&backbone_b[i]);
  }
  out.push_back(&au_w);
  out.push_back(&au_b);
  out.push_back(&expr_w);
  out.push_back(&expr_b);
  out.push_back(&va_w);
  out.push_back(&va_b);
  return out;
}

std::vector<Tensor*> MultitaskModel::parameters() {
  std::vector<Tensor*> out;
  for (std::size_t i = 0; i < backbone_w.size(); ++i) {
    out.push_back(&backbone_w[i]);
    out.push_back(&backbone_b[i]);
  }
  out.push_back(&au_w);
  out.push_back(&au_b);
  out.push_back(&expr_w);
  out.push_back(&expr_b);
  out.push_back(&va_w);
  out.push_back(&va_b);
  return out;
}

std::vector<std::string> MultitaskModel::parameter_names() const {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < backbone_w.size(); ++i) {
    names.push_back("backbone." + std::to_string(i) + ".weight");
    names.push_back("backbone." + std::to_string(i) + ".bias");
  }
  names.insert(names.end(), {"au.weight", "au.bias", "expr.weight", "expr.bias", "va.weight", "va.bias"});
  return names;
}

std::size_t MultitaskModel::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor* t : parameters()) n += t->numel();
  return n;
}

namespace {

// Uniform in +/- sqrt(6 / (fan_in + fan_out)); biases start at zero.
Tensor init_weight(Rng& rng, std::size_t fan_in, std::size_t fan_out) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor w = Tensor::zeros({fan_in, fan_out});
  for (double& v : w.data) v = bound * (2.0 * rng.uniform() - 1.0);
  return w;
}

}  // namespace

MultitaskModel init_model(const ArchConfig& arch, std::uint64_t seed) {
  arch.validate();
  MultitaskModel model;
  model.arch = arch;
  model.seed = seed;
  Rng rng(mix_seed(seed, 0x6d6f64656cULL));  // "model" stream

  std::size_t in = arch.input_dim;
  for (std::size_t width : arch.hidden) {
    model.backbone_w.push_back(init_weight(rng, in, width));
    model.backbone_b.push_back(Tensor::zeros({width}));
    in = width;
  }
  model.au_w = init_weight(rng, in, kNumAu);
  model.au_b = Tensor::zeros({kNumAu});
  model.expr_w = init_weight(rng, in, kNumExpr);
  model.expr_b = Tensor::zeros({kNumExpr});
  model.va_w = init_weight(rng, in, 2 * kNumVaBins);
  model.va_b = Tensor::zeros({2 * kNumVaBins});
  return model;
}

TapedParams TapedParams::from(const MultitaskModel& model) {
  TapedParams tp;
  tp.n_backbone_layers = model.backbone_w.size();
  for (const Tensor* t : model.parameters()) {
    tp.all.emplace_back(*t, /*requires_grad=*/true);
  }
  return tp;
}

void TapedParams::write_back(MultitaskModel& model) const {
  std::vector<Tensor*> dst = model.parameters();
  if (dst.size() != all.size()) throw std::logic_error("TapedParams: parameter count mismatch");
  for (std::size_t i = 0; i < dst.size(); ++i) *dst[i] = all[i].value();
}

namespace {

Tensor bin_centers_column() {
  Tensor c = Tensor::zeros({kNumVaBins, 1});
  for (std::size_t k = 0; k < kNumVaBins; ++k) c.data[k] = va_bin_center(k);
  return c;
}

}  // namespace

ForwardResult forward(const TapedParams& params, const ArchConfig& arch, const Tensor& features,
                      bool train_mode, Rng* rng) {
  if (features.shape.size() != 2 || features.cols() != arch.input_dim) {
    throw std::runtime_error("forward: feature width " + shape_str(features.shape) +
                             " does not match model input " + std::to_string(arch.input_dim));
  }
  if (train_mode && rng == nullptr) throw std::runtime_error("forward: train mode needs an rng");

  ad::Var h = ad::constant(features);
  for (std::size_t layer = 0; layer < params.n_backbone_layers; ++layer) {
    const ad::Var& w = params.all[2 * layer];
    const ad::Var& b = params.all[2 * layer + 1];
    h = ad::relu(ad::add(ad::matmul(h, w), b));
  }
  ad::Var head_in = (train_mode && arch.dropout > 0.0) ? ad::dropout(h, arch.dropout, *rng) : h;

  const std::size_t base = 2 * params.n_backbone_layers;
  ForwardResult r;
  r.au_logits = ad::add(ad::matmul(head_in, params.all[base]), params.all[base + 1]);
  r.expr_logits = ad::add(ad::matmul(head_in, params.all[base + 2]), params.all[base + 3]);
  ad::Var va_block = ad::add(ad::matmul(head_in, params.all[base + 4]), params.all[base + 5]);
  r.valence_logits = ad::slice_cols(va_block, 0, kNumVaBins);
  r.arousal_logits = ad::slice_cols(va_block, kNumVaBins, kNumVaBins);

  r.au_probs = ad::sigmoid(r.au_logits);
  r.expr_probs = ad::softmax_rows(r.expr_logits);
  r.valence_probs = ad::softmax_rows(r.valence_logits);
  r.arousal_probs = ad::softmax_rows(r.arousal_logits);

  static const Tensor centers = bin_centers_column();
  ad::Var centers_var = ad::constant(centers);
  r.va_scalars = ad::concat_cols(ad::matmul(r.valence_probs, centers_var),
                                 ad::matmul(r.arousal_probs, centers_var));
  return r;
}

ProbOutputs eval_forward(const MultitaskModel& model, const Tensor& features) {
  ad::NoGradGuard guard;
  TapedParams tp = TapedParams::from(model);
  ForwardResult r = forward(tp, model.arch, features, /*train_mode=*/false, nullptr);
  return {r.au_probs.value(), r.expr_probs.value(), r.valence_probs.value(),
          r.arousal_probs.value(), r.va_scalars.value()};
}

LogitOutputs eval_logits(const MultitaskModel& model, const Tensor& features) {
  ad::NoGradGuard guard;
  TapedParams tp = TapedParams::from(model);
  ForwardResult r = forward(tp, model.arch, features, /*train_mode=*/false, nullptr);
  return {r.au_logits.value(), r.expr_logits.value(), r.valence_logits.value(),
          r.arousal_logits.value()};
}

ProbOutputs probs_from_logits(const LogitOutputs& logits) {
  ad::NoGradGuard guard;
  ProbOutputs p;
  p.au = ad::sigmoid(ad::constant(logits.au)).value();
  p.expr = ad::softmax_rows(ad::constant(logits.expr)).value();
  p.valence = ad::softmax_rows(ad::constant(logits.valence)).value();
  p.arousal = ad::softmax_rows(ad::constant(logits.arousal)).value();
  p.va = Tensor::zeros({p.au.rows(), 2});
  for (std::size_t i = 0; i < p.au.rows(); ++i) {
    p.va.at(i, 0) = decode_expectation(std::span<const double>(p.valence.data).subspan(i * kNumVaBins, kNumVaBins));
    p.va.at(i, 1) = decode_expectation(std::span<const double>(p.arousal.data).subspan(i * kNumVaBins, kNumVaBins));
  }
  return p;
}

ProbOutputs ensemble_predict(std::span<const MultitaskModel> members, const Tensor& features) {
  if (members.empty()) throw std::runtime_error("ensemble_predict: no members");
  for (const MultitaskModel& m : members) {
    if (!(m.arch == members.front().arch)) {
      throw std::runtime_error("ensemble_predict: member architecture mismatch");
    }
  }
  ProbOutputs acc = eval_forward(members.front(), features);
  for (std::size_t t = 1; t < members.size(); ++t) {
    ProbOutputs p = eval_forward(members[t], features);
    for (std::size_t i = 0; i < acc.au.numel(); ++i) acc.au.data[i] += p.au.data[i];
    for (std::size_t i = 0; i < acc.expr.numel(); ++i) acc.expr.data[i] += p.expr.data[i];
    for (std::size_t i = 0; i < acc.valence.numel(); ++i) acc.valence.data[i] += p.valence.data[i];
    for (std::size_t i = 0; i < acc.arousal.numel(); ++i) acc.arousal.data[i] += p.arousal.data[i];
  }
  const double inv = 1.0 / static_cast<double>(members.size());
  for (double& v : acc.au.data) v *= inv;
  for (double& v : acc.expr.data) v *= inv;
  for (double& v : acc.valence.data) v *= inv;
  for (double& v : acc.arousal.data) v *= inv;
  for (std::size_t i = 0; i < acc.au.rows(); ++i) {
    acc.va.at(i, 0) = decode_expectation(std::span<const double>(acc.valence.data).subspan(i * kNumVaBins, kNumVaBins));
    acc.va.at(i, 1) = decode_expectation(std::span<const double>(acc.arousal.data).subspan(i * kNumVaBins, kNumVaBins));
  }
  return acc;
}

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

namespace {

json tensor_to_json(const Tensor& t) {
  json j;
  j["shape"] = t.shape;
  j["data"] = t.data;
  return j;
}

Tensor tensor_from_json(const json& j) {
  return Tensor(j.at("shape").get<std::vector<std::size_t>>(),
                j.at("data").get<std::vector<double>>());
}

}  // namespace

void save_checkpoint(const MultitaskModel& model, const std::filesystem::path& file) {
  json j;
  j["arch"] = {{"input_dim", model.arch.input_dim},
               {"hidden", model.arch.hidden},
               {"dropout", model.arch.dropout}};
  j["seed"] = model.seed;
  j["generation"] = model.generation;
  j["member_index"] = model.member_index;
  json params;
  const auto names = model.parameter_names();
  const auto tensors = model.parameters();
  for (std::size_t i = 0; i < names.size(); ++i) params[names[i]] = tensor_to_json(*tensors[i]);
  j["parameters"] = std::move(params);
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write checkpoint " + file.string());
  out << j.dump(2) << "\n";
}

MultitaskModel load_checkpoint(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot read checkpoint " + file.string());
  json j = json::parse(in);
  ArchConfig arch;
  arch.input_dim = j.at("arch").at("input_dim").get<std::size_t>();
  arch.hidden = j.at("arch").at("hidden").get<std::vector<std::size_t>>();
  arch.dropout = j.at("arch").at("dropout").get<double>();
  MultitaskModel model = init_model(arch, j.at("seed").get<std::uint64_t>());
  model.generation = j.at("generation").get<int>();
  model.member_index = j.at("member_index").get<int>();
  const auto names = model.parameter_names();
  auto tensors = model.parameters();
  for (std::size_t i = 0; i < names.size(); ++i) {
    Tensor loaded = tensor_from_json(j.at("parameters").at(names[i]));
    if (!loaded.same_shape(*tensors[i])) {
      throw std::runtime_error("checkpoint parameter " + names[i] + " has unexpected shape");
    }
    *tensors[i] = std::move(loaded);
  }
  return model;
}

}  // namespace mtsd
