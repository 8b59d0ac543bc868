#include "gmg/guider.hpp"

#include "gmg/errors.hpp"

namespace gmg {

Guider::Guider(const ModelDims& dims, std::size_t num_labels, std::mt19937_64& rng)
    : init(dims.feature, dims.hidden, rng),
      cell(dims.feature + num_labels, dims.hidden, rng),
      head(dims.hidden, dims.feature, rng),
      num_labels_(num_labels) {}

RecurrentState Guider::initial_state(Tape& tape, Var s0, bool trainable) {
  Var h = tanh(init.forward(tape, s0, trainable));
  return {h, tape.value(Tensor::zeros({cell.hidden_size()}))};
}

Guider::Step Guider::step(Tape& tape, const RecurrentState& state, Var f, std::optional<int> label, bool trainable) {
  Var input = f;
  if (num_labels_ > 0) {
    if (!label) throw ContractError("style-mode guider needs a label");
    if (*label < 0 || static_cast<std::size_t>(*label) >= num_labels_) throw ContractError("label out of range");
    Tensor onehot = Tensor::zeros({num_labels_});
    onehot[static_cast<std::size_t>(*label)] = 1.0;
    input = concat({f, tape.value(std::move(onehot))});
  } else if (label) {
    throw ContractError("label supplied to a guider without style mode");
  }
  RecurrentState next = cell.step(tape, input, state, trainable);
  return {head.forward(tape, next.hidden, trainable), next};
}

std::vector<Var> Guider::unroll(Tape& tape, Var s0, const std::vector<Var>& features, std::optional<int> label,
                                bool trainable) {
  RecurrentState state = initial_state(tape, s0, trainable);
  std::vector<Var> preds;
  preds.reserve(features.size());
  for (Var f : features) {
    auto s = step(tape, state, f, label, trainable);
    preds.push_back(s.prediction);
    state = s.state;
  }
  return preds;
}

std::vector<Tensor> Guider::replay(const Tensor& s0, const std::vector<Tensor>& features, std::optional<int> label) {
  Tape tape;
  std::vector<Var> fs;
  fs.reserve(features.size());
  for (const auto& f : features) fs.push_back(tape.value(f));
  std::vector<Tensor> out;
  for (Var p : unroll(tape, tape.value(s0), fs, label, false)) out.push_back(p.to_tensor());
  return out;
}

void Guider::collect(ParameterList& out, const std::string& prefix) {
  init.collect(out, prefix + ".init");
  cell.collect(out, prefix + ".cell");
  head.collect(out, prefix + ".head");
}

Var guider_objective(const std::vector<Var>& features, const std::vector<Var>& predictions, std::size_t c) {
  if (c < 1) throw ContractError("lookahead c must be at least 1");
  if (features.size() <= c) {
    throw ContractError("guider objective needs more than c=" + std::to_string(c) + " features, got " +
                        std::to_string(features.size()));
  }
  const std::size_t valid = features.size() - c;
  if (predictions.size() < valid) throw ContractError("fewer predictions than valid lookahead positions");
  std::vector<Var> terms;
  terms.reserve(2 * valid);
  for (std::size_t k = 0; k < valid; ++k) {
    Var target = features[k + c];
    terms.push_back(cosine_similarity(target, predictions[k]));
    terms.push_back(cosine_similarity(sub(target, features[k]), sub(predictions[k], features[k])));
  }
  return scale(sum_all(terms), -1.0 / static_cast<double>(valid));
}

Var guider_loss(Tape& tape, Guider& guider, Var s0, const std::vector<Var>& features, std::size_t c,
                std::optional<int> label, bool trainable) {
  if (features.size() <= c) throw ContractError("sequence too short for lookahead c=" + std::to_string(c));
  return guider_objective(features, guider.unroll(tape, s0, features, label, trainable), c);
}

std::pair<double, double> guider_cosines(const std::vector<Tensor>& features, const std::vector<Tensor>& predictions,
                                         std::size_t c) {
  if (features.size() <= c) throw ContractError("sequence too short for lookahead");
  const std::size_t valid = features.size() - c;
  double direct = 0.0, direction = 0.0;
  for (std::size_t k = 0; k < valid; ++k) {
    auto target = features[k + c].values();
    auto pred = predictions.at(k).values();
    auto base = features[k].values();
    std::vector<double> dt(target.size()), dp(target.size());
    for (std::size_t i = 0; i < target.size(); ++i) {
      dt[i] = target[i] - base[i];
      dp[i] = pred[i] - base[i];
    }
    direct += cosine_similarity(target, pred);
    direction += cosine_similarity(dt, dp);
  }
  return {direct / static_cast<double>(valid), direction / static_cast<double>(valid)};
}

Tensor predict_ahead(Guider& guider, const Tensor& s0, const std::vector<Tensor>& prefix_features, std::size_t c,
                     std::optional<int> label) {
  if (prefix_features.size() <= c) throw ContractError("prefix does not reach back c steps");
  std::vector<Tensor> head(prefix_features.begin(),
                           prefix_features.end() - static_cast<std::ptrdiff_t>(c));
  return guider.replay(s0, head, label).back();
}

}  // namespace gmg
