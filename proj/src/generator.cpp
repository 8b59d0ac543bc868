#include "gmg/generator.hpp"

#include <algorithm>
#include <cmath>

#include "gmg/errors.hpp"

namespace gmg {

std::size_t output_size(std::size_t vocab_size) {
  if (vocab_size < static_cast<std::size_t>(Vocabulary::kNumSpecials)) throw ContractError("vocabulary lacks specials");
  return vocab_size - 3;
}

int output_to_id(std::size_t index) { return index == 0 ? Vocabulary::kEos : static_cast<int>(index) + 3; }

std::size_t id_to_output(int id) {
  if (id == Vocabulary::kEos) return 0;
  if (id < Vocabulary::kNumSpecials) throw ContractError("token id " + std::to_string(id) + " is not emittable");
  return static_cast<std::size_t>(id) - 3;
}

Generator::Generator(std::size_t vocab_size, const ModelDims& dims, std::mt19937_64& rng)
    : init(dims.feature, dims.hidden, rng),
      cell(dims.embed, dims.hidden, rng),
      out(dims.hidden, dims.feature, rng),
      gate(dims.feature, dims.feature, rng),
      project(dims.feature, output_size(vocab_size), rng, false) {
  // Start close to the ungated decoder: small weights, unit bias.
  for (auto& w : gate.weight.mutable_values()) w *= 0.1;
  for (auto& b : gate.bias.mutable_values()) b = 1.0;
}

RecurrentState Generator::initial_state(Tape& tape, Var s0, bool trainable) {
  Var h = tanh(init.forward(tape, s0, trainable));
  return {h, tape.value(Tensor::zeros({cell.hidden_size()}))};
}

RecurrentState Generator::advance(Tape& tape, const RecurrentState& state, Var input, bool trainable) {
  return cell.step(tape, input, state, trainable);
}

Var Generator::decoder_feature(Tape& tape, Var hidden, bool trainable) { return out.forward(tape, hidden, trainable); }

Var Generator::gate_vector(Tape& tape, Var prediction, bool trainable) {
  return gate.forward(tape, prediction, trainable);
}

Var Generator::gated_logits(Tape& tape, Var decoder_feature, Var gate, bool trainable) {
  return project.forward(tape, mul(decoder_feature, gate), trainable);
}

Var Generator::ungated_logits(Tape& tape, Var decoder_feature, bool trainable) {
  return project.forward(tape, decoder_feature, trainable);
}

Var Generator::step_distribution(Tape& tape, Var hidden, Var prediction, bool trainable) {
  Var o = decoder_feature(tape, hidden, trainable);
  return softmax(gated_logits(tape, o, gate_vector(tape, prediction, trainable), trainable));
}

void Generator::collect(ParameterList& out_list, const std::string& prefix) {
  init.collect(out_list, prefix + ".init");
  cell.collect(out_list, prefix + ".cell");
  out.collect(out_list, prefix + ".out");
  gate.collect(out_list, prefix + ".gate");
  project.collect(out_list, prefix + ".project");
}

namespace {

Var token_embedding(Var table, int id) {
  const int ids[] = {id};
  Var col = embed_columns(table, ids, 1, Vocabulary::kPad);
  return reshape(col, {col.size()});
}

/// Spreads alphabet probabilities over the full vocabulary (specials other
/// than EOS get zero mass).
Var alphabet_to_vocab(Tape& tape, Var probs) {
  std::vector<Var> parts{tape.value(Tensor::zeros({2})), slice(probs, 0, 1), tape.value(Tensor::zeros({1}))};
  if (probs.size() > 1) parts.push_back(slice(probs, 1, probs.size() - 1));
  return concat(parts);
}

}  // namespace

Var soft_embedding(Tape& tape, Var logits, double temperature, Var table) {
  if (!(temperature > 0.0)) throw ContractError("soft-argmax temperature must be positive");
  Var p = softmax(scale(logits, 1.0 / temperature));
  return vecmat(alphabet_to_vocab(tape, p), table);
}

Unrolled unroll(Tape& tape, Policy policy, Var s0, const UnrollOptions& options,
                std::optional<std::span<const int>> forced, const TokenChooser& choose) {
  if (!forced && !choose) throw ContractError("free-running decoding needs a token chooser");
  if (options.max_len < 1) throw ContractError("max_len must be positive");
  const bool tg = options.train_generator;
  Generator& gen = policy.generator;
  Var table = policy.encoder.embedding_var(tape, tg);
  RecurrentState dec = gen.initial_state(tape, s0, tg);
  RecurrentState gs = policy.guider.initial_state(tape, stop_gradient(s0), options.train_guider);

  Unrolled u;
  std::vector<int> ids{Vocabulary::kBos};
  const std::size_t limit = forced ? forced->size() : options.max_len;
  for (std::size_t t = 1; t <= limit; ++t) {
    Var f = policy.encoder.encode(tape, ids, false);
    u.features.push_back(f);
    auto g = policy.guider.step(tape, gs, f, options.label, options.train_guider);
    gs = g.state;
    u.predictions.push_back(g.prediction);

    Var input;
    if (options.soft_temperature && !u.logits.empty()) {
      input = soft_embedding(tape, u.logits.back(), *options.soft_temperature, table);
    } else {
      input = token_embedding(table, ids.back());
    }
    dec = gen.advance(tape, dec, input, tg);
    Var o = gen.decoder_feature(tape, dec.hidden, tg);
    Var w = gen.gate_vector(tape, stop_gradient(g.prediction), tg);
    Var logits = gen.gated_logits(tape, o, w, tg);
    Var lp = log_softmax(logits);

    std::size_t index;
    if (forced) {
      index = id_to_output((*forced)[t - 1]);
    } else if (t == options.max_len) {
      index = 0;
      u.truncated = true;
    } else {
      auto logp = lp.value();
      std::vector<double> probs(logp.size());
      for (std::size_t i = 0; i < probs.size(); ++i) probs[i] = std::exp(logp[i]);
      index = choose(probs);
    }
    u.logits.push_back(logits);
    u.log_probs.push_back(pick(lp, index));
    int id = output_to_id(index);
    u.tokens.push_back(id);
    ids.push_back(id);
    if (id == Vocabulary::kEos) break;
  }
  u.features.push_back(policy.encoder.encode(tape, ids, false));
  return u;
}

namespace {

GenerationTrace to_trace(const Unrolled& u, const Tensor& init, std::optional<int> label) {
  GenerationTrace trace;
  trace.sentence.tokens = u.tokens;
  for (Var lp : u.log_probs) trace.log_probs.push_back(lp.item());
  for (Var f : u.features) trace.features.push_back(f.to_tensor());
  for (Var p : u.predictions) trace.predictions.push_back(p.to_tensor());
  trace.init = init;
  trace.label = label;
  trace.truncated = u.truncated;
  return trace;
}

}  // namespace

GenerationTrace sample_sequence(Policy policy, const Tensor& init, std::mt19937_64& rng, DecodeMode mode,
                                std::size_t max_len, std::optional<int> label) {
  Tape tape;
  UnrollOptions options;
  options.max_len = max_len;
  options.label = label;
  TokenChooser choose = [&](std::span<const double> probs) {
    return mode == DecodeMode::greedy ? argmax(probs) : draw(probs, rng);
  };
  auto u = unroll(tape, policy, encode_initial(tape, policy.encoder, init), options, std::nullopt, choose);
  return to_trace(u, init, label);
}

GenerationTrace force_sequence(Policy policy, const Tensor& init, const Sentence& s, std::size_t max_len,
                               std::optional<int> label) {
  Tape tape;
  UnrollOptions options;
  options.max_len = max_len;
  options.label = label;
  std::span<const int> tokens(s.tokens);
  auto u = unroll(tape, policy, encode_initial(tape, policy.encoder, init), options, tokens);
  return to_trace(u, init, label);
}

Var sentence_nll(const Unrolled& u) {
  if (u.log_probs.empty()) throw ContractError("empty decoding pass");
  return scale(sum_all(u.log_probs), -1.0 / static_cast<double>(u.log_probs.size()));
}

Var mle_loss(Tape& tape, Policy policy, std::span<const Sentence> batch, const std::vector<Var>& inits,
             const UnrollOptions& options) {
  if (batch.empty()) throw ContractError("mle_loss on an empty batch");
  if (inits.size() != batch.size()) throw ContractError("one initial feature per sentence required");
  std::vector<Var> losses;
  losses.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    std::span<const int> tokens(batch[i].tokens);
    losses.push_back(sentence_nll(unroll(tape, policy, inits[i], options, tokens)));
  }
  return scale(sum_all(losses), 1.0 / static_cast<double>(batch.size()));
}

double mean_token_nll(Policy policy, std::span<const Sentence> sentences, const std::vector<Tensor>& inits,
                      std::size_t max_len) {
  if (sentences.empty()) throw ContractError("mean_token_nll on an empty corpus");
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    auto trace = force_sequence(policy, inits.at(i), sentences[i], max_len);
    for (double lp : trace.log_probs) total -= lp;
    count += trace.log_probs.size();
  }
  return total / static_cast<double>(count);
}

std::size_t draw(std::span<const double> probs, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double r = u(rng);
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    acc += probs[i];
    last = i;
    if (r < acc) return i;
  }
  return last;
}

std::size_t argmax(std::span<const double> values) {
  return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

}  // namespace gmg
