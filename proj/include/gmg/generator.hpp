#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "gmg/guider.hpp"

namespace gmg {

// The generator's output alphabet is EOS plus every non-special token; PAD,
// BOS and UNK are never emitted. Output index 0 is EOS and index j >= 1 is
// vocabulary id j + 3.
std::size_t output_size(std::size_t vocab_size);
int output_to_id(std::size_t index);
std::size_t id_to_output(int id);

/// LSTM decoder with plan-ahead gating. Each step computes
///   s_t = LSTM(s_{t-1}, e(y_{t-1})),  O_t = g(s_t),  w_t = phi(pred),
///   logits = V (O_t * w_t)
/// where pred is the guider's latest prediction. V has no bias, so a zero
/// gate gives exactly uniform logits.
class Generator {
 public:
  Generator(std::size_t vocab_size, const ModelDims& dims, std::mt19937_64& rng);

  Linear init;
  LstmLayer cell;
  Linear out;
  Linear gate;
  Linear project;

  std::size_t alphabet_size() const { return project.out_features(); }

  RecurrentState initial_state(Tape& tape, Var s0, bool trainable);
  RecurrentState advance(Tape& tape, const RecurrentState& state, Var input, bool trainable);
  Var decoder_feature(Tape& tape, Var hidden, bool trainable);
  Var gate_vector(Tape& tape, Var prediction, bool trainable);
  Var gated_logits(Tape& tape, Var decoder_feature, Var gate, bool trainable);
  Var ungated_logits(Tape& tape, Var decoder_feature, bool trainable);
  /// softmax(V (g(hidden) * phi(prediction))).
  Var step_distribution(Tape& tape, Var hidden, Var prediction, bool trainable);

  void collect(ParameterList& out, const std::string& prefix = "generator");
};

/// The three networks that act together when decoding.
struct Policy {
  Encoder& encoder;
  Guider& guider;
  Generator& generator;
};

/// Everything recorded while producing one sentence.
struct GenerationTrace {
  Sentence sentence;
  std::vector<double> log_probs;    // log p(y_t), one per token
  std::vector<Tensor> features;     // f_0..f_T
  std::vector<Tensor> predictions;  // pred_0..pred_{T-1}; pred_k follows f_k
  Tensor init;                      // s_0 shared by decoder and guider
  std::optional<int> label;
  bool truncated = false;           // final EOS was forced at max_len, not sampled

  std::size_t length() const { return sentence.length(); }
};

enum class DecodeMode { sample, greedy };

struct UnrollOptions {
  std::size_t max_len = 25;
  /// Bind generator-side parameters (decoder, gate, heads, shared embedding)
  /// as trainable.
  bool train_generator = false;
  /// Bind guider parameters as trainable. Gating always sees a detached copy
  /// of the prediction, so the guider only learns from its own objective.
  bool train_guider = false;
  std::optional<int> label;
  /// Soft-argmax decoding: after the first step the decoder input is the
  /// expected embedding under softmax(logits / temperature), and the emitted
  /// token is the argmax.
  std::optional<double> soft_temperature;
};

/// Tape-level record of one decoding pass.
struct Unrolled {
  std::vector<int> tokens;
  std::vector<Var> logits;
  std::vector<Var> log_probs;
  std::vector<Var> features;     // f_0..f_T (constants)
  std::vector<Var> predictions;  // pred_0..pred_{T-1}
  bool truncated = false;
};

/// Picks an output index from a probability vector over the alphabet.
using TokenChooser = std::function<std::size_t(std::span<const double> probs)>;

/// Decodes from s0. With `forced` set the given tokens are fed (teacher
/// forcing); otherwise `choose` picks each token until EOS, with EOS forced at
/// max_len. s0 feeds the decoder as is and the guider detached.
Unrolled unroll(Tape& tape, Policy policy, Var s0, const UnrollOptions& options,
                std::optional<std::span<const int>> forced, const TokenChooser& choose = {});

/// Samples (or greedily decodes) one sentence from initial feature `init`.
GenerationTrace sample_sequence(Policy policy, const Tensor& init, std::mt19937_64& rng, DecodeMode mode,
                                std::size_t max_len, std::optional<int> label = std::nullopt);

/// Teacher-forced trace of a given sentence, with the same bookkeeping as
/// sample_sequence().
GenerationTrace force_sequence(Policy policy, const Tensor& init, const Sentence& s, std::size_t max_len,
                               std::optional<int> label = std::nullopt);

/// Mean negative log-likelihood per token of one sentence.
Var sentence_nll(const Unrolled& u);

/// Teacher-forced MLE loss: mean over sentences of the per-token mean NLL.
/// `inits` holds one s_0 per sentence.
Var mle_loss(Tape& tape, Policy policy, std::span<const Sentence> batch, const std::vector<Var>& inits,
             const UnrollOptions& options);

/// Mean NLL per token over a corpus, each sentence decoded from the matching
/// initial feature. No gradients.
double mean_token_nll(Policy policy, std::span<const Sentence> sentences, const std::vector<Tensor>& inits,
                      std::size_t max_len);

/// Expected embedding under softmax(logits / temperature) over the output
/// alphabet, using rows of `table` [vocab x embed].
Var soft_embedding(Tape& tape, Var logits, double temperature, Var table);

/// Draws an output index from `probs`.
std::size_t draw(std::span<const double> probs, std::mt19937_64& rng);
std::size_t argmax(std::span<const double> values);

}  // namespace gmg
