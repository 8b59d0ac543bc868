#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "gmg/encoder.hpp"
#include "gmg/optim.hpp"

namespace gmg {

/// CNN sentence classifier: its own embedding, the encoder's conv stack, and
/// a linear read-out to one logit. score() = sigmoid(logit).
class Discriminator {
 public:
  Discriminator(std::size_t vocab_size, const ModelDims& dims, std::mt19937_64& rng);

  Tensor embedding;
  ConvLayer conv1;
  ConvLayer conv2;
  Linear readout;

  std::size_t width() const { return width_; }

  /// Logit for a token sequence (EOS included), padded to width().
  Var logit(Tape& tape, std::span<const int> tokens, bool trainable);
  /// Logit for a sequence of embedding vectors (at most width() of them);
  /// used to score soft (expected-embedding) sentences.
  Var logit_from_embeddings(Tape& tape, const std::vector<Var>& embeddings, bool trainable);
  /// Probability that the sentence is real, strictly inside (0,1).
  double score(const Sentence& s);

  void collect(ParameterList& out, const std::string& prefix = "discriminator");

 private:
  std::size_t width_;
};

/// Mean binary cross-entropy over real (target 1) and fake (target 0)
/// sentences, each side weighted equally.
Var discriminator_loss(Tape& tape, Discriminator& d, std::span<const Sentence> real, std::span<const Sentence> fake,
                       bool trainable = true);

/// One Adam step on discriminator_loss(); returns the loss before the step.
double discriminator_train_step(Discriminator& d, Adam& optimizer, std::span<const Sentence> real,
                                std::span<const Sentence> fake);

}  // namespace gmg
