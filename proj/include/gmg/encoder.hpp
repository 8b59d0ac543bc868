#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "gmg/corpus.hpp"
#include "gmg/nn.hpp"

namespace gmg {

/// Network widths shared by every module.
struct ModelDims {
  std::size_t embed = 300;
  std::size_t conv = 300;
  std::size_t feature = 600;
  std::size_t hidden = 300;
  std::size_t kernel = 5;
  std::size_t stride = 2;
  std::size_t max_len = 25;

  /// Widths of the published architecture.
  static ModelDims paper(std::size_t max_len = 25);
  /// Reduced widths for quick runs and tests.
  static ModelDims small(std::size_t max_len = 16);

  /// Number of columns every encoder input is padded to: room for BOS plus a
  /// full sentence, and at least enough for the two strided convolutions.
  std::size_t input_width() const;

  nlohmann::json to_json() const;
  static ModelDims from_json(const nlohmann::json& j);
  bool operator==(const ModelDims&) const = default;
};

/// Token ids [BOS, y_1, ..., y_k] fed to the encoder for the length-k prefix.
std::vector<int> prefix_ids(std::span<const int> tokens, std::size_t k);

/// CNN sentence encoder: embedding, two strided ReLU convolutions, flatten,
/// ReLU MLP. Inputs are right-padded with PAD columns, whose embedding is
/// always zero.
class Encoder {
 public:
  Encoder(std::size_t vocab_size, const ModelDims& dims, std::mt19937_64& rng);

  Tensor embedding;
  ConvLayer conv1;
  ConvLayer conv2;
  Linear mlp;
  /// Mean feature norm on the training corpus, used to scale sampling noise.
  Tensor feature_norm;

  std::size_t feature_dim() const { return mlp.out_features(); }
  std::size_t width() const { return width_; }

  /// Feature of a token prefix (BOS included). With trainable == false the
  /// parameters are bound as constants and receive no gradient.
  Var encode(Tape& tape, std::span<const int> ids, bool trainable);
  /// Gradient-free feature values.
  Tensor features(std::span<const int> ids);
  /// f_0..f_T for a sentence: the encodings of [BOS], [BOS,y_1], ...
  std::vector<Tensor> prefix_features(std::span<const int> tokens);

  /// Embedding bound on `tape` for use by other networks sharing the table.
  Var embedding_var(Tape& tape, bool trainable) { return tape.bind(embedding, trainable); }

  void collect(ParameterList& out, const std::string& prefix = "encoder");

 private:
  std::size_t width_;
};

/// Sampling-mode initial feature: ReLU of standard normal draws, scaled so
/// its expected norm equals `mean_norm`.
Tensor sample_noise(std::size_t dim, double mean_norm, std::mt19937_64& rng);

/// Initial feature s_0: the encoding of the full sentence in training mode.
Var encode_initial(Tape& tape, Encoder& encoder, const Sentence& x, bool trainable);
/// Sampling mode: the supplied noise vector itself.
Var encode_initial(Tape& tape, const Encoder& encoder, const Tensor& noise);

}  // namespace gmg
