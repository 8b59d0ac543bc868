#pragma once

#include <cstddef>
#include <random>
#include <string>

#include "gmg/ops.hpp"
#include "gmg/tensor.hpp"

namespace gmg {

/// Affine map y = W x + b with W [out x in].
struct Linear {
  Tensor weight;
  Tensor bias;

  Linear() = default;
  Linear(std::size_t in, std::size_t out, std::mt19937_64& rng, bool with_bias = true);

  std::size_t in_features() const { return weight.dim(1); }
  std::size_t out_features() const { return weight.dim(0); }
  bool has_bias() const { return bias.size() > 0; }

  Var forward(Tape& tape, Var x, bool trainable);
  void collect(ParameterList& out, const std::string& prefix);
};

/// LSTM parameters: weight [4H x (D+H)], bias [4H] with forget-gate bias 1.
struct LstmLayer {
  Tensor weight;
  Tensor bias;

  LstmLayer() = default;
  LstmLayer(std::size_t input, std::size_t hidden, std::mt19937_64& rng);

  std::size_t hidden_size() const { return bias.size() / 4; }
  std::size_t input_size() const { return weight.dim(1) - hidden_size(); }

  RecurrentState step(Tape& tape, Var x, const RecurrentState& state, bool trainable);
  void collect(ParameterList& out, const std::string& prefix);
};

/// Conv1d parameters: kernel [C_out x C_in x K], bias [C_out].
struct ConvLayer {
  Tensor kernel;
  Tensor bias;
  std::size_t stride = 1;

  ConvLayer() = default;
  ConvLayer(std::size_t in_channels, std::size_t out_channels, std::size_t width, std::size_t stride,
            std::mt19937_64& rng);

  std::size_t out_channels() const { return kernel.dim(0); }
  std::size_t width() const { return kernel.dim(2); }
  std::size_t output_length(std::size_t input_length) const;

  Var forward(Tape& tape, Var x, bool trainable);
  void collect(ParameterList& out, const std::string& prefix);
};

/// Zeroes every value of every tensor in the list.
void zero_values(const ParameterList& params);

}  // namespace gmg
