#include "gmg/nn.hpp"

#include <algorithm>
#include <cmath>

#include "gmg/errors.hpp"

namespace gmg {

namespace {
double glorot(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}
}  // namespace

Linear::Linear(std::size_t in, std::size_t out, std::mt19937_64& rng, bool with_bias)
    : weight(Tensor::uniform({out, in}, glorot(in, out), rng, true)) {
  if (with_bias) bias = Tensor::zeros({out}, true);
}

Var Linear::forward(Tape& tape, Var x, bool trainable) {
  Var y = matvec(tape.bind(weight, trainable), x);
  if (has_bias()) y = add(y, tape.bind(bias, trainable));
  return y;
}

void Linear::collect(ParameterList& out, const std::string& prefix) {
  out.push_back({prefix + ".weight", &weight});
  if (has_bias()) out.push_back({prefix + ".bias", &bias});
}

LstmLayer::LstmLayer(std::size_t input, std::size_t hidden, std::mt19937_64& rng)
    : weight(Tensor::uniform({4 * hidden, input + hidden}, 1.0 / std::sqrt(static_cast<double>(hidden)), rng,
                             true)),
      bias(Tensor::zeros({4 * hidden}, true)) {
  for (std::size_t k = hidden; k < 2 * hidden; ++k) bias[k] = 1.0;
}

RecurrentState LstmLayer::step(Tape& tape, Var x, const RecurrentState& state, bool trainable) {
  return lstm_cell(x, state, tape.bind(weight, trainable), tape.bind(bias, trainable));
}

void LstmLayer::collect(ParameterList& out, const std::string& prefix) {
  out.push_back({prefix + ".weight", &weight});
  out.push_back({prefix + ".bias", &bias});
}

ConvLayer::ConvLayer(std::size_t in_channels, std::size_t out_channels, std::size_t width, std::size_t stride_,
                     std::mt19937_64& rng)
    : kernel(Tensor::uniform({out_channels, in_channels, width},
                             std::sqrt(6.0 / static_cast<double>(in_channels * width + out_channels)), rng, true)),
      bias(Tensor::zeros({out_channels}, true)),
      stride(stride_) {
  if (stride == 0) throw ContractError("conv stride must be positive");
}

std::size_t ConvLayer::output_length(std::size_t input_length) const {
  if (input_length < width()) return 0;
  return (input_length - width()) / stride + 1;
}

Var ConvLayer::forward(Tape& tape, Var x, bool trainable) {
  return conv1d(x, tape.bind(kernel, trainable), tape.bind(bias, trainable), stride);
}

void ConvLayer::collect(ParameterList& out, const std::string& prefix) {
  out.push_back({prefix + ".kernel", &kernel});
  out.push_back({prefix + ".bias", &bias});
}

void zero_values(const ParameterList& params) {
  for (const auto& p : params) {
    auto v = p.tensor->mutable_values();
    std::fill(v.begin(), v.end(), 0.0);
  }
}

}  // namespace gmg
