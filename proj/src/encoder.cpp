#include "gmg/encoder.hpp"

#include <algorithm>
#include <cmath>

#include "gmg/errors.hpp"

namespace gmg {

ModelDims ModelDims::paper(std::size_t max_len) {
  ModelDims d;
  d.max_len = max_len;
  return d;
}

ModelDims ModelDims::small(std::size_t max_len) {
  ModelDims d;
  d.embed = 64;
  d.conv = 64;
  d.feature = 128;
  d.hidden = 64;
  d.max_len = max_len;
  return d;
}

std::size_t ModelDims::input_width() const {
  std::size_t minimum = (kernel - 1) * stride + kernel;
  return std::max(max_len + 1, minimum);
}

nlohmann::json ModelDims::to_json() const {
  return {{"embed", embed}, {"conv", conv},     {"feature", feature}, {"hidden", hidden},
          {"kernel", kernel}, {"stride", stride}, {"max_len", max_len}};
}

ModelDims ModelDims::from_json(const nlohmann::json& j) {
  ModelDims d;
  d.embed = j.at("embed").get<std::size_t>();
  d.conv = j.at("conv").get<std::size_t>();
  d.feature = j.at("feature").get<std::size_t>();
  d.hidden = j.at("hidden").get<std::size_t>();
  d.kernel = j.value("kernel", d.kernel);
  d.stride = j.value("stride", d.stride);
  d.max_len = j.at("max_len").get<std::size_t>();
  return d;
}

std::vector<int> prefix_ids(std::span<const int> tokens, std::size_t k) {
  if (k > tokens.size()) throw ContractError("prefix longer than the sentence");
  std::vector<int> ids;
  ids.reserve(k + 1);
  ids.push_back(Vocabulary::kBos);
  ids.insert(ids.end(), tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(k));
  return ids;
}

namespace {

std::size_t flattened_length(const ModelDims& d) {
  std::size_t l1 = (d.input_width() - d.kernel) / d.stride + 1;
  return (l1 - d.kernel) / d.stride + 1;
}

}  // namespace

Encoder::Encoder(std::size_t vocab_size, const ModelDims& dims, std::mt19937_64& rng)
    : embedding(Tensor::uniform({vocab_size, dims.embed}, std::sqrt(3.0 / static_cast<double>(dims.embed)), rng,
                                true)),
      conv1(dims.embed, dims.conv, dims.kernel, dims.stride, rng),
      conv2(dims.conv, dims.feature, dims.kernel, dims.stride, rng),
      mlp(dims.feature * flattened_length(dims), dims.feature, rng),
      feature_norm(Tensor::scalar(1.0)),
      width_(dims.input_width()) {}

Var Encoder::encode(Tape& tape, std::span<const int> ids, bool trainable) {
  if (ids.empty()) throw ContractError("cannot encode an empty prefix");
  if (ids.size() > width_) {
    throw ContractError("prefix of " + std::to_string(ids.size()) + " tokens exceeds encoder width " +
                        std::to_string(width_));
  }
  Var cols = embed_columns(tape.bind(embedding, trainable), ids, width_, Vocabulary::kPad);
  Var h1 = relu(conv1.forward(tape, cols, trainable));
  Var h2 = relu(conv2.forward(tape, h1, trainable));
  Var flat = reshape(h2, {h2.size()});
  return relu(mlp.forward(tape, flat, trainable));
}

Tensor Encoder::features(std::span<const int> ids) {
  Tape tape;
  return encode(tape, ids, false).to_tensor();
}

std::vector<Tensor> Encoder::prefix_features(std::span<const int> tokens) {
  std::vector<Tensor> out;
  out.reserve(tokens.size() + 1);
  for (std::size_t k = 0; k <= tokens.size(); ++k) out.push_back(features(prefix_ids(tokens, k)));
  return out;
}

void Encoder::collect(ParameterList& out, const std::string& prefix) {
  out.push_back({prefix + ".embedding", &embedding});
  conv1.collect(out, prefix + ".conv1");
  conv2.collect(out, prefix + ".conv2");
  mlp.collect(out, prefix + ".mlp");
}

Tensor sample_noise(std::size_t dim, double mean_norm, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(dim);
  // E|relu(z)|^2 = dim/2 for standard normal z.
  const double factor = mean_norm / std::sqrt(static_cast<double>(dim) / 2.0);
  for (auto& x : v) x = std::max(0.0, normal(rng)) * factor;
  return Tensor({dim}, std::move(v));
}

Var encode_initial(Tape& tape, Encoder& encoder, const Sentence& x, bool trainable) {
  auto ids = prefix_ids(x.tokens, x.tokens.size());
  return encoder.encode(tape, ids, trainable);
}

Var encode_initial(Tape& tape, const Encoder& encoder, const Tensor& noise) {
  if (noise.rank() != 1 || noise.size() != encoder.feature_dim()) {
    throw DimensionError("noise must be a " + std::to_string(encoder.feature_dim()) + "-dim vector, got " +
                         shape_string(noise.shape()));
  }
  return tape.value(noise);
}

}  // namespace gmg
