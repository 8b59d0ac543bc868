#include "gmg/discriminator.hpp"

#include <cmath>

#include "gmg/errors.hpp"

namespace gmg {

namespace {

std::size_t flattened(const ModelDims& d) {
  std::size_t l1 = (d.input_width() - d.kernel) / d.stride + 1;
  return (l1 - d.kernel) / d.stride + 1;
}

Var classify(Tape& tape, Discriminator& d, Var columns, bool trainable) {
  Var h1 = relu(d.conv1.forward(tape, columns, trainable));
  Var h2 = relu(d.conv2.forward(tape, h1, trainable));
  return d.readout.forward(tape, reshape(h2, {h2.size()}), trainable);
}

}  // namespace

Discriminator::Discriminator(std::size_t vocab_size, const ModelDims& dims, std::mt19937_64& rng)
    : embedding(Tensor::uniform({vocab_size, dims.embed}, std::sqrt(3.0 / static_cast<double>(dims.embed)), rng,
                                true)),
      conv1(dims.embed, dims.conv, dims.kernel, dims.stride, rng),
      conv2(dims.conv, dims.feature, dims.kernel, dims.stride, rng),
      readout(dims.feature * flattened(dims), 1, rng),
      width_(dims.input_width()) {}

Var Discriminator::logit(Tape& tape, std::span<const int> tokens, bool trainable) {
  if (tokens.empty()) throw ContractError("cannot score an empty sentence");
  if (tokens.size() > width_) throw ContractError("sentence longer than the discriminator width");
  return classify(tape, *this, embed_columns(tape.bind(embedding, trainable), tokens, width_, Vocabulary::kPad),
                  trainable);
}

Var Discriminator::logit_from_embeddings(Tape& tape, const std::vector<Var>& embeddings, bool trainable) {
  if (embeddings.empty() || embeddings.size() > width_) throw ContractError("bad soft sentence length");
  return classify(tape, *this, stack_columns(embeddings, width_), trainable);
}

double Discriminator::score(const Sentence& s) {
  Tape tape;
  double z = logit(tape, s.tokens, false).item();
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

void Discriminator::collect(ParameterList& out, const std::string& prefix) {
  out.push_back({prefix + ".embedding", &embedding});
  conv1.collect(out, prefix + ".conv1");
  conv2.collect(out, prefix + ".conv2");
  readout.collect(out, prefix + ".readout");
}

Var discriminator_loss(Tape& tape, Discriminator& d, std::span<const Sentence> real, std::span<const Sentence> fake,
                       bool trainable) {
  if (real.empty() || fake.empty()) throw ContractError("discriminator needs nonempty real and fake batches");
  std::vector<Var> r, f;
  for (const auto& s : real) r.push_back(bce_with_logits(d.logit(tape, s.tokens, trainable), 1.0));
  for (const auto& s : fake) f.push_back(bce_with_logits(d.logit(tape, s.tokens, trainable), 0.0));
  return add(scale(sum_all(r), 0.5 / static_cast<double>(r.size())),
             scale(sum_all(f), 0.5 / static_cast<double>(f.size())));
}

double discriminator_train_step(Discriminator& d, Adam& optimizer, std::span<const Sentence> real,
                                std::span<const Sentence> fake) {
  Tape tape;
  Var loss = discriminator_loss(tape, d, real, fake, true);
  tape.backward(loss);
  optimizer.step();
  return loss.item();
}

}  // namespace gmg
