#include "gmg/tape.hpp"

#include <cmath>
#include <string>

#include "gmg/errors.hpp"

namespace gmg {

const Shape& Var::shape() const { return tape_->shape_of(id_); }
std::size_t Var::size() const { return tape_->size_of(id_); }
std::span<const double> Var::value() const { return {tape_->value_of(id_), tape_->size_of(id_)}; }
bool Var::requires_grad() const { return tape_->requires_grad_of(id_); }

double Var::item() const {
  if (size() != 1) throw ContractError("item() on a non-scalar of shape " + shape_string(shape()));
  return value()[0];
}

Tensor Var::to_tensor() const {
  auto v = value();
  return Tensor(shape(), std::vector<double>(v.begin(), v.end()));
}

Var Tape::push_node(Node node) {
  if (differentiated_) throw ContractError("cannot record on a tape that was already differentiated");
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::value(Tensor t, bool requires_grad) {
  Node node;
  node.shape = t.shape();
  auto v = t.values();
  node.owned.assign(v.begin(), v.end());
  node.data = node.owned.data();
  node.count = node.owned.size();
  node.requires_grad = requires_grad;
  return push_node(std::move(node));
}

Var Tape::param(Tensor& t) {
  if (!t.requires_grad()) return frozen(t);
  auto key = std::make_pair(static_cast<const Tensor*>(&t), true);
  if (auto it = bound_.find(key); it != bound_.end()) return Var(this, it->second);
  Node node;
  node.shape = t.shape();
  node.data = t.data();
  node.count = t.size();
  node.requires_grad = true;
  node.param = &t;
  auto var = push_node(std::move(node));
  bound_.emplace(key, var.id());
  return var;
}

Var Tape::frozen(const Tensor& t) {
  auto key = std::make_pair(&t, false);
  if (auto it = bound_.find(key); it != bound_.end()) return Var(this, it->second);
  Node node;
  node.shape = t.shape();
  node.data = t.data();
  node.count = t.size();
  auto var = push_node(std::move(node));
  bound_.emplace(key, var.id());
  return var;
}

Var Tape::push(Shape shape, std::vector<double> values, std::initializer_list<Var> inputs,
               BackwardFn backward) {
  return push(std::move(shape), std::move(values), std::vector<Var>(inputs), std::move(backward));
}

Var Tape::push(Shape shape, std::vector<double> values, const std::vector<Var>& inputs,
               BackwardFn backward) {
#ifndef NDEBUG
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericalError("non-finite value produced by tape op");
  }
#endif
  Node node;
  node.shape = std::move(shape);
  node.owned = std::move(values);
  node.data = node.owned.data();
  node.count = node.owned.size();
  for (const auto& in : inputs) {
    if (in.tape() != this) throw ContractError("operands recorded on different tapes");
    node.requires_grad = node.requires_grad || in.requires_grad();
  }
  if (node.requires_grad) node.backward = std::move(backward);
  return push_node(std::move(node));
}

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw ContractError("loss does not belong to this tape");
  if (differentiated_) throw ContractError("backward() called twice on the same tape");
  if (loss.size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + shape_string(loss.shape()));
  }
  if (!std::isfinite(loss.item())) throw NumericalError("non-finite loss");
  differentiated_ = true;

  for (auto& node : nodes_) {
    if (!node.requires_grad) continue;
    if (node.param != nullptr) {
      node.grad = node.param->grad_data();
    } else {
      node.grad_storage.assign(node.count, 0.0);
      node.grad = node.grad_storage.data();
    }
  }
  auto root = loss.id();
  if (!nodes_[root].requires_grad) return;
  nodes_[root].grad[0] += 1.0;
  for (std::uint32_t i = root + 1; i-- > 0;) {
    auto& node = nodes_[i];
    if (node.backward) node.backward(*this, i);
  }
}

std::span<const double> Tape::grad(Var v) const {
  const auto& node = nodes_.at(v.id());
  if (node.grad == nullptr) return {};
  return {node.grad, node.count};
}

}  // namespace gmg
