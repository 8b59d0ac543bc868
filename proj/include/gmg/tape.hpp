#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "gmg/tensor.hpp"

namespace gmg {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while its tape lives.
class Var {
 public:
  Var() = default;

  bool valid() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  std::uint32_t id() const { return id_; }

  const Shape& shape() const;
  std::size_t size() const;
  std::size_t dim(std::size_t axis) const { return shape().at(axis); }
  std::span<const double> value() const;
  double item() const;
  bool requires_grad() const;

  /// Copies the current value into a standalone tensor.
  Tensor to_tensor() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

/// Define-by-run reverse-mode tape.
///
/// Nodes are appended in evaluation order, so the node list is always
/// topologically sorted and backward() is a single reverse sweep. Leaves bound
/// with param() accumulate their gradient directly into the tensor's grad
/// buffer; gradients add up across every use of the leaf. A tape may be
/// differentiated once; a second backward() throws ContractError.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::uint32_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Owned copy of `t`. With requires_grad the node's gradient is kept on the
  /// tape and can be read back through grad().
  Var value(Tensor t, bool requires_grad = false);
  Var scalar(double v) { return value(Tensor::scalar(v)); }

  /// Binds a parameter by reference. Gradients flow into `t.grad()` when
  /// `t.requires_grad()`; otherwise the binding is a constant. Repeated binds of
  /// the same tensor return the same node.
  Var param(Tensor& t);
  /// Binds a tensor by reference as a constant (no gradient), whatever its
  /// requires_grad flag says.
  Var frozen(const Tensor& t);
  /// param() or frozen() depending on `trainable`.
  Var bind(Tensor& t, bool trainable) { return trainable ? param(t) : frozen(t); }

  void backward(Var loss);
  bool differentiated() const { return differentiated_; }

  /// Gradient of a node after backward(); empty span when the node had none.
  std::span<const double> grad(Var v) const;

  std::size_t size() const { return nodes_.size(); }

  // -- op implementation interface --------------------------------------
  Var push(Shape shape, std::vector<double> values, std::initializer_list<Var> inputs,
           BackwardFn backward);
  Var push(Shape shape, std::vector<double> values, const std::vector<Var>& inputs,
           BackwardFn backward);
  const Shape& shape_of(std::uint32_t id) const { return nodes_[id].shape; }
  const double* value_of(std::uint32_t id) const { return nodes_[id].data; }
  std::size_t size_of(std::uint32_t id) const { return nodes_[id].count; }
  bool requires_grad_of(std::uint32_t id) const { return nodes_[id].requires_grad; }
  /// Mutable gradient buffer; only valid during backward().
  double* grad_of(std::uint32_t id) { return nodes_[id].grad; }

 private:
  struct Node {
    Shape shape;
    std::vector<double> owned;
    const double* data = nullptr;
    std::size_t count = 0;
    bool requires_grad = false;
    Tensor* param = nullptr;
    std::vector<double> grad_storage;
    double* grad = nullptr;
    BackwardFn backward;
  };

  Var push_node(Node node);

  std::vector<Node> nodes_;
  std::map<std::pair<const Tensor*, bool>, std::uint32_t> bound_;
  bool differentiated_ = false;
};

}  // namespace gmg
