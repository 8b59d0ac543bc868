#include "gmg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gmg/errors.hpp"

namespace gmg {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto extent : shape) n *= extent;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (shape_.empty()) throw DimensionError("tensor shape must have at least one extent");
  for (auto extent : shape_) {
    if (extent == 0) throw DimensionError("tensor extents must be positive: " + shape_string(shape_));
  }
  if (shape_size(shape_) != values_.size()) {
    throw DimensionError("tensor of shape " + shape_string(shape_) + " given " +
                         std::to_string(values_.size()) + " values");
  }
  check_finite("Tensor construction");
  set_requires_grad(requires_grad);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::ones(Shape shape) { return filled(std::move(shape), 1.0); }

Tensor Tensor::filled(Shape shape, double value) {
  auto n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::vector(std::vector<double> values) {
  Shape shape{values.size()};
  return Tensor(std::move(shape), std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

Tensor Tensor::uniform(Shape shape, double bound, std::mt19937_64& rng, bool requires_grad) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> values(shape_size(shape));
  for (auto& v : values) v = dist(rng);
  return Tensor(std::move(shape), std::move(values), requires_grad);
}

void Tensor::set_requires_grad(bool on) {
  requires_grad_ = on;
  if (on) {
    grad_.assign(values_.size(), 0.0);
  } else {
    grad_.clear();
  }
}

void Tensor::zero_grad() { std::fill(grad_.begin(), grad_.end(), 0.0); }

double Tensor::grad_norm() const {
  double s = 0.0;
  for (double g : grad_) s += g * g;
  return std::sqrt(s);
}

void Tensor::check_finite(const char* context) const {
  for (double v : values_) {
    if (!std::isfinite(v)) throw NumericalError(std::string("non-finite value in ") + context);
  }
}

void zero_grads(const ParameterList& params) {
  for (const auto& p : params) p.tensor->zero_grad();
}

double grad_norm(const ParameterList& params) {
  double s = 0.0;
  for (const auto& p : params) {
    for (double g : p.tensor->grad()) s += g * g;
  }
  return std::sqrt(s);
}

}  // namespace gmg
