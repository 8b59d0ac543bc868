#pragma once

#include <cstddef>
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace gmg {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles.
///
/// A tensor with requires_grad set owns a gradient buffer of the same shape;
/// this is how model parameters are represented. Values are validated as
/// finite at construction.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor ones(Shape shape);
  static Tensor filled(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
  /// Uniform(-bound, bound) entries.
  static Tensor uniform(Shape shape, double bound, std::mt19937_64& rng, bool requires_grad = false);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }

  std::span<const double> values() const { return values_; }
  std::span<double> mutable_values() { return values_; }
  const double* data() const { return values_.data(); }
  double* data() { return values_.data(); }

  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }
  double at(std::size_t r, std::size_t c) const { return values_[r * shape_[1] + c]; }

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool on);

  std::span<const double> grad() const { return grad_; }
  std::span<double> mutable_grad() { return grad_; }
  double* grad_data() { return grad_.data(); }
  void zero_grad();
  double grad_norm() const;

  /// Throws NumericalError if any value is NaN or infinite.
  void check_finite(const char* context) const;

  bool operator==(const Tensor& other) const {
    return shape_ == other.shape_ && values_ == other.values_;
  }

 private:
  Shape shape_;
  std::vector<double> values_;
  bool requires_grad_ = false;
  std::vector<double> grad_;
};

/// A parameter tensor with a stable, dot-separated name ("encoder.conv1.weight").
struct NamedTensor {
  std::string name;
  Tensor* tensor;
};

using ParameterList = std::vector<NamedTensor>;

void zero_grads(const ParameterList& params);
double grad_norm(const ParameterList& params);

}  // namespace gmg
