#include "gmg/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include "gmg/errors.hpp"

namespace gmg {
namespace {

void require_same_tape(Var a, Var b) {
  if (!a.valid() || !b.valid()) throw ContractError("operation on an unbound Var");
  if (a.tape() != b.tape()) throw ContractError("operands recorded on different tapes");
}

void require_rank(Var a, std::size_t rank, const char* op) {
  if (a.shape().size() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_string(a.shape()));
  }
}

void require_same_shape(Var a, Var b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

double sigmoid_value(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

template <typename Fn, typename Deriv>
Var unary(Var a, Fn fn, Deriv deriv_from_out) {
  auto x = a.value();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = fn(x[i]);
  auto ia = a.id();
  return a.tape()->push(a.shape(), std::move(out), {a}, [ia, deriv_from_out](Tape& t, std::uint32_t self) {
    if (!t.requires_grad_of(ia)) return;
    const double* g = t.grad_of(self);
    const double* y = t.value_of(self);
    const double* xv = t.value_of(ia);
    double* ga = t.grad_of(ia);
    for (std::size_t i = 0, n = t.size_of(self); i < n; ++i) ga[i] += g[i] * deriv_from_out(xv[i], y[i]);
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner extents differ " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  const double* av = a.value().data();
  const double* bv = b.value().data();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      double aip = av[i * k + p];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aip * bv[p * n + j];
    }
  }
  auto ia = a.id(), ib = b.id();
  return a.tape()->push({m, n}, std::move(out), {a, b}, [=](Tape& t, std::uint32_t self) {
    const double* g = t.grad_of(self);
    const double* A = t.value_of(ia);
    const double* B = t.value_of(ib);
    if (t.requires_grad_of(ia)) {
      double* ga = t.grad_of(ia);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * B[p * n + j];
          ga[i * k + p] += s;
        }
    }
    if (t.requires_grad_of(ib)) {
      double* gb = t.grad_of(ib);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double aip = A[i * k + p];
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
        }
    }
  });
}

Var matvec(Var w, Var x) {
  require_same_tape(w, x);
  require_rank(w, 2, "matvec");
  require_rank(x, 1, "matvec");
  const std::size_t m = w.dim(0), n = w.dim(1);
  if (x.dim(0) != n) {
    throw DimensionError("matvec: " + shape_string(w.shape()) + " x " + shape_string(x.shape()));
  }
  const double* W = w.value().data();
  const double* X = x.value().data();
  std::vector<double> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = W + i * n;
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += row[j] * X[j];
    out[i] = s;
  }
  auto iw = w.id(), ix = x.id();
  return w.tape()->push({m}, std::move(out), {w, x}, [=](Tape& t, std::uint32_t self) {
    const double* g = t.grad_of(self);
    if (t.requires_grad_of(iw)) {
      double* gw = t.grad_of(iw);
      const double* Xv = t.value_of(ix);
      for (std::size_t i = 0; i < m; ++i) {
        double gi = g[i];
        if (gi == 0.0) continue;
        double* row = gw + i * n;
        for (std::size_t j = 0; j < n; ++j) row[j] += gi * Xv[j];
      }
    }
    if (t.requires_grad_of(ix)) {
      double* gx = t.grad_of(ix);
      const double* Wv = t.value_of(iw);
      for (std::size_t i = 0; i < m; ++i) {
        double gi = g[i];
        const double* row = Wv + i * n;
        for (std::size_t j = 0; j < n; ++j) gx[j] += gi * row[j];
      }
    }
  });
}

Var vecmat(Var x, Var w) {
  require_same_tape(w, x);
  require_rank(w, 2, "vecmat");
  require_rank(x, 1, "vecmat");
  const std::size_t m = w.dim(0), n = w.dim(1);
  if (x.dim(0) != m) {
    throw DimensionError("vecmat: " + shape_string(x.shape()) + " x " + shape_string(w.shape()));
  }
  const double* W = w.value().data();
  const double* X = x.value().data();
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double xi = X[i];
    if (xi == 0.0) continue;
    const double* row = W + i * n;
    for (std::size_t j = 0; j < n; ++j) out[j] += xi * row[j];
  }
  auto iw = w.id(), ix = x.id();
  return w.tape()->push({n}, std::move(out), {x, w}, [=](Tape& t, std::uint32_t self) {
    const double* g = t.grad_of(self);
    if (t.requires_grad_of(iw)) {
      double* gw = t.grad_of(iw);
      const double* Xv = t.value_of(ix);
      for (std::size_t i = 0; i < m; ++i) {
        double xi = Xv[i];
        double* row = gw + i * n;
        for (std::size_t j = 0; j < n; ++j) row[j] += xi * g[j];
      }
    }
    if (t.requires_grad_of(ix)) {
      double* gx = t.grad_of(ix);
      const double* Wv = t.value_of(iw);
      for (std::size_t i = 0; i < m; ++i) {
        const double* row = Wv + i * n;
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += row[j] * g[j];
        gx[i] += s;
      }
    }
  });
}

Var elementwise(Var a, Var b, ElementwiseKind kind) {
  require_same_tape(a, b);
  require_same_shape(a, b, "elementwise");
  auto x = a.value();
  auto y = b.value();
  std::vector<double> out(x.size());
  switch (kind) {
    case ElementwiseKind::mul:
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
      break;
    case ElementwiseKind::add:
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
      break;
    case ElementwiseKind::sub:
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
      break;
  }
  auto ia = a.id(), ib = b.id();
  return a.tape()->push(a.shape(), std::move(out), {a, b}, [=](Tape& t, std::uint32_t self) {
    const double* g = t.grad_of(self);
    const std::size_t n = t.size_of(self);
    if (t.requires_grad_of(ia)) {
      double* ga = t.grad_of(ia);
      if (kind == ElementwiseKind::mul) {
        const double* yv = t.value_of(ib);
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * yv[i];
      } else {
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
      }
    }
    if (t.requires_grad_of(ib)) {
      double* gb = t.grad_of(ib);
      if (kind == ElementwiseKind::mul) {
        const double* xv = t.value_of(ia);
        for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * xv[i];
      } else if (kind == ElementwiseKind::add) {
        for (std::size_t i = 0; i < n; ++i) gb[i] += g[i];
      } else {
        for (std::size_t i = 0; i < n; ++i) gb[i] -= g[i];
      }
    }
  });
}

Var scale(Var a, double factor) {
  return unary(a, [factor](double x) { return factor * x; },
               [factor](double, double) { return factor; });
}

Var add_scalar(Var a, double offset) {
  return unary(a, [offset](double x) { return x + offset; }, [](double, double) { return 1.0; });
}

Var sigmoid(Var a) {
  return unary(a, sigmoid_value, [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var relu(Var a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var log(Var a) {
  for (double v : a.value()) {
    if (!(v > 0.0)) throw NumericalError("log of a non-positive value");
  }
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value()) s += v;
  auto ia = a.id();
  return a.tape()->push({1}, {s}, {a}, [ia](Tape& t, std::uint32_t self) {
    if (!t.requires_grad_of(ia)) return;
    double g = t.grad_of(self)[0];
    double* ga = t.grad_of(ia);
    for (std::size_t i = 0, n = t.size_of(ia); i < n; ++i) ga[i] += g;
  });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Var dot(Var a, Var b) { return sum(mul(a, b)); }

Var sum_all(const std::vector<Var>& scalars) {
  if (scalars.empty()) throw ContractError("sum_all of an empty list");
  double s = 0.0;
  for (const auto& v : scalars) {
    require_same_tape(scalars.front(), v);
    s += v.item();
  }
  std::vector<std::uint32_t> ids;
  ids.reserve(scalars.size());
  for (const auto& v : scalars) ids.push_back(v.id());
  return scalars.front().tape()->push({1}, {s}, scalars, [ids](Tape& t, std::uint32_t self) {
    double g = t.grad_of(self)[0];
    for (auto id : ids) {
      if (t.requires_grad_of(id)) t.grad_of(id)[0] += g;
    }
  });
}

Var concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat of nothing");
  std::vector<double> out;
  std::vector<std::uint32_t> ids;
  for (const auto& p : parts) {
    require_same_tape(parts.front(), p);
    require_rank(p, 1, "concat");
    auto v = p.value();
    out.insert(out.end(), v.begin(), v.end());
    ids.push_back(p.id());
  }
  std::size_t n = out.size();
  return parts.front().tape()->push({n}, std::move(out), parts, [ids](Tape& t, std::uint32_t self) {
    const double* g = t.grad_of(self);
    std::size_t offset = 0;
    for (auto id : ids) {
      std::size_t len = t.size_of(id);
      if (t.requires_grad_of(id)) {
        double* gp = t.grad_of(id);
        for (std::size_t i = 0; i < len; ++i) gp[i] += g[offset + i];
      }
      offset += len;
    }
  });
}

Var slice(Var a, std::size_t begin, std::size_t length) {
  require_rank(a, 1, "slice");
  if (length == 0 || begin + length > a.size()) {
    throw DimensionError("slice [" + std::to_string(begin) + ", +" + std::to_string(length) +
                         ") out of range for " + shape_string(a.shape()));
  }
  auto v = a.value();
  std::vector<double> out(v.begin() + begin, v.begin() + begin + length);
  auto ia = a.id();
  return a.tape()->push({length}, std::move(out), {a}, [=](Tape& t, std::uint32_t self) {
    if (!t.requires_grad_of(ia)) return;
    const double* g = t.grad_of(self);
    double* ga = t.grad_of(ia) + begin;
    for (std::size_t i = 0; i < length; ++i) ga[i] += g[i];
  });
}

Var pick(Var a, std::size_t index) {
  if (index >= a.size()) throw DimensionError("pick index out of range");
  auto ia = a.id();
  return a.tape()->push({1}, {a.value()[index]}, {a}, [=](Tape& t, std::uint32_t self) {
    if (t.requires_grad_of(ia)) t.grad_of(ia)[index] += t.grad_of(self)[0];
  });
}

Var reshape(Var a, Shape shape) {
  if (shape_size(shape) != a.size()) {
    throw DimensionError("reshape " + shape_string(a.shape()) + " -> " + shape_string(shape));
  }
  auto v = a.value();
  auto ia = a.id();
  return a.tape()->push(std::move(shape), std::vector<double>(v.begin(), v.end()), {a},
                        [ia](Tape& t, std::uint32_t self) {
                          if (!t.requires_grad_of(ia)) return;
                          const double* g = t.grad_of(self);
                          double* ga = t.grad_of(ia);
                          for (std::size_t i = 0, n = t.size_of(self); i < n; ++i) ga[i] += g[i];
                        });
}

Var stack_columns(const std::vector<Var>& parts, std::size_t columns) {
  if (parts.empty() || parts.size() > columns) throw DimensionError("stack_columns: bad column count");
  const std::size_t d = parts.front().size();
  std::vector<double> out(d * columns, 0.0);
  std::vector<std::uint32_t> ids;
  for (std::size_t j = 0; j < parts.size(); ++j) {
    require_same_tape(parts.front(), parts[j]);
    require_rank(parts[j], 1, "stack_columns");
    if (parts[j].size() != d) throw DimensionError("stack_columns: ragged columns");
    auto v = parts[j].value();
    for (std::size_t r = 0; r < d; ++r) out[r * columns + j] = v[r];
    ids.push_back(parts[j].id());
  }
  return parts.front().tape()->push({d, columns}, std::move(out), parts,
                                    [ids, d, columns](Tape& t, std::uint32_t self) {
                                      const double* g = t.grad_of(self);
                                      for (std::size_t j = 0; j < ids.size(); ++j) {
                                        if (!t.requires_grad_of(ids[j])) continue;
                                        double* gp = t.grad_of(ids[j]);
                                        for (std::size_t r = 0; r < d; ++r) gp[r] += g[r * columns + j];
                                      }
                                    });
}

Var stop_gradient(Var a) { return a.tape()->value(a.to_tensor(), false); }

Var softmax(Var logits) {
  require_rank(logits, 1, "softmax");
  auto z = logits.value();
  double mx = *std::max_element(z.begin(), z.end());
  std::vector<double> out(z.size());
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    out[i] = std::exp(z[i] - mx);
    s += out[i];
  }
  for (auto& v : out) v /= s;
  auto ia = logits.id();
  return logits.tape()->push(logits.shape(), std::move(out), {logits}, [ia](Tape& t, std::uint32_t self) {
    if (!t.requires_grad_of(ia)) return;
    const double* g = t.grad_of(self);
    const double* y = t.value_of(self);
    const std::size_t n = t.size_of(self);
    double gy = 0.0;
    for (std::size_t i = 0; i < n; ++i) gy += g[i] * y[i];
    double* ga = t.grad_of(ia);
    for (std::size_t i = 0; i < n; ++i) ga[i] += y[i] * (g[i] - gy);
  });
}

Var log_softmax(Var logits) {
  require_rank(logits, 1, "log_softmax");
  auto z = logits.value();
  double mx = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - mx);
  double lse = mx + std::log(s);
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] - lse;
  auto ia = logits.id();
  return logits.tape()->push(logits.shape(), std::move(out), {logits}, [ia](Tape& t, std::uint32_t self) {
    if (!t.requires_grad_of(ia)) return;
    const double* g = t.grad_of(self);
    const double* y = t.value_of(self);
    const std::size_t n = t.size_of(self);
    double gs = 0.0;
    for (std::size_t i = 0; i < n; ++i) gs += g[i];
    double* ga = t.grad_of(ia);
    for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] - std::exp(y[i]) * gs;
  });
}

Var bce_with_logits(Var logit, double target) {
  if (logit.size() != 1) throw DimensionError("bce_with_logits needs a scalar logit");
  if (target < 0.0 || target > 1.0) throw ContractError("bce target outside [0,1]");
  double z = logit.item();
  // max(z,0) - z*y + log(1 + exp(-|z|))
  double loss = std::max(z, 0.0) - z * target + std::log1p(std::exp(-std::abs(z)));
  auto ia = logit.id();
  return logit.tape()->push({1}, {loss}, {logit}, [=](Tape& t, std::uint32_t self) {
    if (!t.requires_grad_of(ia)) return;
    double zz = t.value_of(ia)[0];
    t.grad_of(ia)[0] += t.grad_of(self)[0] * (sigmoid_value(zz) - target);
  });
}

Var binary_entropy(Var logit) {
  if (logit.size() != 1) throw DimensionError("binary_entropy needs a scalar logit");
  auto softplus = [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); };
  double z = logit.item();
  double p = sigmoid_value(z);
  // H = p softplus(-z) + (1-p) softplus(z)
  double h = p * softplus(-z) + (1.0 - p) * softplus(z);
  auto ia = logit.id();
  return logit.tape()->push({1}, {h}, {logit}, [ia](Tape& t, std::uint32_t self) {
    if (!t.requires_grad_of(ia)) return;
    double zz = t.value_of(ia)[0];
    double pp = sigmoid_value(zz);
    t.grad_of(ia)[0] += t.grad_of(self)[0] * (-zz * pp * (1.0 - pp));
  });
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("cosine_similarity: length mismatch");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  double na = std::sqrt(aa), nb = std::sqrt(bb);
  if (na < kCosineZeroNorm || nb < kCosineZeroNorm) return 0.0;
  return std::clamp(ab / (na * nb), -1.0, 1.0);
}

Var cosine_similarity(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape(a, b, "cosine_similarity");
  auto x = a.value();
  auto y = b.value();
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    ab += x[i] * y[i];
    aa += x[i] * x[i];
    bb += y[i] * y[i];
  }
  double na = std::sqrt(aa), nb = std::sqrt(bb);
  if (na < kCosineZeroNorm || nb < kCosineZeroNorm) return a.tape()->scalar(0.0);
  double cos = ab / (na * nb);
  auto ia = a.id(), ib = b.id();
  return a.tape()->push({1}, {cos}, {a, b}, [=](Tape& t, std::uint32_t self) {
    double g = t.grad_of(self)[0];
    const double* xv = t.value_of(ia);
    const double* yv = t.value_of(ib);
    const std::size_t n = t.size_of(ia);
    // d cos / dx = y/(|x||y|) - cos * x/|x|^2
    if (t.requires_grad_of(ia)) {
      double* ga = t.grad_of(ia);
      for (std::size_t i = 0; i < n; ++i) ga[i] += g * (yv[i] / (na * nb) - cos * xv[i] / (na * na));
    }
    if (t.requires_grad_of(ib)) {
      double* gb = t.grad_of(ib);
      for (std::size_t i = 0; i < n; ++i) gb[i] += g * (xv[i] / (na * nb) - cos * yv[i] / (nb * nb));
    }
  });
}

Var conv1d(Var input, Var kernel, Var bias, std::size_t stride) {
  require_same_tape(input, kernel);
  require_same_tape(input, bias);
  require_rank(input, 2, "conv1d input");
  require_rank(kernel, 3, "conv1d kernel");
  require_rank(bias, 1, "conv1d bias");
  if (stride == 0) throw ContractError("conv1d stride must be positive");
  const std::size_t cin = input.dim(0), len = input.dim(1);
  const std::size_t cout = kernel.dim(0), width = kernel.dim(2);
  if (kernel.dim(1) != cin) {
    throw DimensionError("conv1d: kernel " + shape_string(kernel.shape()) + " vs input " +
                         shape_string(input.shape()));
  }
  if (bias.dim(0) != cout) throw DimensionError("conv1d: bias length must equal output channels");
  if (len < width) {
    throw DimensionError("conv1d: input length " + std::to_string(len) + " shorter than kernel width " +
                         std::to_string(width));
  }
  const std::size_t out_len = (len - width) / stride + 1;
  const std::size_t patch = cin * width;
  const double* X = input.value().data();
  const double* W = kernel.value().data();
  const double* B = bias.value().data();

  auto gather = [=](const double* xs, std::size_t j, double* dst) {
    for (std::size_t c = 0; c < cin; ++c)
      for (std::size_t k = 0; k < width; ++k) dst[c * width + k] = xs[c * len + j * stride + k];
  };

  std::vector<double> out(cout * out_len);
  std::vector<double> buf(patch);
  for (std::size_t j = 0; j < out_len; ++j) {
    gather(X, j, buf.data());
    for (std::size_t o = 0; o < cout; ++o) {
      const double* w = W + o * patch;
      double s = B[o];
      for (std::size_t q = 0; q < patch; ++q) s += w[q] * buf[q];
      out[o * out_len + j] = s;
    }
  }
  auto ix = input.id(), iw = kernel.id(), ib = bias.id();
  return input.tape()->push({cout, out_len}, std::move(out), {input, kernel, bias},
                            [=](Tape& t, std::uint32_t self) {
    const double* g = t.grad_of(self);
    const double* Xv = t.value_of(ix);
    const double* Wv = t.value_of(iw);
    const bool want_x = t.requires_grad_of(ix);
    const bool want_w = t.requires_grad_of(iw);
    if (t.requires_grad_of(ib)) {
      double* gb = t.grad_of(ib);
      for (std::size_t o = 0; o < cout; ++o)
        for (std::size_t j = 0; j < out_len; ++j) gb[o] += g[o * out_len + j];
    }
    std::vector<double> p(patch), dp(patch);
    for (std::size_t j = 0; j < out_len; ++j) {
      if (want_w) gather(Xv, j, p.data());
      std::fill(dp.begin(), dp.end(), 0.0);
      for (std::size_t o = 0; o < cout; ++o) {
        double go = g[o * out_len + j];
        if (go == 0.0) continue;
        if (want_w) {
          double* gw = t.grad_of(iw) + o * patch;
          for (std::size_t q = 0; q < patch; ++q) gw[q] += go * p[q];
        }
        if (want_x) {
          const double* w = Wv + o * patch;
          for (std::size_t q = 0; q < patch; ++q) dp[q] += go * w[q];
        }
      }
      if (want_x) {
        double* gx = t.grad_of(ix);
        for (std::size_t c = 0; c < cin; ++c)
          for (std::size_t k = 0; k < width; ++k) gx[c * len + j * stride + k] += dp[c * width + k];
      }
    }
  });
}

Var embed_columns(Var table, std::span<const int> ids, std::size_t width, int zero_id) {
  require_rank(table, 2, "embed_columns");
  if (ids.size() > width) throw DimensionError("embed_columns: more ids than columns");
  const std::size_t vocab = table.dim(0), d = table.dim(1);
  const double* T = table.value().data();
  std::vector<double> out(d * width, 0.0);
  std::vector<int> kept(ids.begin(), ids.end());
  for (std::size_t j = 0; j < kept.size(); ++j) {
    int id = kept[j];
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) throw DimensionError("embedding id out of range");
    if (id == zero_id) continue;
    for (std::size_t r = 0; r < d; ++r) out[r * width + j] = T[id * d + r];
  }
  auto it = table.id();
  return table.tape()->push({d, width}, std::move(out), {table}, [=](Tape& t, std::uint32_t self) {
    if (!t.requires_grad_of(it)) return;
    const double* g = t.grad_of(self);
    double* gt = t.grad_of(it);
    for (std::size_t j = 0; j < kept.size(); ++j) {
      if (kept[j] == zero_id) continue;
      double* row = gt + static_cast<std::size_t>(kept[j]) * d;
      for (std::size_t r = 0; r < d; ++r) row[r] += g[r * width + j];
    }
  });
}

RecurrentState lstm_cell(Var x, const RecurrentState& state, Var weight, Var bias) {
  require_same_tape(x, weight);
  require_same_tape(x, state.hidden);
  require_same_tape(x, state.cell);
  require_same_tape(x, bias);
  require_rank(x, 1, "lstm_cell input");
  require_rank(weight, 2, "lstm_cell weight");
  const std::size_t d = x.size(), h = state.hidden.size();
  if (state.cell.size() != h || weight.dim(0) != 4 * h || weight.dim(1) != d + h || bias.size() != 4 * h) {
    throw DimensionError("lstm_cell: weight " + shape_string(weight.shape()) + " inconsistent with input " +
                         std::to_string(d) + " and hidden " + std::to_string(h));
  }
  struct Cache {
    std::vector<double> in, gates, tanh_c;
  };
  auto cache = std::make_shared<Cache>();
  cache->in.resize(d + h);
  auto xv = x.value();
  auto hv = state.hidden.value();
  auto cv = state.cell.value();
  std::copy(xv.begin(), xv.end(), cache->in.begin());
  std::copy(hv.begin(), hv.end(), cache->in.begin() + d);

  const double* W = weight.value().data();
  const double* B = bias.value().data();
  const std::size_t n = d + h;
  cache->gates.resize(4 * h);
  for (std::size_t r = 0; r < 4 * h; ++r) {
    const double* row = W + r * n;
    double s = B[r];
    for (std::size_t q = 0; q < n; ++q) s += row[q] * cache->in[q];
    cache->gates[r] = (r >= 2 * h && r < 3 * h) ? std::tanh(s) : sigmoid_value(s);
  }
  std::vector<double> out(2 * h);
  cache->tanh_c.resize(h);
  for (std::size_t k = 0; k < h; ++k) {
    double i = cache->gates[k], f = cache->gates[h + k], g = cache->gates[2 * h + k], o = cache->gates[3 * h + k];
    double c = f * cv[k] + i * g;
    cache->tanh_c[k] = std::tanh(c);
    out[k] = o * cache->tanh_c[k];
    out[h + k] = c;
  }
  auto ix = x.id(), ih = state.hidden.id(), ic = state.cell.id(), iw = weight.id(), ib = bias.id();
  Var joint = x.tape()->push({2 * h}, std::move(out), {x, state.hidden, state.cell, weight, bias},
                             [=](Tape& t, std::uint32_t self) {
    const double* g = t.grad_of(self);
    const double* cprev = t.value_of(ic);
    const auto& gates = cache->gates;
    std::vector<double> dz(4 * h);
    std::vector<double> dcprev(h);
    for (std::size_t k = 0; k < h; ++k) {
      double i = gates[k], f = gates[h + k], gg = gates[2 * h + k], o = gates[3 * h + k];
      double tc = cache->tanh_c[k];
      double dh = g[k];
      double dc = g[h + k] + dh * o * (1.0 - tc * tc);
      double di = dc * gg, df = dc * cprev[k], dg = dc * i, d_o = dh * tc;
      dcprev[k] = dc * f;
      dz[k] = di * i * (1.0 - i);
      dz[h + k] = df * f * (1.0 - f);
      dz[2 * h + k] = dg * (1.0 - gg * gg);
      dz[3 * h + k] = d_o * o * (1.0 - o);
    }
    if (t.requires_grad_of(ic)) {
      double* gc = t.grad_of(ic);
      for (std::size_t k = 0; k < h; ++k) gc[k] += dcprev[k];
    }
    if (t.requires_grad_of(ib)) {
      double* gb = t.grad_of(ib);
      for (std::size_t r = 0; r < 4 * h; ++r) gb[r] += dz[r];
    }
    if (t.requires_grad_of(iw)) {
      double* gw = t.grad_of(iw);
      for (std::size_t r = 0; r < 4 * h; ++r) {
        double dr = dz[r];
        if (dr == 0.0) continue;
        double* row = gw + r * n;
        for (std::size_t q = 0; q < n; ++q) row[q] += dr * cache->in[q];
      }
    }
    const bool want_x = t.requires_grad_of(ix), want_h = t.requires_grad_of(ih);
    if (want_x || want_h) {
      const double* Wv = t.value_of(iw);
      std::vector<double> din(n, 0.0);
      for (std::size_t r = 0; r < 4 * h; ++r) {
        double dr = dz[r];
        if (dr == 0.0) continue;
        const double* row = Wv + r * n;
        for (std::size_t q = 0; q < n; ++q) din[q] += dr * row[q];
      }
      if (want_x) {
        double* gx = t.grad_of(ix);
        for (std::size_t q = 0; q < d; ++q) gx[q] += din[q];
      }
      if (want_h) {
        double* gh = t.grad_of(ih);
        for (std::size_t q = 0; q < h; ++q) gh[q] += din[d + q];
      }
    }
  });
  return {slice(joint, 0, h), slice(joint, h, h)};
}

}  // namespace gmg
