#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "gmg/tape.hpp"

namespace gmg {

enum class ElementwiseKind { mul, add, sub };

// Linear algebra ------------------------------------------------------------

/// [m x k] * [k x n] -> [m x n].
Var matmul(Var a, Var b);
/// [m x n] * [n] -> [m].
Var matvec(Var w, Var x);
/// [m] * [m x n] -> [n], i.e. x^T W.
Var vecmat(Var x, Var w);

// Pointwise -------------------------------------------------------------------

Var elementwise(Var a, Var b, ElementwiseKind kind);
inline Var add(Var a, Var b) { return elementwise(a, b, ElementwiseKind::add); }
inline Var sub(Var a, Var b) { return elementwise(a, b, ElementwiseKind::sub); }
inline Var mul(Var a, Var b) { return elementwise(a, b, ElementwiseKind::mul); }
Var scale(Var a, double factor);
Var add_scalar(Var a, double offset);
Var sigmoid(Var a);
Var tanh(Var a);
Var relu(Var a);
Var log(Var a);

// Reductions and reshaping --------------------------------------------------

Var sum(Var a);
Var mean(Var a);
Var dot(Var a, Var b);
/// Sum of a list of scalars.
Var sum_all(const std::vector<Var>& scalars);
Var concat(const std::vector<Var>& parts);
Var slice(Var a, std::size_t begin, std::size_t length);
Var pick(Var a, std::size_t index);
Var reshape(Var a, Shape shape);
/// Stacks rank-1 vectors of length d as the columns of a [d x columns] matrix;
/// columns beyond parts.size() are zero.
Var stack_columns(const std::vector<Var>& parts, std::size_t columns);
/// Value copy with no gradient path.
Var stop_gradient(Var a);

// Probability -----------------------------------------------------------------

/// Max-subtracted softmax over a rank-1 vector.
Var softmax(Var logits);
Var log_softmax(Var logits);
/// Numerically stable binary cross-entropy on a raw logit, target in [0,1].
Var bce_with_logits(Var logit, double target);
/// Entropy (nats) of the Bernoulli distribution with p = sigmoid(logit).
Var binary_entropy(Var logit);

// Similarity --------------------------------------------------------------------

/// Norm below which a vector counts as zero for cosine_similarity.
inline constexpr double kCosineZeroNorm = 1e-12;

/// dot(a,b)/(|a||b|). Returns exactly 0 (with zero gradient) when either norm
/// is below kCosineZeroNorm.
Var cosine_similarity(Var a, Var b);
/// Plain-double version of the same rule.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

// Sequence layers ----------------------------------------------------------------

/// Valid cross-correlation. input [C_in x L], kernel [C_out x C_in x K],
/// bias [C_out] -> [C_out x ((L-K)/stride + 1)].
Var conv1d(Var input, Var kernel, Var bias, std::size_t stride);

/// Gathers rows of `table` [V x d] as columns of a [d x width] matrix. Ids equal
/// to `zero_id` (padding) and positions past ids.size() produce zero columns.
Var embed_columns(Var table, std::span<const int> ids, std::size_t width, int zero_id);

struct RecurrentState {
  Var hidden;
  Var cell;
};

/// Standard LSTM cell. weight [4H x (D+H)], bias [4H]; gate blocks are ordered
/// input, forget, candidate, output.
RecurrentState lstm_cell(Var x, const RecurrentState& state, Var weight, Var bias);

}  // namespace gmg
