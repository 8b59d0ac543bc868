#pragma once

#include <cstddef>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "gmg/encoder.hpp"

namespace gmg {

/// LSTM that reads sentence features and predicts the feature c steps ahead.
/// The state is initialized as tanh(W s_0 + b) with a zero cell; in style
/// mode the input is the feature concatenated with a one-hot label.
class Guider {
 public:
  Guider(const ModelDims& dims, std::size_t num_labels, std::mt19937_64& rng);

  Linear init;
  LstmLayer cell;
  Linear head;

  std::size_t num_labels() const { return num_labels_; }
  std::size_t feature_dim() const { return head.out_features(); }

  RecurrentState initial_state(Tape& tape, Var s0, bool trainable);

  struct Step {
    Var prediction;
    RecurrentState state;
  };
  /// One guider step on feature f. A label is required in style mode and
  /// rejected otherwise (ContractError).
  Step step(Tape& tape, const RecurrentState& state, Var f, std::optional<int> label, bool trainable);

  /// Predictions pred_0..pred_{n-1}, where pred_k is emitted after reading f_k.
  std::vector<Var> unroll(Tape& tape, Var s0, const std::vector<Var>& features, std::optional<int> label,
                          bool trainable);
  /// Gradient-free replay of unroll().
  std::vector<Tensor> replay(const Tensor& s0, const std::vector<Tensor>& features, std::optional<int> label);

  void collect(ParameterList& out, const std::string& prefix = "guider");

 private:
  std::size_t num_labels_;
};

/// Negative mean over k in [0, n-1-c] of
///   cos(f_{k+c}, pred_k) + cos(f_{k+c} - f_k, pred_k - f_k).
/// Requires more than c features (ContractError otherwise).
Var guider_objective(const std::vector<Var>& features, const std::vector<Var>& predictions, std::size_t c);

/// Runs the guider from s0 over the features and returns guider_objective().
Var guider_loss(Tape& tape, Guider& guider, Var s0, const std::vector<Var>& features, std::size_t c,
                std::optional<int> label, bool trainable);

/// The two cosine terms of the objective averaged separately over valid k:
/// {feature match, direction match}. Pure double arithmetic.
std::pair<double, double> guider_cosines(const std::vector<Tensor>& features, const std::vector<Tensor>& predictions,
                                         std::size_t c);

/// Prediction made at time t-c for time t, given features f_0..f_t (at least
/// c+1 of them) and the initial feature.
Tensor predict_ahead(Guider& guider, const Tensor& s0, const std::vector<Tensor>& prefix_features, std::size_t c,
                     std::optional<int> label = std::nullopt);

}  // namespace gmg
