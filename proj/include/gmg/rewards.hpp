#pragma once

#include <cstddef>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "gmg/tensor.hpp"

namespace gmg {

enum class Discount { relative, absolute };
enum class RewardMode { both, final_only, stepwise_only };

std::string to_string(Discount d);
std::string to_string(RewardMode m);
Discount parse_discount(const std::string& s);
RewardMode parse_reward_mode(const std::string& s);

/// Per-step reward bookkeeping for one generated sentence. Index i holds
/// step t = i + 1.
struct RewardTrace {
  std::vector<double> r_g;
  std::vector<double> R;
  std::vector<double> Q;
  double r_f = 1.0;
  double gamma = 0.25;
  std::size_t c = 4;

  nlohmann::json to_json() const;
  /// CSV with header "t,r_g,R,Q", one row per step.
  void write_csv(std::ostream& out) const;
};

/// Feature-matching rewards r^g_1..r^g_T from features f_0..f_T and guider
/// predictions pred_0..pred_{T-1} (pred_k was emitted after reading f_k).
///
///   r^g_t = 1/(2m) sum_{i=1..m} [cos(f_t, fhat_t) + cos(f_t - f_{t-i}, fhat_t - f_{t-i})]
///
/// with fhat_t = pred_{max(t-c, 0)} and m = min(c, t), so early steps use the
/// history that exists.
std::vector<double> feature_matching_rewards(const std::vector<Tensor>& features,
                                             const std::vector<Tensor>& predictions, std::size_t c);

/// R[t] = sum_{i>=t} gamma^{i-t} r_g[i] (relative) or gamma^i r_g[i] with
/// 1-based i (absolute), by backward recursion. gamma must lie in [0,1).
std::vector<double> discounted_cumulative(std::span<const double> r_g, double gamma,
                                          Discount convention = Discount::relative);

/// Q[t] = R[t] * r_f.
std::vector<double> q_values(std::span<const double> R, double r_f);

/// Q under an ablation mode: both -> R * r_f, final_only -> r_f at every
/// step, stepwise_only -> R.
std::vector<double> compose_q(std::span<const double> R, double r_f, RewardMode mode);

/// Exponential moving average of batch-mean Q used as a baseline.
struct Baseline {
  double value = 0.0;
  double momentum = 0.99;
  bool enabled = true;
};

/// advantage = Q - baseline (baseline read before the update), then the
/// baseline moves toward the batch mean of all Q entries. With the baseline
/// disabled the advantages are Q and nothing is updated.
std::vector<std::vector<double>> baseline_advantage(const std::vector<std::vector<double>>& Q, Baseline& baseline);

}  // namespace gmg
