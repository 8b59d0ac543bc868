#include "gmg/rewards.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "gmg/errors.hpp"
#include "gmg/ops.hpp"

namespace gmg {

std::string to_string(Discount d) { return d == Discount::relative ? "relative" : "absolute"; }

std::string to_string(RewardMode m) {
  switch (m) {
    case RewardMode::both:
      return "both";
    case RewardMode::final_only:
      return "final_only";
    case RewardMode::stepwise_only:
      return "stepwise_only";
  }
  return "both";
}

Discount parse_discount(const std::string& s) {
  if (s == "relative") return Discount::relative;
  if (s == "absolute") return Discount::absolute;
  throw ContractError("unknown discount convention: " + s);
}

RewardMode parse_reward_mode(const std::string& s) {
  if (s == "both") return RewardMode::both;
  if (s == "final_only") return RewardMode::final_only;
  if (s == "stepwise_only") return RewardMode::stepwise_only;
  throw ContractError("unknown reward mode: " + s);
}

nlohmann::json RewardTrace::to_json() const {
  return {{"r_g", r_g}, {"R", R}, {"Q", Q}, {"r_f", r_f}, {"gamma", gamma}, {"c", c}};
}

void RewardTrace::write_csv(std::ostream& out) const {
  out << "t,r_g,R,Q\n";
  char buf[128];
  for (std::size_t i = 0; i < r_g.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g\n", i + 1, r_g[i], i < R.size() ? R[i] : 0.0,
                  i < Q.size() ? Q[i] : 0.0);
    out << buf;
  }
}

std::vector<double> feature_matching_rewards(const std::vector<Tensor>& features,
                                             const std::vector<Tensor>& predictions, std::size_t c) {
  if (c < 1) throw ContractError("lookahead c must be at least 1");
  if (features.size() < 2) throw ContractError("reward computation needs features f_0..f_T with T >= 1");
  const std::size_t T = features.size() - 1;
  if (predictions.size() < T) throw ContractError("reward computation needs predictions pred_0..pred_{T-1}");

  std::vector<double> rewards(T);
  std::vector<double> da, db;
  for (std::size_t t = 1; t <= T; ++t) {
    const auto ft = features[t].values();
    const auto fhat = predictions[t > c ? t - c : 0].values();
    const std::size_t m = std::min(c, t);
    const double direct = cosine_similarity(ft, fhat);
    double total = 0.0;
    for (std::size_t i = 1; i <= m; ++i) {
      const auto prev = features[t - i].values();
      da.resize(ft.size());
      db.resize(ft.size());
      for (std::size_t k = 0; k < ft.size(); ++k) {
        da[k] = ft[k] - prev[k];
        db[k] = fhat[k] - prev[k];
      }
      total += direct + cosine_similarity(da, db);
    }
    const double r = total / (2.0 * static_cast<double>(m));
    if (!(std::abs(r) <= 1.0 + 1e-12)) throw NumericalError("feature-matching reward outside [-1, 1]");
    rewards[t - 1] = r;
  }
  return rewards;
}

std::vector<double> discounted_cumulative(std::span<const double> r_g, double gamma, Discount convention) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ContractError("discount gamma must lie in [0,1)");
  std::vector<double> R(r_g.size());
  double acc = 0.0;
  for (std::size_t k = r_g.size(); k-- > 0;) {
    if (convention == Discount::relative) {
      acc = r_g[k] + gamma * acc;
    } else {
      acc = std::pow(gamma, static_cast<double>(k + 1)) * r_g[k] + acc;
    }
    R[k] = acc;
  }
  return R;
}

std::vector<double> q_values(std::span<const double> R, double r_f) {
  std::vector<double> Q(R.size());
  for (std::size_t i = 0; i < R.size(); ++i) Q[i] = R[i] * r_f;
  return Q;
}

std::vector<double> compose_q(std::span<const double> R, double r_f, RewardMode mode) {
  switch (mode) {
    case RewardMode::final_only:
      return std::vector<double>(R.size(), r_f);
    case RewardMode::stepwise_only:
      return {R.begin(), R.end()};
    case RewardMode::both:
      break;
  }
  return q_values(R, r_f);
}

std::vector<std::vector<double>> baseline_advantage(const std::vector<std::vector<double>>& Q, Baseline& baseline) {
  if (!baseline.enabled) return Q;
  std::vector<std::vector<double>> adv = Q;
  double total = 0.0;
  std::size_t count = 0;
  for (auto& row : adv) {
    for (double& a : row) {
      total += a;
      a -= baseline.value;
      ++count;
    }
  }
  if (count > 0) {
    const double mean = total / static_cast<double>(count);
    baseline.value = baseline.momentum * baseline.value + (1.0 - baseline.momentum) * mean;
  }
  return adv;
}

}  // namespace gmg
