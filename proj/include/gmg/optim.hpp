#pragma once

#include <cstdint>
#include <vector>

#include "gmg/tensor.hpp"

namespace gmg {

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam over a fixed parameter group. Moments are shaped like their
/// parameters and persist across steps; the group order must not change.
class Adam {
 public:
  Adam() = default;
  Adam(ParameterList params, AdamConfig config);

  /// One update from the current gradients, then zeroes them.
  void step();
  void zero_grad();

  const ParameterList& parameters() const { return params_; }
  const AdamConfig& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }
  std::uint64_t steps() const { return steps_; }

  // Exposed for checkpointing.
  std::vector<Tensor>& first_moments() { return m_; }
  std::vector<Tensor>& second_moments() { return v_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }
  void set_steps(std::uint64_t steps) { steps_ = steps; }

 private:
  ParameterList params_;
  AdamConfig config_;
  std::vector<Tensor> m_, v_;
  std::uint64_t steps_ = 0;
};

}  // namespace gmg
