#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "gmg/encoder.hpp"
#include "gmg/rewards.hpp"

namespace gmg {

struct StyleConfig {
  double recon_weight = 1.0;
  double classifier_weight = 0.1;
  double entropy_weight = 0.1;
  double temperature = 0.1;
  std::size_t epochs = 18;
  /// Leading epochs trained on reconstruction only.
  std::size_t warmup_epochs = 12;
  std::size_t classifier_epochs = 2;
};

/// Training hyperparameters.
struct TrainConfig {
  std::uint64_t seed = 1;
  std::string profile = "paper";
  std::size_t max_len = 25;
  /// Explicit widths; when absent they follow `profile`.
  std::optional<ModelDims> dims;

  double lr_generator = 2e-4;
  double lr_guider = 2e-4;
  double lr_discriminator = 1e-3;
  std::size_t c = 4;
  double gamma = 0.25;
  std::size_t batch_size = 32;
  std::size_t mle_epochs = 10;
  std::size_t rl_epochs = 10;
  /// Optimizer steps per epoch; 0 means one pass over the training set.
  std::size_t steps_per_epoch = 0;
  std::size_t g_steps = 1;
  std::size_t d_steps = 1;
  std::size_t pg_batch_size = 16;
  std::size_t disc_pretrain_steps = 50;
  /// Fraction of the RL epochs over which lambda ramps from 0 to 1.
  double ramp_fraction = 0.5;
  /// Fixed MLE/RL mixing weight instead of the ramp.
  std::optional<double> lambda_pinned;
  RewardMode reward_mode = RewardMode::both;
  Discount discount = Discount::relative;
  bool baseline = true;
  double baseline_momentum = 0.99;
  /// Probability that a training sentence starts from sampling noise rather
  /// than its own encoding, so that noise-initialized sampling is trained.
  double init_noise_prob = 0.5;
  std::size_t eval_samples = 200;
  std::size_t self_bleu_samples = 200;
  StyleConfig style;

  ModelDims model_dims() const;
};

/// Everything a CLI run needs: hyperparameters, data sources and outputs.
struct RunConfig : TrainConfig {
  /// Built-in grammar name ("desk", "style", "deterministic") or a grammar
  /// JSON path. Used to sample the corpus when `corpus` is empty and for
  /// validity scoring.
  std::string grammar = "desk";
  std::string corpus;
  std::string valid_corpus;
  std::string test_corpus;
  std::size_t train_size = 2000;
  std::size_t valid_size = 200;
  std::size_t test_size = 500;
  std::string output_dir = "run";
  /// Checkpoint to resume from (required for the adversarial stage).
  std::string checkpoint;

  nlohmann::json to_json() const;
  /// Parses and validates; unknown keys and out-of-range values throw
  /// ConfigError naming the offending field.
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);
  void validate() const;
};

}  // namespace gmg
