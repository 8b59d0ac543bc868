#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "gmg/config.hpp"
#include "gmg/discriminator.hpp"
#include "gmg/generator.hpp"
#include "gmg/metrics.hpp"
#include "gmg/optim.hpp"
#include "gmg/rewards.hpp"

namespace gmg {

/// Independent, reproducible random stream `stream` derived from `seed`.
std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream);

/// Training data plus the grammar it came from, when there is one.
struct Dataset {
  Vocabulary vocab;
  std::optional<GrammarSpec> grammar;
  std::vector<Sentence> train, valid, test;
  /// Style labels parallel to train/valid/test (style runs only).
  std::vector<int> train_labels, valid_labels, test_labels;

  bool labeled() const { return !train_labels.empty(); }
};

/// Resolves a grammar reference: a built-in name or a JSON file.
GrammarSpec resolve_grammar(const std::string& name_or_path);
/// Builds the dataset a config describes: corpus files when given, otherwise
/// independent samples from the grammar. `labeled` requests style labels.
Dataset build_dataset(const RunConfig& config, bool labeled);

/// All trainable networks of a run. Not movable: optimizers hold pointers
/// into it.
class Models {
 public:
  Models(std::size_t vocab_size, const ModelDims& dims, std::size_t num_labels, std::uint64_t seed);
  Models(const Models&) = delete;
  Models& operator=(const Models&) = delete;

  ModelDims dims;
  std::size_t vocab_size;
  std::size_t num_labels;
  Encoder encoder;
  Guider guider;
  Generator generator;
  Discriminator discriminator;
  /// Style mode only: sentence style classifier and latent label classifier
  /// p(l | s_0).
  std::unique_ptr<Discriminator> style_classifier;
  std::unique_ptr<Linear> latent_classifier;

  Policy policy() { return {encoder, guider, generator}; }

  /// Encoder and generator parameters (updated by MLE and policy gradients).
  ParameterList generator_group();
  ParameterList guider_group();
  ParameterList discriminator_group();
  ParameterList style_classifier_group();
  ParameterList latent_classifier_group();
  /// Every parameter, with stable names, for checkpointing.
  ParameterList all_parameters();

 private:
  Models(std::size_t vocab_size, const ModelDims& dims, std::size_t num_labels, std::mt19937_64 rng);
};

/// Per-epoch record written to the JSON-lines log.
struct EpochRecord {
  std::string stage;
  std::size_t epoch = 0;
  nlohmann::json values;
};

using LogSink = std::function<void(const EpochRecord&)>;

/// Summary of generated samples.
struct SampleMetrics {
  double validity = 0.0;
  double test_bleu2 = 0.0;
  double test_bleu3 = 0.0;
  double self_bleu2 = 0.0;
  double self_bleu3 = 0.0;
  double mean_length = 0.0;
  double mean_reward = 0.0;  // mean r^g over sampled sentences
  nlohmann::json to_json() const;
};

/// Rewards for one trace: r^g from the trace features and predictions, the
/// discounted return, the discriminator's score and the composed Q.
RewardTrace compute_rewards(const GenerationTrace& trace, double r_f, const TrainConfig& config);

/// One policy-gradient update: accumulates the gradient of the surrogate
/// -(1/B) sum_b sum_t adv[b][t] log p(y_t) over generator-side parameters
/// (guider and encoder features are constants), scaled by `weight`. When
/// `optimizer` is given it then takes one step; if every advantage is zero
/// no step is taken at all. Returns the surrogate value.
double policy_gradient_step(Policy policy, std::span<const GenerationTrace> traces,
                            const std::vector<std::vector<double>>& advantages, Adam* optimizer,
                            double weight = 1.0);

/// Owns the models, optimizers and random streams of one run.
class Trainer {
 public:
  /// `num_labels` overrides the label count implied by the data (used when
  /// restoring a style model without its corpus).
  Trainer(RunConfig config, Dataset data, std::optional<std::size_t> num_labels = std::nullopt);

  RunConfig& config() { return config_; }
  const RunConfig& config() const { return config_; }
  Dataset& data() { return data_; }
  Models& models() { return *models_; }

  Adam& generator_optimizer() { return gen_opt_; }
  Adam& guider_optimizer() { return guider_opt_; }
  Adam& discriminator_optimizer() { return disc_opt_; }
  Adam& style_optimizer() { return style_opt_; }
  Baseline& baseline() { return baseline_; }

  /// Completed stages, in order ("mle", "adversarial", "style").
  std::vector<std::string>& stages() { return stages_; }
  bool has_stage(const std::string& s) const;

  /// MLE pretraining of encoder, generator and guider. Returns one record per
  /// epoch.
  std::vector<EpochRecord> pretrain_mle(const LogSink& log = {});

  /// Adversarial fine-tuning, starting with discriminator pretraining;
  /// requires a completed MLE stage.
  std::vector<EpochRecord> run_gmgan(const LogSink& log = {});

  /// Style-transfer training on a labeled corpus.
  std::vector<EpochRecord> run_style_transfer(const LogSink& log = {});

  /// Gradient accumulation for one MLE batch: generator NLL scaled by
  /// gen_weight and guider objective scaled by guider_weight. Returns
  /// {mean NLL, mean guider loss}.
  std::pair<double, double> accumulate_mle(std::span<const Sentence> batch, double gen_weight, double guider_weight,
                                           std::mt19937_64& rng);

  /// Initial feature for sampling: scaled ReLU noise.
  Tensor noise(std::mt19937_64& rng);
  /// Samples `n` sentences from noise.
  std::vector<GenerationTrace> sample(std::size_t n, std::mt19937_64& rng, DecodeMode mode = DecodeMode::sample);
  /// Validity, BLEU and reward summary of `n` samples drawn with a fixed
  /// evaluation seed.
  SampleMetrics evaluate_samples(std::size_t n);
  /// Mean per-token NLL on the validation set with noise initial features.
  double validation_nll();
  /// Mean guider cosine terms {direct, direction} over validation sentences.
  std::pair<double, double> guider_validation_cosines();

  /// Trains the discriminator for `steps` batches against fresh samples.
  double train_discriminator(std::size_t steps, std::mt19937_64& rng);

  /// Style stage helpers.
  double pretrain_style_classifier();
  double style_classifier_accuracy(std::span<const Sentence> sentences, std::span<const int> labels);
  /// Greedy transfer of `x` to style `label`.
  Sentence transfer(const Sentence& x, int label);

  /// Per-token r^g of a teacher-forced sentence. The initial state is
  /// Enc(plan) when a plan sentence is given, seeded noise otherwise.
  std::vector<double> inspect_rewards(const Sentence& s, std::uint64_t seed,
                                      const std::optional<Sentence>& plan = std::nullopt);

  std::size_t steps_per_epoch() const;

 private:
  void require_data() const;
  void refresh_feature_norm();

  RunConfig config_;
  Dataset data_;
  std::unique_ptr<Models> models_;
  Adam gen_opt_, guider_opt_, disc_opt_, style_opt_;
  Baseline baseline_;
  std::vector<std::string> stages_;
};

}  // namespace gmg
