#include "gmg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gmg/errors.hpp"

namespace gmg {

namespace {

// Random stream ids. Each concern draws from its own stream so that, for
// example, the MLE batch order does not depend on how many tokens the
// policy-gradient sampler consumed.
enum Stream : std::uint64_t {
  kInitStream = 1,
  kTrainData = 2,
  kValidData = 3,
  kTestData = 4,
  kMleStream = 10,
  kSampleStream = 20,
  kGanMleStream = 21,
  kDiscStream = 22,
  kStyleStream = 30,
  kValidNoise = 90,
  kEvalStream = 95,
};

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

void check_loss(double value, const char* what) {
  if (!std::isfinite(value)) throw NumericalError(std::string("non-finite ") + what + " during training");
}

/// Cycles through shuffled index permutations.
class BatchCursor {
 public:
  explicit BatchCursor(std::size_t n) : order_(n) { std::iota(order_.begin(), order_.end(), 0); }

  std::vector<std::size_t> next(std::size_t size, std::mt19937_64& rng) {
    std::vector<std::size_t> out;
    while (out.size() < size) {
      if (pos_ == 0) std::shuffle(order_.begin(), order_.end(), rng);
      out.push_back(order_[pos_]);
      pos_ = (pos_ + 1) % order_.size();
      if (out.size() == order_.size()) break;
    }
    return out;
  }

 private:
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

std::vector<Sentence> gather(const std::vector<Sentence>& all, const std::vector<std::size_t>& idx) {
  std::vector<Sentence> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(all[i]);
  return out;
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
  return std::mt19937_64(splitmix64(splitmix64(seed) ^ splitmix64(stream * 0x632BE59BD9B4E019ULL)));
}

// Data -----------------------------------------------------------------------

GrammarSpec resolve_grammar(const std::string& name_or_path) {
  if (name_or_path == "desk") return desk_grammar();
  if (name_or_path == "style") return style_grammar();
  if (name_or_path == "deterministic") return deterministic_grammar();
  return GrammarSpec::load(name_or_path);
}

Dataset build_dataset(const RunConfig& config, bool labeled) {
  Dataset d;
  if (!config.grammar.empty()) d.grammar = resolve_grammar(config.grammar);
  const std::size_t max_len = config.max_len;

  if (!config.corpus.empty()) {
    if (labeled) throw ContractError("style runs sample their labeled corpus from a grammar with style lexicons");
    CorpusOptions opts{max_len, 1};
    d.train = load_corpus(config.corpus, d.vocab, true, opts);
    if (!config.valid_corpus.empty()) {
      d.valid = load_corpus(config.valid_corpus, d.vocab, false, opts);
    } else {
      std::size_t n = std::max<std::size_t>(1, d.train.size() / 10);
      if (d.train.size() < 2) throw ContractError("corpus too small to split off a validation set");
      d.valid.assign(d.train.end() - static_cast<std::ptrdiff_t>(n), d.train.end());
      d.train.resize(d.train.size() - n);
    }
    d.test = config.test_corpus.empty() ? d.valid : load_corpus(config.test_corpus, d.vocab, false, opts);
    return d;
  }

  if (!d.grammar) throw ContractError("config needs either a corpus or a grammar");
  d.vocab = grammar_vocabulary(*d.grammar);
  if (labeled) {
    if (!d.grammar->style) throw ContractError("style runs need a grammar with style lexicons");
    auto split = [&](std::size_t n, std::uint64_t stream, std::vector<Sentence>& out, std::vector<int>& labels) {
      auto rng = make_rng(config.seed, stream);
      for (auto& ls : sample_labeled(*d.grammar, d.vocab, n, rng(), max_len)) {
        out.push_back(std::move(ls.sentence));
        labels.push_back(ls.label);
      }
    };
    split(config.train_size, kTrainData, d.train, d.train_labels);
    split(config.valid_size, kValidData, d.valid, d.valid_labels);
    split(config.test_size, kTestData, d.test, d.test_labels);
  } else {
    auto draw_split = [&](std::size_t n, std::uint64_t stream) {
      auto rng = make_rng(config.seed, stream);
      return sample_grammar(*d.grammar, d.vocab, n, rng(), max_len);
    };
    d.train = draw_split(config.train_size, kTrainData);
    d.valid = draw_split(config.valid_size, kValidData);
    d.test = draw_split(config.test_size, kTestData);
  }
  return d;
}

// Models -----------------------------------------------------------------------

Models::Models(std::size_t vocab_size_, const ModelDims& dims_, std::size_t num_labels_, std::uint64_t seed)
    : Models(vocab_size_, dims_, num_labels_, make_rng(seed, kInitStream)) {}

Models::Models(std::size_t vocab_size_, const ModelDims& dims_, std::size_t num_labels_, std::mt19937_64 rng)
    : dims(dims_),
      vocab_size(vocab_size_),
      num_labels(num_labels_),
      encoder(vocab_size_, dims_, rng),
      guider(dims_, num_labels_, rng),
      generator(vocab_size_, dims_, rng),
      discriminator(vocab_size_, dims_, rng) {
  if (num_labels > 0) {
    style_classifier = std::make_unique<Discriminator>(vocab_size, dims, rng);
    latent_classifier = std::make_unique<Linear>(dims.feature, 1, rng);
  }
}

ParameterList Models::generator_group() {
  ParameterList out;
  encoder.collect(out);
  generator.collect(out);
  return out;
}

ParameterList Models::guider_group() {
  ParameterList out;
  guider.collect(out);
  return out;
}

ParameterList Models::discriminator_group() {
  ParameterList out;
  discriminator.collect(out);
  return out;
}

ParameterList Models::style_classifier_group() {
  ParameterList out;
  if (style_classifier) style_classifier->collect(out, "style_classifier");
  return out;
}

ParameterList Models::latent_classifier_group() {
  ParameterList out;
  if (latent_classifier) latent_classifier->collect(out, "latent_classifier");
  return out;
}

ParameterList Models::all_parameters() {
  ParameterList out = generator_group();
  out.push_back({"encoder.feature_norm", &encoder.feature_norm});
  guider.collect(out);
  discriminator.collect(out);
  if (style_classifier) style_classifier->collect(out, "style_classifier");
  if (latent_classifier) latent_classifier->collect(out, "latent_classifier");
  return out;
}

// Free helpers -------------------------------------------------------------------

nlohmann::json SampleMetrics::to_json() const {
  return {{"validity", validity},     {"test_bleu2", test_bleu2}, {"test_bleu3", test_bleu3},
          {"self_bleu2", self_bleu2}, {"self_bleu3", self_bleu3}, {"mean_length", mean_length},
          {"mean_reward", mean_reward}};
}

RewardTrace compute_rewards(const GenerationTrace& trace, double r_f, const TrainConfig& config) {
  RewardTrace rt;
  rt.r_f = r_f;
  rt.gamma = config.gamma;
  rt.c = config.c;
  rt.r_g = feature_matching_rewards(trace.features, trace.predictions, config.c);
  rt.R = discounted_cumulative(rt.r_g, config.gamma, config.discount);
  rt.Q = compose_q(rt.R, r_f, config.reward_mode);
  return rt;
}

double policy_gradient_step(Policy policy, std::span<const GenerationTrace> traces,
                            const std::vector<std::vector<double>>& advantages, Adam* optimizer, double weight) {
  if (traces.empty()) throw ContractError("policy gradient on an empty batch");
  if (advantages.size() != traces.size()) throw ContractError("one advantage row per trace required");
  bool any = false;
  for (std::size_t b = 0; b < traces.size(); ++b) {
    if (advantages[b].size() != traces[b].length()) {
      throw ContractError("advantage row length differs from its sentence length");
    }
    for (double a : advantages[b]) any = any || a != 0.0;
  }
  if (!any) return 0.0;

  const double norm = -weight / static_cast<double>(traces.size());
  double surrogate = 0.0;
  for (std::size_t b = 0; b < traces.size(); ++b) {
    const auto& trace = traces[b];
    Tape tape;
    UnrollOptions options;
    options.max_len = std::max<std::size_t>(trace.length(), 1);
    options.train_generator = true;
    options.label = trace.label;
    std::span<const int> tokens(trace.sentence.tokens);
    auto u = unroll(tape, policy, encode_initial(tape, policy.encoder, trace.init), options, tokens);
    std::vector<Var> terms;
    for (std::size_t t = 0; t < u.log_probs.size(); ++t) terms.push_back(scale(u.log_probs[t], norm * advantages[b][t]));
    Var loss = sum_all(terms);
    check_loss(loss.item(), "policy-gradient surrogate");
    surrogate += loss.item();
    tape.backward(loss);
  }
  if (optimizer) optimizer->step();
  return surrogate;
}

// Trainer --------------------------------------------------------------------------

Trainer::Trainer(RunConfig config, Dataset data, std::optional<std::size_t> num_labels)
    : config_(std::move(config)), data_(std::move(data)) {
  config_.validate();
  std::size_t labels = 0;
  if (num_labels) {
    labels = *num_labels;
  } else if (data_.labeled()) {
    labels = std::max<std::size_t>(2, data_.grammar ? data_.grammar->num_styles() : 2);
  }
  models_ = std::make_unique<Models>(data_.vocab.size(), config_.model_dims(), labels, config_.seed);
  gen_opt_ = Adam(models_->generator_group(), {config_.lr_generator});
  guider_opt_ = Adam(models_->guider_group(), {config_.lr_guider});
  disc_opt_ = Adam(models_->discriminator_group(), {config_.lr_discriminator});
  style_opt_ = Adam(models_->latent_classifier_group(), {config_.lr_discriminator});
  baseline_.momentum = config_.baseline_momentum;
  baseline_.enabled = config_.baseline;
}

bool Trainer::has_stage(const std::string& s) const {
  return std::find(stages_.begin(), stages_.end(), s) != stages_.end();
}

std::size_t Trainer::steps_per_epoch() const {
  if (config_.steps_per_epoch > 0) return config_.steps_per_epoch;
  return std::max<std::size_t>(1, (data_.train.size() + config_.batch_size - 1) / config_.batch_size);
}

void Trainer::require_data() const {
  if (data_.train.empty() || data_.valid.empty()) throw ContractError("training and validation sets must be nonempty");
}

void Trainer::refresh_feature_norm() {
  if (data_.train.empty()) return;
  const std::size_t n = std::min<std::size_t>(data_.train.size(), 256);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    Tape tape;
    auto f = encode_initial(tape, models_->encoder, data_.train[i], false).value();
    double sq = 0.0;
    for (double v : f) sq += v * v;
    total += std::sqrt(sq);
  }
  double norm = total / static_cast<double>(n);
  models_->encoder.feature_norm[0] = norm > 0.0 ? norm : 1.0;
}

Tensor Trainer::noise(std::mt19937_64& rng) {
  return sample_noise(models_->encoder.feature_dim(), models_->encoder.feature_norm[0], rng);
}

std::pair<double, double> Trainer::accumulate_mle(std::span<const Sentence> batch, double gen_weight,
                                                  double guider_weight, std::mt19937_64& rng) {
  if (batch.empty()) throw ContractError("empty MLE batch");
  const double b = static_cast<double>(batch.size());
  std::bernoulli_distribution use_noise(config_.init_noise_prob);
  double nll = 0.0, gl = 0.0;
  std::size_t guided = 0;
  for (const auto& x : batch) {
    Tape tape;
    Var s0 = use_noise(rng) ? tape.value(noise(rng)) : encode_initial(tape, models_->encoder, x, gen_weight > 0.0);
    UnrollOptions options;
    options.max_len = config_.max_len;
    options.train_generator = gen_weight > 0.0;
    options.train_guider = guider_weight > 0.0;
    std::span<const int> tokens(x.tokens);
    auto u = unroll(tape, models_->policy(), s0, options, tokens);
    Var sentence = sentence_nll(u);
    nll += sentence.item();
    Var loss = scale(sentence, gen_weight / b);
    if (u.features.size() > config_.c) {
      Var g = guider_objective(u.features, u.predictions, config_.c);
      gl += g.item();
      ++guided;
      loss = add(loss, scale(g, guider_weight / b));
    }
    check_loss(loss.item(), "MLE loss");
    tape.backward(loss);
  }
  return {nll / b, guided ? gl / static_cast<double>(guided) : 0.0};
}

std::vector<EpochRecord> Trainer::pretrain_mle(const LogSink& log) {
  require_data();
  auto rng = make_rng(config_.seed, kMleStream);
  BatchCursor cursor(data_.train.size());
  std::vector<EpochRecord> records;
  refresh_feature_norm();
  for (std::size_t epoch = 1; epoch <= config_.mle_epochs; ++epoch) {
    std::vector<double> nlls, gls;
    for (std::size_t step = 0; step < steps_per_epoch(); ++step) {
      auto batch = gather(data_.train, cursor.next(config_.batch_size, rng));
      auto [nll, gl] = accumulate_mle(batch, 1.0, 1.0, rng);
      gen_opt_.step();
      guider_opt_.step();
      nlls.push_back(nll);
      gls.push_back(gl);
    }
    refresh_feature_norm();
    auto [cos_direct, cos_direction] = guider_validation_cosines();
    EpochRecord rec{"mle", epoch,
                    {{"train_nll", mean(nlls)},
                     {"guider_loss", mean(gls)},
                     {"valid_nll", validation_nll()},
                     {"guider_cos_feature", cos_direct},
                     {"guider_cos_direction", cos_direction},
                     {"feature_norm", models_->encoder.feature_norm[0]}}};
    records.push_back(rec);
    if (log) log(rec);
  }
  stages_.push_back("mle");
  return records;
}

double Trainer::validation_nll() {
  auto rng = make_rng(config_.seed, kValidNoise);
  std::vector<Tensor> inits;
  for (std::size_t i = 0; i < data_.valid.size(); ++i) inits.push_back(noise(rng));
  return mean_token_nll(models_->policy(), data_.valid, inits, config_.max_len);
}

std::pair<double, double> Trainer::guider_validation_cosines() {
  double a = 0.0, b = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < data_.valid.size(); ++i) {
    const auto& x = data_.valid[i];
    if (x.length() + 1 <= config_.c) continue;
    std::optional<int> label;
    if (data_.labeled()) label = data_.valid_labels[i];
    Tensor s0;
    {
      Tape tape;
      s0 = encode_initial(tape, models_->encoder, x, false).to_tensor();
    }
    auto trace = force_sequence(models_->policy(), s0, x, config_.max_len, label);
    auto [d, r] = guider_cosines(trace.features, trace.predictions, config_.c);
    a += d;
    b += r;
    ++n;
  }
  if (n == 0) return {0.0, 0.0};
  return {a / static_cast<double>(n), b / static_cast<double>(n)};
}

std::vector<GenerationTrace> Trainer::sample(std::size_t n, std::mt19937_64& rng, DecodeMode mode) {
  std::vector<GenerationTrace> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::optional<int> label;
    if (models_->num_labels > 0) label = static_cast<int>(i % models_->num_labels);
    Tensor init = noise(rng);
    out.push_back(sample_sequence(models_->policy(), init, rng, mode, config_.max_len, label));
  }
  return out;
}

SampleMetrics Trainer::evaluate_samples(std::size_t n) {
  SampleMetrics m;
  if (n == 0) return m;
  auto rng = make_rng(config_.seed, kEvalStream);
  auto traces = sample(n, rng);
  std::vector<Sentence> sentences;
  std::vector<double> rewards;
  double length = 0.0;
  for (const auto& t : traces) {
    sentences.push_back(t.sentence);
    length += static_cast<double>(t.length());
    auto r = feature_matching_rewards(t.features, t.predictions, config_.c);
    rewards.push_back(mean(r));
  }
  m.mean_length = length / static_cast<double>(n);
  m.mean_reward = mean(rewards);
  if (data_.grammar) m.validity = validity_rate(sentences, *data_.grammar, data_.vocab);

  std::vector<Tokens> words;
  for (auto& w : strip_eos(sentences)) {
    if (!w.empty()) words.push_back(std::move(w));
  }
  auto refs = strip_eos(data_.test);
  std::erase_if(refs, [](const Tokens& r) { return r.empty(); });
  if (!words.empty() && !refs.empty()) {
    m.test_bleu2 = test_bleu(words, refs, 2);
    m.test_bleu3 = test_bleu(words, refs, 3);
  }
  if (words.size() > config_.self_bleu_samples) words.resize(config_.self_bleu_samples);
  if (words.size() >= 2) {
    m.self_bleu2 = self_bleu(words, 2);
    m.self_bleu3 = self_bleu(words, 3);
  }
  return m;
}

double Trainer::train_discriminator(std::size_t steps, std::mt19937_64& rng) {
  if (steps == 0) return 0.0;
  std::uniform_int_distribution<std::size_t> pick_real(0, data_.train.size() - 1);
  double total = 0.0;
  for (std::size_t s = 0; s < steps; ++s) {
    std::vector<Sentence> real, fake;
    for (std::size_t i = 0; i < config_.batch_size; ++i) real.push_back(data_.train[pick_real(rng)]);
    for (auto& t : sample(config_.batch_size, rng)) fake.push_back(std::move(t.sentence));
    total += discriminator_train_step(models_->discriminator, disc_opt_, real, fake);
  }
  return total / static_cast<double>(steps);
}

std::vector<EpochRecord> Trainer::run_gmgan(const LogSink& log) {
  if (!has_stage("mle")) throw ContractError("adversarial training needs a completed MLE stage");
  require_data();
  auto sample_rng = make_rng(config_.seed, kSampleStream);
  auto mle_rng = make_rng(config_.seed, kGanMleStream);
  auto disc_rng = make_rng(config_.seed, kDiscStream);
  BatchCursor cursor(data_.train.size());
  const std::size_t per_epoch = steps_per_epoch();
  const double ramp = config_.ramp_fraction * static_cast<double>(config_.rl_epochs * per_epoch);
  auto lambda_at = [&](std::size_t step) {
    if (config_.lambda_pinned) return *config_.lambda_pinned;
    return std::min(1.0, static_cast<double>(step + 1) / std::max(ramp, 1.0));
  };

  std::vector<EpochRecord> records;
  double pretrain_loss = 0.0;
  const bool adversarial = !(config_.lambda_pinned && *config_.lambda_pinned == 0.0);
  if (adversarial) pretrain_loss = train_discriminator(config_.disc_pretrain_steps, disc_rng);

  std::size_t global = 0;
  for (std::size_t epoch = 1; epoch <= config_.rl_epochs; ++epoch) {
    std::vector<double> nlls, qs, scores, dls;
    double lambda = 0.0;
    for (std::size_t step = 0; step < per_epoch; ++step, ++global) {
      lambda = lambda_at(global);
      for (std::size_t g = 0; g < config_.g_steps; ++g) {
        auto batch = gather(data_.train, cursor.next(config_.batch_size, mle_rng));
        nlls.push_back(accumulate_mle(batch, 1.0 - lambda, 1.0, mle_rng).first);
        if (lambda > 0.0) {
          auto traces = sample(config_.pg_batch_size, sample_rng);
          std::vector<std::vector<double>> Q;
          for (const auto& t : traces) {
            double r_f = models_->discriminator.score(t.sentence);
            scores.push_back(r_f);
            Q.push_back(compute_rewards(t, r_f, config_).Q);
            qs.push_back(mean(Q.back()));
          }
          auto adv = baseline_advantage(Q, baseline_);
          for (std::size_t b = 0; b < traces.size(); ++b) {
            if (traces[b].truncated) adv[b].back() = 0.0;
          }
          policy_gradient_step(models_->policy(), traces, adv, nullptr, lambda);
        }
        gen_opt_.step();
        guider_opt_.step();
      }
      if (lambda > 0.0) dls.push_back(train_discriminator(config_.d_steps, disc_rng));
    }
    auto metrics = evaluate_samples(config_.eval_samples);
    nlohmann::json values = metrics.to_json();
    values["lambda"] = lambda;
    values["train_nll"] = mean(nlls);
    values["mean_q"] = mean(qs);
    values["mean_disc_score"] = mean(scores);
    values["disc_loss"] = mean(dls);
    values["baseline"] = baseline_.value;
    values["reward_mode"] = to_string(config_.reward_mode);
    if (epoch == 1) values["disc_pretrain_loss"] = pretrain_loss;
    EpochRecord rec{"adversarial", epoch, values};
    records.push_back(rec);
    if (log) log(rec);
  }
  stages_.push_back("adversarial");
  return records;
}

// Style transfer ----------------------------------------------------------------

double Trainer::style_classifier_accuracy(std::span<const Sentence> sentences, std::span<const int> labels) {
  if (!models_->style_classifier) throw ContractError("no style classifier in this run");
  if (sentences.size() != labels.size() || sentences.empty()) throw ContractError("one label per sentence required");
  std::size_t ok = 0;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    ok += (models_->style_classifier->score(sentences[i]) > 0.5 ? 1 : 0) == labels[i];
  }
  return static_cast<double>(ok) / static_cast<double>(sentences.size());
}

double Trainer::pretrain_style_classifier() {
  auto& clf = *models_->style_classifier;
  Adam opt(models_->style_classifier_group(), {config_.lr_discriminator});
  auto rng = make_rng(config_.seed, kStyleStream + 1);
  BatchCursor cursor(data_.train.size());
  for (std::size_t epoch = 0; epoch < config_.style.classifier_epochs; ++epoch) {
    for (std::size_t step = 0; step < steps_per_epoch(); ++step) {
      auto idx = cursor.next(config_.batch_size, rng);
      Tape tape;
      std::vector<Var> losses;
      for (auto i : idx) {
        losses.push_back(bce_with_logits(clf.logit(tape, data_.train[i].tokens, true), data_.train_labels[i]));
      }
      Var loss = scale(sum_all(losses), 1.0 / static_cast<double>(idx.size()));
      check_loss(loss.item(), "style classifier loss");
      tape.backward(loss);
      opt.step();
    }
  }
  return style_classifier_accuracy(data_.valid, data_.valid_labels);
}

Sentence Trainer::transfer(const Sentence& x, int label) {
  if (models_->num_labels == 0) throw ContractError("transfer needs a style-trained model");
  if (label < 0 || static_cast<std::size_t>(label) >= models_->num_labels) throw ContractError("style label out of range");
  Tape tape;
  UnrollOptions options;
  options.max_len = config_.max_len;
  options.label = label;
  TokenChooser choose = [](std::span<const double> probs) { return argmax(probs); };
  auto u = unroll(tape, models_->policy(), encode_initial(tape, models_->encoder, x, false), options, std::nullopt,
                  choose);
  return Sentence{u.tokens};
}

std::vector<EpochRecord> Trainer::run_style_transfer(const LogSink& log) {
  if (!data_.labeled() || !models_->style_classifier) throw ContractError("style transfer needs a labeled corpus");
  if (models_->num_labels != 2) throw ContractError("style transfer needs binary labels");
  for (int l : data_.train_labels) {
    if (l != 0 && l != 1) throw ContractError("style labels must be 0 or 1");
  }
  require_data();
  const auto& sc = config_.style;
  std::vector<EpochRecord> records;
  double clf_acc = pretrain_style_classifier();
  refresh_feature_norm();

  auto rng = make_rng(config_.seed, kStyleStream);
  BatchCursor cursor(data_.train.size());
  auto& clf = *models_->style_classifier;
  auto& latent = *models_->latent_classifier;
  const auto labels = static_cast<int>(models_->num_labels);

  for (std::size_t epoch = 1; epoch <= sc.epochs; ++epoch) {
    const bool warmup = epoch <= sc.warmup_epochs;
    std::vector<double> recons, clfs, ents, lats;
    for (std::size_t step = 0; step < steps_per_epoch(); ++step) {
      auto idx = cursor.next(config_.batch_size, rng);
      const double b = static_cast<double>(idx.size());
      for (auto i : idx) {
        const Sentence& x = data_.train[i];
        const int l = data_.train_labels[i];
        const int target = (l + 1) % labels;
        Tape tape;
        Var s0 = encode_initial(tape, models_->encoder, x, true);

        UnrollOptions recon_opts;
        recon_opts.max_len = config_.max_len;
        recon_opts.train_generator = true;
        recon_opts.train_guider = true;
        recon_opts.label = l;
        std::span<const int> tokens(x.tokens);
        auto u = unroll(tape, models_->policy(), s0, recon_opts, tokens);
        Var recon = sentence_nll(u);
        Var loss = scale(recon, sc.recon_weight / b);
        if (u.features.size() > config_.c) {
          loss = add(loss, scale(guider_objective(u.features, u.predictions, config_.c), 1.0 / b));
        }

        if (warmup) {
          check_loss(loss.item(), "style transfer loss");
          tape.backward(loss);
          recons.push_back(recon.item());
          continue;
        }
        UnrollOptions transfer_opts;
        transfer_opts.max_len = config_.max_len;
        transfer_opts.train_generator = true;
        transfer_opts.train_guider = false;
        transfer_opts.label = target;
        transfer_opts.soft_temperature = sc.temperature;
        TokenChooser choose = [](std::span<const double> probs) { return argmax(probs); };
        auto v = unroll(tape, models_->policy(), s0, transfer_opts, std::nullopt, choose);
        Var table = tape.frozen(clf.embedding);
        std::vector<Var> soft;
        for (Var logits : v.logits) soft.push_back(soft_embedding(tape, logits, sc.temperature, table));
        Var clf_loss = bce_with_logits(clf.logit_from_embeddings(tape, soft, false), target);
        loss = add(loss, scale(clf_loss, sc.classifier_weight / b));

        Var entropy = binary_entropy(latent.forward(tape, s0, false));
        loss = add(loss, scale(entropy, -sc.entropy_weight / b));
        Var latent_loss = bce_with_logits(latent.forward(tape, stop_gradient(s0), true), l);
        loss = add(loss, scale(latent_loss, 1.0 / b));

        check_loss(loss.item(), "style transfer loss");
        tape.backward(loss);
        recons.push_back(recon.item());
        clfs.push_back(clf_loss.item());
        ents.push_back(entropy.item());
        lats.push_back(latent_loss.item());
      }
      gen_opt_.step();
      guider_opt_.step();
      style_opt_.step();
    }

    double accuracy = 0.0, precision = 0.0;
    const std::size_t n = std::min<std::size_t>(data_.valid.size(), 100);
    for (std::size_t i = 0; i < n; ++i) {
      const int target = (data_.valid_labels[i] + 1) % labels;
      Sentence y = transfer(data_.valid[i], target);
      accuracy += oracle_style(*data_.grammar, data_.vocab.decode_words(y)) == target;
      precision += unigram_precision(y.words(), data_.valid[i].words());
    }
    EpochRecord rec{"style", epoch,
                    {{"recon_nll", mean(recons)},
                     {"classifier_loss", mean(clfs)},
                     {"latent_entropy", mean(ents)},
                     {"latent_loss", mean(lats)},
                     {"transfer_accuracy", accuracy / static_cast<double>(n)},
                     {"unigram_precision", precision / static_cast<double>(n)}}};
    if (epoch == 1) rec.values["style_classifier_accuracy"] = clf_acc;
    records.push_back(rec);
    if (log) log(rec);
  }
  stages_.push_back("style");
  return records;
}

std::vector<double> Trainer::inspect_rewards(const Sentence& s, std::uint64_t seed,
                                             const std::optional<Sentence>& plan) {
  Tensor init;
  if (plan) {
    Tape tape;
    init = encode_initial(tape, models_->encoder, *plan, false).to_tensor();
  } else {
    std::mt19937_64 rng(seed);
    init = noise(rng);
  }
  std::optional<int> label;
  if (models_->num_labels > 0) label = 0;
  auto trace = force_sequence(models_->policy(), init, s, std::max(config_.max_len, s.length()), label);
  return feature_matching_rewards(trace.features, trace.predictions, config_.c);
}

}  // namespace gmg
