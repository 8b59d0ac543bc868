#include "gmg/config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <map>

#include "gmg/errors.hpp"

namespace gmg {

using nlohmann::json;

ModelDims TrainConfig::model_dims() const {
  if (dims) {
    ModelDims d = *dims;
    d.max_len = max_len;
    return d;
  }
  if (profile == "paper") return ModelDims::paper(max_len);
  if (profile == "small") return ModelDims::small(max_len);
  throw ConfigError("unknown profile \"" + profile + "\" (expected paper or small)");
}

namespace {

template <typename T>
T read(const json& j, const std::string& key) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config field \"" + key + "\" has the wrong type");
  }
}

using Setter = std::function<void(RunConfig&, const json&)>;

template <typename T, typename Base>
Setter field(T Base::*member, const std::string& key) {
  return [member, key](RunConfig& c, const json& v) { c.*member = read<T>(v, key); };
}

template <typename T>
Setter style_field(T StyleConfig::*member, const std::string& key) {
  return [member, key](RunConfig& c, const json& v) { c.style.*member = read<T>(v, "style." + key); };
}

const std::map<std::string, Setter>& style_setters() {
  static const std::map<std::string, Setter> setters = {
      {"recon_weight", style_field(&StyleConfig::recon_weight, "recon_weight")},
      {"classifier_weight", style_field(&StyleConfig::classifier_weight, "classifier_weight")},
      {"entropy_weight", style_field(&StyleConfig::entropy_weight, "entropy_weight")},
      {"temperature", style_field(&StyleConfig::temperature, "temperature")},
      {"epochs", style_field(&StyleConfig::epochs, "epochs")},
      {"warmup_epochs", style_field(&StyleConfig::warmup_epochs, "warmup_epochs")},
      {"classifier_epochs", style_field(&StyleConfig::classifier_epochs, "classifier_epochs")},
  };
  return setters;
}

ModelDims parse_dims(const json& j) {
  static const char* known[] = {"embed", "conv", "feature", "hidden", "kernel", "stride"};
  if (!j.is_object()) throw ConfigError("config field \"dims\" must be an object");
  for (const auto& [k, v] : j.items()) {
    if (std::find(std::begin(known), std::end(known), k) == std::end(known)) {
      throw ConfigError("unknown config key \"dims." + k + "\"");
    }
  }
  ModelDims d;
  d.embed = read<std::size_t>(j.at("embed"), "dims.embed");
  d.conv = read<std::size_t>(j.at("conv"), "dims.conv");
  d.feature = read<std::size_t>(j.at("feature"), "dims.feature");
  d.hidden = read<std::size_t>(j.at("hidden"), "dims.hidden");
  if (j.contains("kernel")) d.kernel = read<std::size_t>(j.at("kernel"), "dims.kernel");
  if (j.contains("stride")) d.stride = read<std::size_t>(j.at("stride"), "dims.stride");
  return d;
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> s = {
      {"seed", field(&TrainConfig::seed, "seed")},
      {"profile", field(&TrainConfig::profile, "profile")},
      {"max_len", field(&TrainConfig::max_len, "max_len")},
      {"dims", [](RunConfig& c, const json& v) { c.dims = parse_dims(v); }},
      {"lr_generator", field(&TrainConfig::lr_generator, "lr_generator")},
      {"lr_guider", field(&TrainConfig::lr_guider, "lr_guider")},
      {"lr_discriminator", field(&TrainConfig::lr_discriminator, "lr_discriminator")},
      {"c", field(&TrainConfig::c, "c")},
      {"gamma", field(&TrainConfig::gamma, "gamma")},
      {"batch_size", field(&TrainConfig::batch_size, "batch_size")},
      {"mle_epochs", field(&TrainConfig::mle_epochs, "mle_epochs")},
      {"rl_epochs", field(&TrainConfig::rl_epochs, "rl_epochs")},
      {"steps_per_epoch", field(&TrainConfig::steps_per_epoch, "steps_per_epoch")},
      {"g_steps", field(&TrainConfig::g_steps, "g_steps")},
      {"d_steps", field(&TrainConfig::d_steps, "d_steps")},
      {"pg_batch_size", field(&TrainConfig::pg_batch_size, "pg_batch_size")},
      {"disc_pretrain_steps", field(&TrainConfig::disc_pretrain_steps, "disc_pretrain_steps")},
      {"ramp_fraction", field(&TrainConfig::ramp_fraction, "ramp_fraction")},
      {"lambda_pinned",
       [](RunConfig& c, const json& v) {
         if (v.is_null()) {
           c.lambda_pinned.reset();
         } else {
           c.lambda_pinned = read<double>(v, "lambda_pinned");
         }
       }},
      {"reward_mode",
       [](RunConfig& c, const json& v) {
         try {
           c.reward_mode = parse_reward_mode(read<std::string>(v, "reward_mode"));
         } catch (const ConfigError&) {
           throw;
         } catch (const ContractError& e) {
           throw ConfigError(e.what());
         }
       }},
      {"discount",
       [](RunConfig& c, const json& v) {
         try {
           c.discount = parse_discount(read<std::string>(v, "discount"));
         } catch (const ConfigError&) {
           throw;
         } catch (const ContractError& e) {
           throw ConfigError(e.what());
         }
       }},
      {"baseline", field(&TrainConfig::baseline, "baseline")},
      {"baseline_momentum", field(&TrainConfig::baseline_momentum, "baseline_momentum")},
      {"init_noise_prob", field(&TrainConfig::init_noise_prob, "init_noise_prob")},
      {"eval_samples", field(&TrainConfig::eval_samples, "eval_samples")},
      {"self_bleu_samples", field(&TrainConfig::self_bleu_samples, "self_bleu_samples")},
      {"style",
       [](RunConfig& c, const json& v) {
         if (!v.is_object()) throw ConfigError("config field \"style\" must be an object");
         for (const auto& [k, x] : v.items()) {
           auto it = style_setters().find(k);
           if (it == style_setters().end()) throw ConfigError("unknown config key \"style." + k + "\"");
           it->second(c, x);
         }
       }},
      {"grammar", field(&RunConfig::grammar, "grammar")},
      {"corpus", field(&RunConfig::corpus, "corpus")},
      {"valid_corpus", field(&RunConfig::valid_corpus, "valid_corpus")},
      {"test_corpus", field(&RunConfig::test_corpus, "test_corpus")},
      {"train_size", field(&RunConfig::train_size, "train_size")},
      {"valid_size", field(&RunConfig::valid_size, "valid_size")},
      {"test_size", field(&RunConfig::test_size, "test_size")},
      {"output_dir", field(&RunConfig::output_dir, "output_dir")},
      {"checkpoint", field(&RunConfig::checkpoint, "checkpoint")},
  };
  return s;
}

}  // namespace

json RunConfig::to_json() const {
  json j = {
      {"seed", seed},
      {"profile", profile},
      {"max_len", max_len},
      {"lr_generator", lr_generator},
      {"lr_guider", lr_guider},
      {"lr_discriminator", lr_discriminator},
      {"c", c},
      {"gamma", gamma},
      {"batch_size", batch_size},
      {"mle_epochs", mle_epochs},
      {"rl_epochs", rl_epochs},
      {"steps_per_epoch", steps_per_epoch},
      {"g_steps", g_steps},
      {"d_steps", d_steps},
      {"pg_batch_size", pg_batch_size},
      {"disc_pretrain_steps", disc_pretrain_steps},
      {"ramp_fraction", ramp_fraction},
      {"lambda_pinned", lambda_pinned ? json(*lambda_pinned) : json(nullptr)},
      {"reward_mode", gmg::to_string(reward_mode)},
      {"discount", gmg::to_string(discount)},
      {"baseline", baseline},
      {"baseline_momentum", baseline_momentum},
      {"init_noise_prob", init_noise_prob},
      {"eval_samples", eval_samples},
      {"self_bleu_samples", self_bleu_samples},
      {"style",
       {{"recon_weight", style.recon_weight},
        {"classifier_weight", style.classifier_weight},
        {"entropy_weight", style.entropy_weight},
        {"temperature", style.temperature},
        {"epochs", style.epochs},
        {"warmup_epochs", style.warmup_epochs},
        {"classifier_epochs", style.classifier_epochs}}},
      {"grammar", grammar},
      {"corpus", corpus},
      {"valid_corpus", valid_corpus},
      {"test_corpus", test_corpus},
      {"train_size", train_size},
      {"valid_size", valid_size},
      {"test_size", test_size},
      {"output_dir", output_dir},
      {"checkpoint", checkpoint},
  };
  if (dims) {
    json d = dims->to_json();
    d.erase("max_len");
    j["dims"] = d;
  }
  return j;
}

RunConfig RunConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig c;
  for (const auto& [key, value] : j.items()) {
    auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError("unknown config key \"" + key + "\"");
    it->second(c, value);
  }
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j);
}

void RunConfig::validate() const {
  auto positive_lr = [](double lr, const char* name) {
    if (!(lr > 0.0)) throw ConfigError(std::string(name) + " must be positive");
  };
  positive_lr(lr_generator, "lr_generator");
  positive_lr(lr_guider, "lr_guider");
  positive_lr(lr_discriminator, "lr_discriminator");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in [0,1)");
  if (c != 2 && c != 3 && c != 4 && c != 5 && c != 8) throw ConfigError("c must be one of 2, 3, 4, 5, 8");
  if (max_len < 2) throw ConfigError("max_len must be at least 2");
  if (batch_size < 1 || pg_batch_size < 1) throw ConfigError("batch sizes must be positive");
  if (g_steps < 1) throw ConfigError("g_steps must be positive");
  if (!(ramp_fraction > 0.0 && ramp_fraction <= 1.0)) throw ConfigError("ramp_fraction must lie in (0,1]");
  if (lambda_pinned && !(*lambda_pinned >= 0.0 && *lambda_pinned <= 1.0)) {
    throw ConfigError("lambda_pinned must lie in [0,1]");
  }
  if (!(baseline_momentum >= 0.0 && baseline_momentum < 1.0)) throw ConfigError("baseline_momentum must lie in [0,1)");
  if (!(init_noise_prob >= 0.0 && init_noise_prob <= 1.0)) throw ConfigError("init_noise_prob must lie in [0,1]");
  if (!(style.temperature > 0.0)) throw ConfigError("style.temperature must be positive");
  if (style.recon_weight < 0.0 || style.classifier_weight < 0.0 || style.entropy_weight < 0.0) {
    throw ConfigError("style loss weights must be nonnegative");
  }
  if (train_size < 1 || valid_size < 1 || test_size < 1) throw ConfigError("dataset sizes must be positive");
  model_dims();
}

}  // namespace gmg
