#include "gmg/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "gmg/checkpoint.hpp"
#include "gmg/errors.hpp"
#include "gmg/trainer.hpp"

namespace gmg {

namespace {

namespace fs = std::filesystem;

struct TrainArgs {
  std::string config;
  std::string stage = "all";
  std::string checkpoint;
  std::string out_dir;
};

struct GenerateArgs {
  std::string checkpoint;
  std::size_t num = 10;
  std::uint64_t seed = 0;
  std::string mode = "sample";
  std::optional<int> label;
  std::string input;
  std::string out;
};

struct EvalArgs {
  std::string samples;
  std::string references;
  std::string grammar;
  std::string out;
};

struct InspectArgs {
  std::string checkpoint;
  std::string sentence;
  std::string plan;
  std::uint64_t seed = 0;
  std::string out;
};

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

/// Writes `text` to `path`, or stdout when the path is empty.
void emit(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  auto out = open_out(path);
  out << text;
}

RunConfig load_run_config(const TrainArgs& a) {
  RunConfig c = RunConfig::load(a.config);
  if (const char* s = std::getenv("GMG_SEED")) {
    char* end = nullptr;
    unsigned long long v = std::strtoull(s, &end, 10);
    if (end == s || *end != '\0') throw ConfigError("GMG_SEED must be a nonnegative integer");
    c.seed = v;
  }
  if (!a.checkpoint.empty()) c.checkpoint = a.checkpoint;
  if (!a.out_dir.empty()) c.output_dir = a.out_dir;
  return c;
}

/// Logs each epoch to stdout and the JSON-lines file and snapshots the run.
class RunLog {
 public:
  explicit RunLog(const fs::path& dir) : dir_(dir) {
    fs::create_directories(dir_);
    log_ = open_out(dir_ / "log.jsonl");
  }

  LogSink sink(Trainer& tr) {
    return [this, &tr](const EpochRecord& r) {
      nlohmann::json line = {{"stage", r.stage}, {"epoch", r.epoch}, {"values", r.values}};
      log_ << line.dump() << '\n';
      log_.flush();
      std::cout << line.dump() << std::endl;
      save_checkpoint(tr, dir_ / (r.stage + "_epoch" + std::to_string(r.epoch) + ".gmg"));
    };
  }

  void finish(Trainer& tr) {
    save_checkpoint(tr, dir_ / "final.gmg");
    std::cout << "checkpoint " << (dir_ / "final.gmg").string() << std::endl;
  }

 private:
  fs::path dir_;
  std::ofstream log_;
};

/// Continues a restored run under a new config; the model shape and data
/// source must not change.
void adopt_config(Trainer& tr, const RunConfig& c) {
  const RunConfig& old = tr.config();
  if (c.model_dims() != old.model_dims()) throw ConfigError("config dims differ from the checkpoint");
  if (c.grammar != old.grammar || c.corpus != old.corpus) {
    throw ConfigError("config data source differs from the checkpoint");
  }
  tr.config() = c;
  tr.generator_optimizer().set_lr(c.lr_generator);
  tr.guider_optimizer().set_lr(c.lr_guider);
  tr.discriminator_optimizer().set_lr(c.lr_discriminator);
  tr.baseline().momentum = c.baseline_momentum;
  tr.baseline().enabled = c.baseline;
}

int cmd_train(const TrainArgs& a) {
  RunConfig c = load_run_config(a);
  RunLog log(c.output_dir);
  std::unique_ptr<Trainer> tr;
  if (a.stage == "style") {
    tr = std::make_unique<Trainer>(c, build_dataset(c, true));
    tr->run_style_transfer(log.sink(*tr));
  } else if (a.stage == "mle" || a.stage == "all") {
    tr = std::make_unique<Trainer>(c, build_dataset(c, false));
    tr->pretrain_mle(log.sink(*tr));
    if (a.stage == "all") tr->run_gmgan(log.sink(*tr));
  } else if (a.stage == "adversarial") {
    if (c.checkpoint.empty()) throw ContractError("the adversarial stage needs a pretrained --checkpoint");
    tr = load_checkpoint(c.checkpoint, true);
    adopt_config(*tr, c);
    tr->run_gmgan(log.sink(*tr));
  } else {
    throw ConfigError("unknown stage " + a.stage);
  }
  log.finish(*tr);
  return kExitOk;
}

Sentence encode_known(const Vocabulary& vocab, const std::string& line, std::size_t max_len) {
  Sentence s = vocab.encode(line, max_len);
  auto w = s.words();
  if (w.empty() || std::all_of(w.begin(), w.end(), [](int id) { return id == Vocabulary::kUnk; })) {
    throw ContractError("sentence has no in-vocabulary words: \"" + line + "\"");
  }
  return s;
}

int cmd_generate(const GenerateArgs& a) {
  auto tr = load_checkpoint(a.checkpoint);
  const auto& vocab = tr->data().vocab;
  const std::size_t max_len = tr->config().max_len;
  const std::size_t labels = tr->models().num_labels;
  if (a.label && (*a.label < 0 || static_cast<std::size_t>(*a.label) >= std::max<std::size_t>(labels, 1) ||
                  labels == 0)) {
    throw ContractError("--label needs a style model and a label below " + std::to_string(labels));
  }
  auto rng = make_rng(a.seed, 0);
  std::ostringstream out;
  if (a.mode == "sample" || a.mode == "greedy") {
    const bool greedy = a.mode == "greedy";
    Tensor init = tr->noise(rng);
    for (std::size_t i = 0; i < a.num; ++i) {
      if (!greedy && i > 0) init = tr->noise(rng);
      std::optional<int> label = a.label;
      if (!label && labels > 0) label = static_cast<int>(i % labels);
      auto t = sample_sequence(tr->models().policy(), init, rng, greedy ? DecodeMode::greedy : DecodeMode::sample,
                               max_len, label);
      out << vocab.decode(t.sentence) << '\n';
    }
  } else if (a.mode == "style") {
    if (labels == 0) throw ContractError("style mode needs a style-trained checkpoint");
    if (!a.label) throw ContractError("style mode needs --label");
    if (a.input.empty()) throw ContractError("style mode needs --input");
    for (const auto& line : read_lines(a.input)) {
      out << vocab.decode(tr->transfer(encode_known(vocab, line, max_len), *a.label)) << '\n';
    }
  } else {
    throw ContractError("unknown mode " + a.mode);
  }
  emit(a.out, out.str());
  return kExitOk;
}

int cmd_eval(const EvalArgs& a) {
  auto sample_lines = read_lines(a.samples);
  auto reference_lines = read_lines(a.references);
  std::vector<std::string> all(sample_lines);
  all.insert(all.end(), reference_lines.begin(), reference_lines.end());
  Vocabulary vocab = Vocabulary::build(all);
  auto encode = [&](const std::vector<std::string>& lines) {
    std::vector<Sentence> out;
    for (const auto& l : lines) out.push_back(vocab.encode(l, l.size() + 2));
    return out;
  };
  auto samples = encode(sample_lines), references = encode(reference_lines);
  BleuReport report = evaluate_bleu(strip_eos(samples), strip_eos(references), true);
  if (!a.grammar.empty()) {
    GrammarSpec g = resolve_grammar(a.grammar);
    std::size_t ok = 0;
    for (const auto& s : samples) ok += grammar_validity(g, vocab.decode_words(s));
    report.validity = static_cast<double>(ok) / static_cast<double>(samples.size());
  }
  std::cout << report.table();
  if (!a.out.empty()) emit(a.out, report.to_json().dump(2) + "\n");
  return kExitOk;
}

int cmd_inspect_rewards(const InspectArgs& a) {
  auto tr = load_checkpoint(a.checkpoint);
  const auto& vocab = tr->data().vocab;
  auto encode = [&](const std::string& line) {
    std::istringstream words(line);
    std::size_t n = 0;
    for (std::string w; words >> w;) ++n;
    return encode_known(vocab, line, n + 1);
  };
  Sentence s = encode(a.sentence);
  std::optional<Sentence> plan;
  if (!a.plan.empty()) plan = encode(a.plan);
  auto r = tr->inspect_rewards(s, a.seed, plan);

  std::ostringstream csv;
  csv << "t,r_g\n";
  char buf[96];
  for (std::size_t t = 0; t < r.size(); ++t) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", t + 1, r[t]);
    csv << buf;
  }
  std::ostringstream table;
  std::snprintf(buf, sizeof buf, "%4s  %-16s %10s\n", "t", "token", "r_g");
  table << buf;
  double sum = 0.0;
  for (std::size_t t = 0; t < r.size(); ++t) {
    std::snprintf(buf, sizeof buf, "%4zu  %-16s %10.4f\n", t + 1, vocab.token(s.tokens[t]).c_str(), r[t]);
    table << buf;
    sum += r[t];
  }
  std::snprintf(buf, sizeof buf, "mean r_g %.4f\n", sum / static_cast<double>(r.size()));
  table << buf;

  if (a.out.empty()) {
    std::cout << csv.str() << '\n' << table.str();
  } else {
    emit(a.out, csv.str());
    std::cout << table.str();
  }
  return kExitOk;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Guider-matched adversarial text generation"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Run MLE pretraining, adversarial training or style transfer");
  train->add_option("--config", ta.config, "Run config (JSON)")->required();
  train->add_option("--stage", ta.stage, "Stage to run")
      ->check(CLI::IsMember({"mle", "adversarial", "all", "style"}));
  train->add_option("--checkpoint", ta.checkpoint, "Pretrained checkpoint for the adversarial stage");
  train->add_option("--out-dir", ta.out_dir, "Output directory (overrides the config)");

  GenerateArgs ga;
  auto* generate = app.add_subcommand("generate", "Sample sentences from a checkpoint");
  generate->add_option("--checkpoint", ga.checkpoint)->required();
  generate->add_option("--num", ga.num, "Number of sentences");
  generate->add_option("--seed", ga.seed);
  generate->add_option("--mode", ga.mode)->check(CLI::IsMember({"sample", "greedy", "style"}));
  generate->add_option("--label", ga.label, "Target style label");
  generate->add_option("--input", ga.input, "Source sentences for style mode");
  generate->add_option("--out", ga.out, "Output file (default stdout)");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "BLEU, self-BLEU and F1-BLEU of a sample file");
  eval->add_option("--samples", ea.samples)->required();
  eval->add_option("--references", ea.references)->required();
  eval->add_option("--grammar", ea.grammar, "Grammar name or JSON for validity");
  eval->add_option("--out", ea.out, "Report JSON path");

  InspectArgs ia;
  auto* inspect = app.add_subcommand("inspect-rewards", "Per-token feature-matching rewards of a sentence");
  inspect->add_option("--checkpoint", ia.checkpoint)->required();
  inspect->add_option("--sentence", ia.sentence)->required();
  inspect->add_option("--seed", ia.seed, "Noise seed for the initial state");
  inspect->add_option("--plan", ia.plan, "Sentence whose encoding is the initial state (default: noise)");
  inspect->add_option("--out", ia.out, "CSV path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*train) return cmd_train(ta);
    if (*generate) return cmd_generate(ga);
    if (*eval) return cmd_eval(ea);
    if (*inspect) return cmd_inspect_rewards(ia);
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const FormatError& e) {
    std::cerr << "corrupt file: " << e.what() << '\n';
    return kExitUsage;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DimensionError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace gmg
