#include "gmg/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <unordered_set>

#include "gmg/errors.hpp"

namespace gmg {

using nlohmann::json;

namespace {

const std::vector<std::string> kSpecialTokens = {"<pad>", "<bos>", "<eos>", "<unk>"};

std::vector<std::string> split_whitespace(std::string_view line) {
  std::vector<std::string> out;
  std::istringstream in{std::string(line)};
  std::string word;
  while (in >> word) out.push_back(word);
  return out;
}

}  // namespace

std::span<const int> Sentence::words() const {
  std::span<const int> all(tokens);
  if (!all.empty() && all.back() == Vocabulary::kEos) return all.first(all.size() - 1);
  return all;
}

bool is_well_formed(const Sentence& s, std::size_t max_len) {
  if (s.tokens.empty() || s.tokens.size() > max_len) return false;
  if (s.tokens.back() != Vocabulary::kEos) return false;
  for (std::size_t i = 0; i + 1 < s.tokens.size(); ++i) {
    int t = s.tokens[i];
    if (t == Vocabulary::kEos || t == Vocabulary::kPad || t == Vocabulary::kBos) return false;
  }
  return true;
}

// Vocabulary -----------------------------------------------------------------

Vocabulary::Vocabulary() {
  for (const auto& tok : kSpecialTokens) {
    token_to_id_.emplace(tok, static_cast<int>(id_to_token_.size()));
    id_to_token_.push_back(tok);
  }
}

Vocabulary Vocabulary::build(std::span<const std::string> lines, std::size_t min_frequency) {
  std::vector<std::string> order;
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& line : lines) {
    for (auto& w : split_whitespace(line)) {
      if (counts[w]++ == 0) order.push_back(w);
    }
  }
  Vocabulary vocab;
  for (const auto& w : order) {
    if (counts[w] >= min_frequency) vocab.add(w);
  }
  return vocab;
}

Vocabulary Vocabulary::from_words(std::span<const std::string> words) {
  Vocabulary vocab;
  for (const auto& w : words) vocab.add(w);
  return vocab;
}

int Vocabulary::add(const std::string& token) {
  if (auto it = token_to_id_.find(token); it != token_to_id_.end()) return it->second;
  int id = static_cast<int>(id_to_token_.size());
  token_to_id_.emplace(token, id);
  id_to_token_.push_back(token);
  return id;
}

int Vocabulary::id(std::string_view token) const {
  auto it = token_to_id_.find(std::string(token));
  return it == token_to_id_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return token_to_id_.count(std::string(token)) > 0;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size()) return id_to_token_[kUnk];
  return id_to_token_[static_cast<std::size_t>(id)];
}

Sentence Vocabulary::encode(std::string_view line, std::size_t max_len) const {
  auto words = split_whitespace(line);
  return encode_words(words, max_len);
}

Sentence Vocabulary::encode_words(std::span<const std::string> words, std::size_t max_len) const {
  if (max_len < 1) throw ContractError("max_len must be at least 1");
  Sentence s;
  std::size_t keep = std::min(words.size(), max_len - 1);
  s.tokens.reserve(keep + 1);
  for (std::size_t i = 0; i < keep; ++i) s.tokens.push_back(id(words[i]));
  s.tokens.push_back(kEos);
  return s;
}

std::vector<std::string> Vocabulary::decode_words(const Sentence& s) const {
  std::vector<std::string> out;
  for (int t : s.tokens) {
    if (t == kEos) break;
    out.push_back(token(t));
  }
  return out;
}

std::string Vocabulary::decode(const Sentence& s) const {
  std::string out;
  for (const auto& w : decode_words(s)) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

json Vocabulary::to_json() const {
  json tokens = json::array();
  for (std::size_t i = kNumSpecials; i < id_to_token_.size(); ++i) tokens.push_back(id_to_token_[i]);
  return {{"tokens", tokens}, {"specials", {{"PAD", kPad}, {"BOS", kBos}, {"EOS", kEos}, {"UNK", kUnk}}}};
}

Vocabulary Vocabulary::from_json(const json& j) {
  if (!j.is_object() || !j.contains("tokens") || !j.at("tokens").is_array()) {
    throw FormatError("vocabulary JSON needs a \"tokens\" array");
  }
  if (j.contains("specials")) {
    const auto& sp = j.at("specials");
    if (sp.value("PAD", kPad) != kPad || sp.value("BOS", kBos) != kBos || sp.value("EOS", kEos) != kEos ||
        sp.value("UNK", kUnk) != kUnk) {
      throw FormatError("vocabulary specials must be PAD=0 BOS=1 EOS=2 UNK=3");
    }
  }
  Vocabulary vocab;
  for (const auto& tok : j.at("tokens")) {
    auto word = tok.get<std::string>();
    if (vocab.contains(word)) throw FormatError("duplicate vocabulary token: " + word);
    vocab.add(word);
  }
  return vocab;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_json().dump(2) << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw FormatError("bad vocabulary file " + path.string() + ": " + e.what());
  }
}

// Corpus I/O -----------------------------------------------------------------

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

std::vector<Sentence> load_corpus(const std::filesystem::path& path, Vocabulary& vocab, bool build_vocab,
                                  const CorpusOptions& options) {
  auto lines = read_lines(path);
  std::erase_if(lines, [](const std::string& l) { return split_whitespace(l).empty(); });
  if (lines.empty()) throw ContractError("empty corpus: " + path.string());
  if (build_vocab) vocab = Vocabulary::build(lines, options.min_frequency);
  std::vector<Sentence> out;
  out.reserve(lines.size());
  for (const auto& line : lines) out.push_back(vocab.encode(line, options.max_len));
  return out;
}

void write_corpus(const std::filesystem::path& path, std::span<const Sentence> sentences, const Vocabulary& vocab) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& s : sentences) out << vocab.decode(s) << '\n';
}

// Grammar --------------------------------------------------------------------

bool GrammarSpec::is_nonterminal(const std::string& symbol) const {
  if (style && style->nonterminal == symbol) return true;
  return std::any_of(rules.begin(), rules.end(), [&](const Production& p) { return p.lhs == symbol; });
}

void GrammarSpec::validate() const {
  if (rules.empty()) throw ContractError("grammar has no rules");
  if (!is_nonterminal(start)) throw ContractError("grammar start symbol has no production: " + start);
  for (const auto& r : rules) {
    if (r.rhs.empty()) throw ContractError("empty right-hand side for " + r.lhs);
    if (!(r.weight > 0.0)) throw ContractError("rule weights must be positive (" + r.lhs + ")");
  }
  if (style) {
    if (style->classes.size() < 2) throw ContractError("style lexicons need at least two classes");
    std::set<std::string> seen;
    for (const auto& cls : style->classes) {
      if (cls.empty()) throw ContractError("empty style lexicon");
      for (const auto& w : cls) {
        if (!seen.insert(w).second) throw ContractError("style lexicons overlap on " + w);
      }
    }
  }
}

std::vector<std::string> GrammarSpec::terminals() const {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (const auto& r : rules) {
    for (const auto& s : r.rhs) {
      if (!is_nonterminal(s) && seen.insert(s).second) out.push_back(s);
    }
  }
  if (style) {
    for (const auto& cls : style->classes)
      for (const auto& w : cls)
        if (seen.insert(w).second) out.push_back(w);
  }
  return out;
}

json GrammarSpec::to_json() const {
  json rs = json::array();
  for (const auto& r : rules) rs.push_back({{"lhs", r.lhs}, {"rhs", r.rhs}, {"weight", r.weight}});
  json j = {{"start", start}, {"rules", rs}};
  if (style) j["style_lexicons"] = {{"nonterminal", style->nonterminal}, {"classes", style->classes}};
  return j;
}

GrammarSpec GrammarSpec::from_json(const json& j) {
  GrammarSpec g;
  try {
    for (const auto& r : j.at("rules")) {
      g.rules.push_back({r.at("lhs").get<std::string>(), r.at("rhs").get<std::vector<std::string>>(),
                         r.value("weight", 1.0)});
    }
    if (j.contains("style_lexicons") && !j.at("style_lexicons").is_null()) {
      const auto& s = j.at("style_lexicons");
      g.style = StyleLexicons{s.at("nonterminal").get<std::string>(),
                              s.at("classes").get<std::vector<std::vector<std::string>>>()};
    }
    g.start = j.contains("start") ? j.at("start").get<std::string>() : std::string();
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad grammar JSON: ") + e.what());
  }
  if (g.start.empty() && !g.rules.empty()) g.start = g.rules.front().lhs;
  g.validate();
  return g;
}

GrammarSpec GrammarSpec::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw FormatError("bad grammar file " + path.string() + ": " + e.what());
  }
}

void GrammarSpec::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_json().dump(2) << '\n';
}

Vocabulary grammar_vocabulary(const GrammarSpec& spec) {
  auto words = spec.terminals();
  return Vocabulary::from_words(words);
}

namespace {

class Expander {
 public:
  Expander(const GrammarSpec& spec, std::mt19937_64& rng, std::size_t limit, int label)
      : spec_(spec), rng_(rng), limit_(limit), label_(label) {
    for (std::size_t i = 0; i < spec.rules.size(); ++i) by_lhs_[spec.rules[i].lhs].push_back(i);
  }

  bool expand(const std::string& symbol, std::vector<std::string>& out, int depth) {
    if (depth > 64 || out.size() > limit_) return false;
    if (spec_.style && symbol == spec_.style->nonterminal) {
      const auto& cls = spec_.style->classes.at(static_cast<std::size_t>(label_));
      std::uniform_int_distribution<std::size_t> pick(0, cls.size() - 1);
      out.push_back(cls[pick(rng_)]);
      return out.size() <= limit_;
    }
    auto it = by_lhs_.find(symbol);
    if (it == by_lhs_.end()) {
      out.push_back(symbol);
      return out.size() <= limit_;
    }
    const auto& options = it->second;
    std::vector<double> weights;
    weights.reserve(options.size());
    for (auto idx : options) weights.push_back(spec_.rules[idx].weight);
    std::discrete_distribution<std::size_t> choose(weights.begin(), weights.end());
    const auto& rule = spec_.rules[options[choose(rng_)]];
    for (const auto& s : rule.rhs) {
      if (!expand(s, out, depth + 1)) return false;
    }
    return true;
  }

 private:
  const GrammarSpec& spec_;
  std::mt19937_64& rng_;
  std::size_t limit_;
  int label_;
  std::unordered_map<std::string, std::vector<std::size_t>> by_lhs_;
};

std::vector<std::string> sample_one(const GrammarSpec& spec, std::mt19937_64& rng, std::size_t max_len, int label) {
  if (max_len < 2) throw ContractError("max_len must leave room for a word and EOS");
  Expander expander(spec, rng, max_len - 1, label);
  for (int attempt = 0; attempt < 100; ++attempt) {
    std::vector<std::string> words;
    if (expander.expand(spec.start, words, 0) && !words.empty()) return words;
  }
  throw ContractError("grammar failed to produce a sentence within max_len after 100 attempts");
}

}  // namespace

std::vector<std::vector<std::string>> sample_words(const GrammarSpec& spec, std::size_t n, std::uint64_t seed,
                                                   std::size_t max_len, int label) {
  if (n < 1) throw ContractError("sample_grammar needs n >= 1");
  spec.validate();
  std::mt19937_64 rng(seed);
  std::vector<std::vector<std::string>> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    int l = label;
    if (spec.style && l < 0) {
      std::uniform_int_distribution<int> coin(0, static_cast<int>(spec.num_styles()) - 1);
      l = coin(rng);
    }
    if (spec.style && static_cast<std::size_t>(l) >= spec.num_styles()) throw ContractError("style label out of range");
    out.push_back(sample_one(spec, rng, max_len, l));
  }
  return out;
}

std::vector<Sentence> sample_grammar(const GrammarSpec& spec, const Vocabulary& vocab, std::size_t n,
                                     std::uint64_t seed, std::size_t max_len) {
  auto words = sample_words(spec, n, seed, max_len);
  std::vector<Sentence> out;
  out.reserve(words.size());
  for (const auto& w : words) out.push_back(vocab.encode_words(w, max_len));
  return out;
}

std::vector<LabeledSentence> sample_labeled(const GrammarSpec& spec, const Vocabulary& vocab, std::size_t n,
                                            std::uint64_t seed, std::size_t max_len) {
  if (!spec.style) throw ContractError("labeled sampling needs a grammar with style lexicons");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> coin(0, static_cast<int>(spec.num_styles()) - 1);
  std::vector<LabeledSentence> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    int label = coin(rng);
    auto words = sample_one(spec, rng, max_len, label);
    out.push_back({vocab.encode_words(words, max_len), label});
  }
  return out;
}

// Earley recognizer -----------------------------------------------------------

namespace {

struct CompiledGrammar {
  std::unordered_map<std::string, int> symbol_ids;
  std::vector<bool> nonterminal;
  std::vector<int> lhs;                // per rule
  std::vector<std::vector<int>> rhs;   // per rule
  std::vector<std::vector<int>> rules_for;  // per symbol
  int start_rule = -1;

  int intern(const std::string& s) {
    auto [it, inserted] = symbol_ids.emplace(s, static_cast<int>(nonterminal.size()));
    if (inserted) {
      nonterminal.push_back(false);
      rules_for.emplace_back();
    }
    return it->second;
  }

  void add_rule(int l, std::vector<int> r) {
    nonterminal[static_cast<std::size_t>(l)] = true;
    rules_for[static_cast<std::size_t>(l)].push_back(static_cast<int>(lhs.size()));
    lhs.push_back(l);
    rhs.push_back(std::move(r));
  }

  explicit CompiledGrammar(const GrammarSpec& spec) {
    for (const auto& p : spec.rules) {
      int l = intern(p.lhs);
      std::vector<int> r;
      for (const auto& s : p.rhs) r.push_back(intern(s));
      add_rule(l, std::move(r));
    }
    if (spec.style) {
      int l = intern(spec.style->nonterminal);
      for (const auto& cls : spec.style->classes)
        for (const auto& w : cls) add_rule(l, {intern(w)});
    }
    int goal = intern("\x01goal");
    start_rule = static_cast<int>(lhs.size());
    add_rule(goal, {intern(spec.start)});
  }
};

}  // namespace

bool grammar_validity(const GrammarSpec& spec, std::span<const std::string> words) {
  if (words.empty()) return false;
  CompiledGrammar g(spec);
  std::vector<int> input;
  input.reserve(words.size());
  for (const auto& w : words) {
    auto it = g.symbol_ids.find(w);
    if (it == g.symbol_ids.end() || g.nonterminal[static_cast<std::size_t>(it->second)]) return false;
    input.push_back(it->second);
  }
  const std::size_t n = input.size();

  struct Item {
    int rule;
    int dot;
    int origin;
  };
  std::vector<std::vector<Item>> chart(n + 1);
  std::vector<std::unordered_set<std::uint64_t>> seen(n + 1);
  auto add = [&](std::size_t pos, Item it) {
    std::uint64_t key = (static_cast<std::uint64_t>(it.rule) << 40) | (static_cast<std::uint64_t>(it.dot) << 24) |
                        static_cast<std::uint64_t>(it.origin);
    if (seen[pos].insert(key).second) chart[pos].push_back(it);
  };

  add(0, {g.start_rule, 0, 0});
  for (std::size_t i = 0; i <= n; ++i) {
    for (std::size_t k = 0; k < chart[i].size(); ++k) {
      Item it = chart[i][k];
      const auto& body = g.rhs[static_cast<std::size_t>(it.rule)];
      if (static_cast<std::size_t>(it.dot) < body.size()) {
        int next = body[static_cast<std::size_t>(it.dot)];
        if (g.nonterminal[static_cast<std::size_t>(next)]) {
          for (int r : g.rules_for[static_cast<std::size_t>(next)]) add(i, {r, 0, static_cast<int>(i)});
        } else if (i < n && input[i] == next) {
          add(i + 1, {it.rule, it.dot + 1, it.origin});
        }
      } else {
        int done = g.lhs[static_cast<std::size_t>(it.rule)];
        auto& parents = chart[static_cast<std::size_t>(it.origin)];
        for (std::size_t p = 0; p < parents.size(); ++p) {
          Item par = parents[p];
          const auto& pb = g.rhs[static_cast<std::size_t>(par.rule)];
          if (static_cast<std::size_t>(par.dot) < pb.size() && pb[static_cast<std::size_t>(par.dot)] == done) {
            add(i, {par.rule, par.dot + 1, par.origin});
          }
        }
      }
    }
  }
  for (const auto& it : chart[n]) {
    if (it.rule == g.start_rule && it.dot == 1 && it.origin == 0) return true;
  }
  return false;
}

bool grammar_validity(const GrammarSpec& spec, const Vocabulary& vocab, const Sentence& s) {
  std::vector<std::string> words;
  for (int t : s.words()) {
    if (t < Vocabulary::kNumSpecials) return false;
    words.push_back(vocab.token(t));
  }
  return grammar_validity(spec, words);
}

int oracle_style(const GrammarSpec& spec, std::span<const std::string> words) {
  if (!spec.style) throw ContractError("oracle_style needs style lexicons");
  const auto& classes = spec.style->classes;
  std::vector<int> counts(classes.size(), 0);
  for (const auto& w : words) {
    for (std::size_t c = 0; c < classes.size(); ++c) {
      if (std::find(classes[c].begin(), classes[c].end(), w) != classes[c].end()) ++counts[c];
    }
  }
  auto best = std::max_element(counts.begin(), counts.end());
  if (*best == 0 || std::count(counts.begin(), counts.end(), *best) > 1) return -1;
  return static_cast<int>(best - counts.begin());
}

// Built-in grammars -----------------------------------------------------------

namespace {

void lexical(GrammarSpec& g, const std::string& lhs, std::initializer_list<const char*> words) {
  for (const char* w : words) g.rules.push_back({lhs, {w}, 1.0});
}

}  // namespace

GrammarSpec desk_grammar() {
  GrammarSpec g;
  g.start = "S";
  g.rules = {
      {"S", {"NP_SG", "VP_SG", "."}, 1.0},
      {"S", {"NP_PL", "VP_PL", "."}, 1.0},
      {"NP_SG", {"DET_SG", "N_SG"}, 2.0},
      {"NP_SG", {"DET_SG", "ADJ", "N_SG"}, 2.0},
      {"NP_SG", {"DET_SG", "ADJ", "ADJ", "N_SG"}, 1.0},
      {"NP_PL", {"DET_PL", "N_PL"}, 2.0},
      {"NP_PL", {"DET_PL", "ADJ", "N_PL"}, 2.0},
      {"NP_PL", {"DET_PL", "ADJ", "ADJ", "N_PL"}, 1.0},
      {"VP_SG", {"V_SG", "OBJ"}, 2.0},
      {"VP_SG", {"V_SG", "OBJ", "PP"}, 1.0},
      {"VP_PL", {"V_PL", "OBJ"}, 2.0},
      {"VP_PL", {"V_PL", "OBJ", "PP"}, 1.0},
      {"OBJ", {"DET_SG", "N_SG"}, 2.0},
      {"OBJ", {"DET_SG", "ADJ", "N_SG"}, 1.0},
      {"OBJ", {"DET_PL", "N_PL"}, 2.0},
      {"OBJ", {"DET_PL", "ADJ", "N_PL"}, 1.0},
      {"PP", {"P", "DET_SG", "N_SG"}, 1.0},
      {"PP", {"P", "DET_PL", "N_PL"}, 1.0},
  };
  lexical(g, "DET_SG", {"a", "the", "this", "that", "every"});
  lexical(g, "DET_PL", {"the", "these", "those", "some", "many"});
  lexical(g, "N_SG", {"dog", "cat", "bird", "child", "farmer", "teacher", "doctor", "student", "horse", "girl"});
  lexical(g, "N_PL",
          {"dogs", "cats", "birds", "children", "farmers", "teachers", "doctors", "students", "horses", "girls"});
  lexical(g, "V_SG", {"sees", "likes", "chases", "feeds", "helps", "finds", "follows", "watches"});
  lexical(g, "V_PL", {"see", "like", "chase", "feed", "help", "find", "follow", "watch"});
  lexical(g, "ADJ", {"big", "small", "old", "young", "happy", "quiet", "red", "lazy"});
  lexical(g, "P", {"near", "with", "behind", "under", "beside"});
  return g;
}

GrammarSpec deterministic_grammar() {
  GrammarSpec g;
  g.start = "S";
  g.rules = {{"S", {"a", "b"}, 1.0}};
  return g;
}

GrammarSpec style_grammar() {
  GrammarSpec g;
  g.start = "S";
  g.rules = {
      {"S", {"DET_SG", "SADJ", "N_SG", "V_SG", "OBJ", "."}, 1.0},
      {"S", {"DET_PL", "SADJ", "N_PL", "V_PL", "OBJ", "."}, 1.0},
      {"OBJ", {"DET_SG", "N_SG"}, 1.0},
      {"OBJ", {"DET_PL", "N_PL"}, 1.0},
  };
  lexical(g, "DET_SG", {"a", "the", "this"});
  lexical(g, "DET_PL", {"the", "these", "some"});
  lexical(g, "N_SG", {"dog", "cat", "child", "teacher", "farmer", "waiter"});
  lexical(g, "N_PL", {"dogs", "cats", "children", "teachers", "farmers", "waiters"});
  lexical(g, "V_SG", {"sees", "helps", "meets", "calls"});
  lexical(g, "V_PL", {"see", "help", "meet", "call"});
  g.style = StyleLexicons{"SADJ",
                          {{"good", "nice", "kind", "friendly", "lovely"}, {"bad", "rude", "cruel", "nasty", "awful"}}};
  return g;
}

}  // namespace gmg
