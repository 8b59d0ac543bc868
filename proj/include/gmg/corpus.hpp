#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace gmg {

/// Token id sequence terminated by exactly one EOS.
struct Sentence {
  std::vector<int> tokens;

  std::size_t length() const { return tokens.size(); }
  /// Tokens without the trailing EOS.
  std::span<const int> words() const;
  bool operator==(const Sentence&) const = default;
};

struct LabeledSentence {
  Sentence sentence;
  int label = 0;
};

/// Checks the Sentence invariants: ends with EOS exactly once, no PAD/BOS
/// before it, 1 <= length <= max_len.
bool is_well_formed(const Sentence& s, std::size_t max_len);

/// Bidirectional token <-> id map. Ids 0..3 are the specials.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kNumSpecials = 4;

  Vocabulary();

  /// Vocabulary over whitespace tokens of `lines`, in first-occurrence order,
  /// keeping tokens seen at least `min_frequency` times.
  static Vocabulary build(std::span<const std::string> lines, std::size_t min_frequency = 1);
  static Vocabulary from_words(std::span<const std::string> words);

  /// Adds a token if absent and returns its id.
  int add(const std::string& token);
  /// Id of a token, kUnk when absent.
  int id(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(int id) const;
  std::size_t size() const { return id_to_token_.size(); }

  /// Whitespace-tokenizes `line`; overlong input is truncated to max_len-1
  /// words before the EOS is appended.
  Sentence encode(std::string_view line, std::size_t max_len) const;
  Sentence encode_words(std::span<const std::string> words, std::size_t max_len) const;
  /// Words before the EOS joined by single spaces.
  std::string decode(const Sentence& s) const;
  std::vector<std::string> decode_words(const Sentence& s) const;

  /// {"tokens": [...non-special...], "specials": {"PAD":0,...}}.
  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  bool operator==(const Vocabulary& other) const { return id_to_token_ == other.id_to_token_; }

 private:
  std::unordered_map<std::string, int> token_to_id_;
  std::vector<std::string> id_to_token_;
};

struct CorpusOptions {
  std::size_t max_len = 25;
  std::size_t min_frequency = 1;
};

/// Reads one sentence per line. When `build_vocab` is set, `vocab` is
/// replaced by a vocabulary built from the file; otherwise it is used frozen
/// and unknown words become UNK. Blank lines are skipped.
std::vector<Sentence> load_corpus(const std::filesystem::path& path, Vocabulary& vocab, bool build_vocab,
                                  const CorpusOptions& options);
void write_corpus(const std::filesystem::path& path, std::span<const Sentence> sentences, const Vocabulary& vocab);
std::vector<std::string> read_lines(const std::filesystem::path& path);

// Grammar -------------------------------------------------------------------

struct Production {
  std::string lhs;
  std::vector<std::string> rhs;
  double weight = 1.0;
};

/// Two (or more) disjoint word classes reachable through one nonterminal.
/// Sampling with label l expands `nonterminal` uniformly into classes[l].
struct StyleLexicons {
  std::string nonterminal;
  std::vector<std::vector<std::string>> classes;
};

/// Weighted context-free grammar. Symbols that appear as a left-hand side are
/// nonterminals; every other symbol is a terminal word.
struct GrammarSpec {
  std::string start;
  std::vector<Production> rules;
  std::optional<StyleLexicons> style;

  /// Throws ContractError unless every nonterminal has a production, every
  /// weight is positive, no right-hand side is empty and lexicons are disjoint.
  void validate() const;
  bool is_nonterminal(const std::string& symbol) const;
  /// Terminals in order of first appearance (rules first, then lexicons).
  std::vector<std::string> terminals() const;
  std::size_t num_styles() const { return style ? style->classes.size() : 0; }

  nlohmann::json to_json() const;
  static GrammarSpec from_json(const nlohmann::json& j);
  static GrammarSpec load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

/// Vocabulary holding exactly the grammar's terminals.
Vocabulary grammar_vocabulary(const GrammarSpec& spec);

/// Draws `n` word sequences. `label` selects the style class (required when
/// the grammar has lexicons, -1 = uniform random label per sentence). A draw
/// longer than max_len-1 words is retried; 100 failed attempts for one
/// sentence raise ContractError.
std::vector<std::vector<std::string>> sample_words(const GrammarSpec& spec, std::size_t n, std::uint64_t seed,
                                                   std::size_t max_len, int label = -1);
std::vector<Sentence> sample_grammar(const GrammarSpec& spec, const Vocabulary& vocab, std::size_t n,
                                     std::uint64_t seed, std::size_t max_len);
/// Balanced-at-random labeled samples from a grammar with style lexicons.
std::vector<LabeledSentence> sample_labeled(const GrammarSpec& spec, const Vocabulary& vocab, std::size_t n,
                                            std::uint64_t seed, std::size_t max_len);

/// Earley membership test of the word sequence (EOS stripped). Specials, empty
/// input and unknown words are never derivable.
bool grammar_validity(const GrammarSpec& spec, std::span<const std::string> words);
bool grammar_validity(const GrammarSpec& spec, const Vocabulary& vocab, const Sentence& s);

/// Lexicon-count style classifier: the class whose words occur most often,
/// -1 when tied or when no lexicon word occurs.
int oracle_style(const GrammarSpec& spec, std::span<const std::string> words);

// Built-in desk-scale grammars ------------------------------------------------

/// Subject-verb-object sentences with number agreement, optional adjectives and
/// prepositional phrases; 59 words, 6 to 12 tokens.
GrammarSpec desk_grammar();
/// S -> "a b".
GrammarSpec deterministic_grammar();
/// Fixed-shape sentences whose subject carries one adjective from one of two
/// disjoint sentiment lexicons.
GrammarSpec style_grammar();

}  // namespace gmg
