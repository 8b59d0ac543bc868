#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "gmg/corpus.hpp"
#include "gmg/errors.hpp"

using namespace gmg;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name, const std::string& contents) {
  auto dir = fs::temp_directory_path() / "gmg_corpus_test";
  fs::create_directories(dir);
  auto path = dir / name;
  std::ofstream(path) << contents;
  return path;
}

}  // namespace

TEST(Vocabulary, BuildFromSingleLine) {
  auto path = temp_file("aba.txt", "a b a\n");
  Vocabulary vocab;
  auto corpus = load_corpus(path, vocab, true, {});
  EXPECT_EQ(vocab.size(), 6u);
  ASSERT_EQ(corpus.size(), 1u);
  EXPECT_EQ(corpus[0].tokens, (std::vector<int>{vocab.id("a"), vocab.id("b"), vocab.id("a"), Vocabulary::kEos}));
}

TEST(Vocabulary, FrozenVocabMapsUnknownToUnk) {
  auto path = temp_file("oov.txt", "a zebra\n");
  Vocabulary vocab = Vocabulary::from_words(std::vector<std::string>{"a"});
  auto corpus = load_corpus(path, vocab, false, {});
  EXPECT_EQ(corpus[0].tokens, (std::vector<int>{vocab.id("a"), Vocabulary::kUnk, Vocabulary::kEos}));
  EXPECT_EQ(vocab.size(), 5u);
}

TEST(Vocabulary, MinFrequencyCutoff) {
  std::vector<std::string> lines{"a b a", "c a"};
  auto vocab = Vocabulary::build(lines, 2);
  EXPECT_TRUE(vocab.contains("a"));
  EXPECT_FALSE(vocab.contains("b"));
}

TEST(Vocabulary, TruncatesOverlongLines) {
  Vocabulary vocab = Vocabulary::from_words(std::vector<std::string>{"x"});
  auto s = vocab.encode("x x x x x x", 4);
  EXPECT_EQ(s.tokens.size(), 4u);
  EXPECT_EQ(s.tokens.back(), Vocabulary::kEos);
  EXPECT_TRUE(is_well_formed(s, 4));
}

TEST(Vocabulary, JsonRoundTrip) {
  auto vocab = grammar_vocabulary(desk_grammar());
  auto j = vocab.to_json();
  EXPECT_EQ(j["tokens"][0], vocab.token(4));
  EXPECT_EQ(Vocabulary::from_json(j), vocab);
  auto path = fs::temp_directory_path() / "gmg_corpus_test" / "vocab.json";
  vocab.save(path);
  EXPECT_EQ(Vocabulary::load(path), vocab);
}

TEST(Corpus, EmptyAndMissingFiles) {
  Vocabulary vocab;
  EXPECT_THROW(load_corpus(temp_file("empty.txt", "\n\n"), vocab, true, {}), ContractError);
  EXPECT_THROW(load_corpus("/nonexistent/corpus.txt", vocab, true, {}), IoError);
}

TEST(Corpus, WriteLoadRoundTripOnGrammarSamples) {
  auto spec = desk_grammar();
  auto vocab = grammar_vocabulary(spec);
  auto samples = sample_grammar(spec, vocab, 1000, 42, 16);
  auto path = fs::temp_directory_path() / "gmg_corpus_test" / "samples.txt";
  write_corpus(path, samples, vocab);
  auto loaded = load_corpus(path, vocab, false, {16, 1});
  EXPECT_EQ(loaded, samples);
  EXPECT_EQ(load_corpus(path, vocab, false, {16, 1}), loaded);
  for (const auto& s : samples) {
    EXPECT_EQ(vocab.encode(vocab.decode(s), 16), s);
  }
}

TEST(Grammar, DeterministicGrammar) {
  auto spec = deterministic_grammar();
  auto vocab = grammar_vocabulary(spec);
  for (const auto& s : sample_grammar(spec, vocab, 50, 1, 8)) EXPECT_EQ(vocab.decode(s), "a b");
}

TEST(Grammar, EquiprobableRulesWithinThreeSigma) {
  GrammarSpec spec;
  spec.start = "S";
  spec.rules = {{"S", {"x"}, 1.0}, {"S", {"y"}, 1.0}};
  const std::size_t n = 10000;
  auto words = sample_words(spec, n, 99, 4);
  std::size_t xs = 0;
  for (const auto& w : words) xs += w[0] == "x";
  double sigma = std::sqrt(n * 0.25);
  EXPECT_LT(std::abs(static_cast<double>(xs) - n * 0.5), 3 * sigma);
}

TEST(Grammar, SameSeedSameSamples) {
  auto spec = desk_grammar();
  auto vocab = grammar_vocabulary(spec);
  EXPECT_EQ(sample_grammar(spec, vocab, 100, 5, 16), sample_grammar(spec, vocab, 100, 5, 16));
  EXPECT_NE(sample_grammar(spec, vocab, 100, 5, 16), sample_grammar(spec, vocab, 100, 6, 16));
}

TEST(Grammar, UnboundedRecursionFailsAfterRetries) {
  GrammarSpec spec;
  spec.start = "S";
  spec.rules = {{"S", {"S", "a"}, 1.0}};
  EXPECT_THROW(sample_words(spec, 1, 0, 10), ContractError);
}

TEST(Grammar, RejectsInvalidSpecs) {
  GrammarSpec spec;
  spec.start = "S";
  spec.rules = {{"S", {"a"}, 0.0}};
  EXPECT_THROW(spec.validate(), ContractError);
  spec.rules = {{"S", {}, 1.0}};
  EXPECT_THROW(spec.validate(), ContractError);
  spec.rules = {{"T", {"a"}, 1.0}};
  EXPECT_THROW(spec.validate(), ContractError);
}

TEST(Grammar, SamplesAlwaysParse) {
  for (const auto& spec : {desk_grammar(), style_grammar()}) {
    auto vocab = grammar_vocabulary(spec);
    for (const auto& s : sample_grammar(spec, vocab, 1000, 7, 16)) {
      ASSERT_TRUE(grammar_validity(spec, vocab, s)) << vocab.decode(s);
    }
  }
}

TEST(Grammar, DeskGrammarShape) {
  auto spec = desk_grammar();
  auto vocab = grammar_vocabulary(spec);
  EXPECT_EQ(vocab.size() - Vocabulary::kNumSpecials, 59u);
  std::size_t lo = 100, hi = 0;
  for (const auto& w : sample_words(spec, 2000, 3, 16)) {
    lo = std::min(lo, w.size());
    hi = std::max(hi, w.size());
  }
  EXPECT_GE(lo, 4u);
  EXPECT_LE(hi, 12u);
}

TEST(Grammar, ShuffledAndEmptySentencesAreRejected) {
  auto spec = desk_grammar();
  auto vocab = grammar_vocabulary(spec);
  std::mt19937_64 rng(4);
  std::size_t rejected = 0, total = 0;
  for (auto words : sample_words(spec, 200, 8, 16)) {
    auto original = words;
    std::shuffle(words.begin(), words.end(), rng);
    if (words == original) continue;
    ++total;
    rejected += !grammar_validity(spec, words);
  }
  // A shuffle occasionally lands on another valid order (swapping two nouns).
  EXPECT_GT(rejected, total * 9 / 10);
  EXPECT_FALSE(grammar_validity(spec, vocab, Sentence{{Vocabulary::kEos}}));
  EXPECT_FALSE(grammar_validity(spec, std::vector<std::string>{"the", "dog", "sees", "the", "cat"}));
  EXPECT_TRUE(grammar_validity(spec, std::vector<std::string>{"the", "dog", "sees", "the", "cat", "."}));
  EXPECT_FALSE(grammar_validity(spec, std::vector<std::string>{"the", "dog", "see", "the", "cat", "."}));
}

TEST(Grammar, JsonRoundTrip) {
  auto spec = style_grammar();
  auto back = GrammarSpec::from_json(spec.to_json());
  EXPECT_EQ(back.to_json(), spec.to_json());
  auto path = fs::temp_directory_path() / "gmg_corpus_test" / "grammar.json";
  spec.save(path);
  EXPECT_EQ(GrammarSpec::load(path).to_json(), spec.to_json());
}

TEST(Grammar, StyleSamplingAndOracle) {
  auto spec = style_grammar();
  auto vocab = grammar_vocabulary(spec);
  auto labeled = sample_labeled(spec, vocab, 300, 2, 16);
  std::size_t positives = 0;
  for (const auto& ls : labeled) {
    auto words = vocab.decode_words(ls.sentence);
    EXPECT_EQ(oracle_style(spec, words), ls.label);
    positives += ls.label == 0;
  }
  EXPECT_GT(positives, 100u);
  EXPECT_LT(positives, 200u);
  EXPECT_EQ(oracle_style(spec, std::vector<std::string>{"the", "dog"}), -1);
}
