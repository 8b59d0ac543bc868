#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "gmg/corpus.hpp"

namespace gmg {

using Tokens = std::vector<int>;

/// Probability used in place of a zero n-gram precision.
inline constexpr double kBleuEpsilon = 1e-9;

/// Sentence BLEU with clipped n-gram precisions for n = 1..k, epsilon
/// smoothing of zero precisions and a brevity penalty against the closest
/// reference length (shorter reference on ties).
double bleu(std::span<const int> candidate, std::span<const Tokens> references, std::size_t k);

/// Mean of bleu(sample, references, k) over the samples.
double test_bleu(std::span<const Tokens> samples, std::span<const Tokens> references, std::size_t k);

/// Mean over samples of bleu(sample_i, all other samples, k).
double self_bleu(std::span<const Tokens> samples, std::size_t k);

/// Harmonic mean of quality q = test and diversity d = 1 - self; 0 when both
/// are 0.
double f1_bleu(double test, double self);

/// Clipped unigram precision of `candidate` against a single `source`.
double unigram_precision(std::span<const int> candidate, std::span<const int> source);

/// Fraction of samples accepted by the grammar.
double validity_rate(std::span<const Sentence> samples, const GrammarSpec& grammar, const Vocabulary& vocab);

/// Word ids of every sentence (EOS stripped).
std::vector<Tokens> strip_eos(std::span<const Sentence> sentences);

struct BleuReport {
  std::map<int, double> test_bleu;  // k = 2..5
  std::map<int, double> self_bleu;  // k = 2..4
  std::map<int, double> f1_bleu;    // k = 2..4
  std::size_t n_samples = 0;
  std::size_t n_references = 0;
  std::optional<double> validity;

  nlohmann::json to_json() const;
  static BleuReport from_json(const nlohmann::json& j);
  /// Fixed-width text table, one row per metric family.
  std::string table() const;
};

/// Full report. Self-BLEU (and F1) is skipped when fewer than two samples are
/// given unless `require_self` is set, in which case ContractError is thrown.
BleuReport evaluate_bleu(std::span<const Tokens> samples, std::span<const Tokens> references,
                         bool require_self = true);

}  // namespace gmg
