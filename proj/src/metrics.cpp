#include "gmg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "gmg/errors.hpp"

namespace gmg {

namespace {

using NGramCounts = std::map<Tokens, int>;

NGramCounts count_ngrams(std::span<const int> s, std::size_t n) {
  NGramCounts counts;
  if (s.size() < n) return counts;
  for (std::size_t i = 0; i + n <= s.size(); ++i) ++counts[Tokens(s.begin() + i, s.begin() + i + n)];
  return counts;
}

/// Closest length to c among `lengths`, preferring the shorter on ties.
std::size_t closest_length(std::size_t c, std::span<const std::size_t> lengths, std::size_t skip) {
  std::size_t best = 0;
  bool found = false;
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    if (i == skip) continue;
    std::size_t r = lengths[i];
    auto diff = [c](std::size_t x) { return x > c ? x - c : c - x; };
    if (!found || diff(r) < diff(best) || (diff(r) == diff(best) && r < best)) {
      best = r;
      found = true;
    }
  }
  return best;
}

/// Combines clipped counts into a BLEU score.
template <typename MaxRefCount>
double bleu_from(std::span<const int> cand, std::size_t ref_len, std::size_t k, MaxRefCount&& max_ref) {
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= k; ++n) {
    auto counts = count_ngrams(cand, n);
    std::size_t total = cand.size() >= n ? cand.size() - n + 1 : 0;
    std::size_t clipped = 0;
    for (const auto& [gram, cnt] : counts) clipped += static_cast<std::size_t>(std::min(cnt, max_ref(n, gram)));
    double p = (clipped == 0 || total == 0) ? kBleuEpsilon : static_cast<double>(clipped) / static_cast<double>(total);
    log_sum += std::log(p);
  }
  double bp = 1.0;
  const double c = static_cast<double>(cand.size());
  if (cand.size() < ref_len) bp = std::exp(1.0 - static_cast<double>(ref_len) / c);
  return bp * std::exp(log_sum / static_cast<double>(k));
}

/// Per n-gram maximum count over a reference set, plus the runner-up that
/// comes from a different reference (for leave-one-out).
struct RefEntry {
  int best = 0;
  std::size_t owner = std::numeric_limits<std::size_t>::max();
  int second = 0;
};

std::vector<std::map<Tokens, RefEntry>> index_references(std::span<const Tokens> refs, std::size_t k) {
  std::vector<std::map<Tokens, RefEntry>> index(k + 1);
  for (std::size_t r = 0; r < refs.size(); ++r) {
    for (std::size_t n = 1; n <= k; ++n) {
      for (const auto& [gram, cnt] : count_ngrams(refs[r], n)) {
        auto& e = index[n][gram];
        if (cnt > e.best) {
          e.second = e.best;
          e.best = cnt;
          e.owner = r;
        } else if (cnt > e.second) {
          e.second = cnt;
        }
      }
    }
  }
  return index;
}

void require_nonempty(std::span<const int> s, const char* what) {
  if (s.empty()) throw ContractError(std::string(what) + " must be nonempty");
}

}  // namespace

double bleu(std::span<const int> candidate, std::span<const Tokens> references, std::size_t k) {
  if (k < 1) throw ContractError("bleu needs k >= 1");
  require_nonempty(candidate, "candidate");
  if (references.empty()) throw ContractError("bleu needs at least one reference");
  std::vector<std::size_t> lengths;
  for (const auto& r : references) lengths.push_back(r.size());
  auto max_ref = [&](std::size_t n, const Tokens& gram) {
    int best = 0;
    for (const auto& r : references) {
      int cnt = 0;
      if (r.size() >= n) {
        for (std::size_t i = 0; i + n <= r.size(); ++i) cnt += std::equal(gram.begin(), gram.end(), r.begin() + i);
      }
      best = std::max(best, cnt);
    }
    return best;
  };
  return bleu_from(candidate, closest_length(candidate.size(), lengths, lengths.size()), k, max_ref);
}

double test_bleu(std::span<const Tokens> samples, std::span<const Tokens> references, std::size_t k) {
  if (samples.empty() || references.empty()) throw ContractError("test_bleu needs samples and references");
  if (k < 1) throw ContractError("bleu needs k >= 1");
  auto index = index_references(references, k);
  std::vector<std::size_t> lengths;
  for (const auto& r : references) lengths.push_back(r.size());
  double total = 0.0;
  for (const auto& s : samples) {
    require_nonempty(s, "sample");
    auto max_ref = [&](std::size_t n, const Tokens& gram) {
      auto it = index[n].find(gram);
      return it == index[n].end() ? 0 : it->second.best;
    };
    total += bleu_from(s, closest_length(s.size(), lengths, lengths.size()), k, max_ref);
  }
  return total / static_cast<double>(samples.size());
}

double self_bleu(std::span<const Tokens> samples, std::size_t k) {
  if (samples.size() < 2) throw ContractError("self_bleu needs at least two samples");
  if (k < 1) throw ContractError("bleu needs k >= 1");
  auto index = index_references(samples, k);
  std::vector<std::size_t> lengths;
  for (const auto& r : samples) lengths.push_back(r.size());
  double total = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    require_nonempty(samples[i], "sample");
    auto max_ref = [&](std::size_t n, const Tokens& gram) {
      auto it = index[n].find(gram);
      if (it == index[n].end()) return 0;
      return it->second.owner == i ? it->second.second : it->second.best;
    };
    total += bleu_from(samples[i], closest_length(samples[i].size(), lengths, i), k, max_ref);
  }
  return total / static_cast<double>(samples.size());
}

double f1_bleu(double test, double self) {
  if (test < 0.0 || test > 1.0 || self < 0.0 || self > 1.0) throw ContractError("BLEU scores must lie in [0,1]");
  const double q = test, d = 1.0 - self;
  if (q + d == 0.0) return 0.0;
  return 2.0 * q * d / (q + d);
}

double unigram_precision(std::span<const int> candidate, std::span<const int> source) {
  if (candidate.empty()) return 0.0;
  auto cand = count_ngrams(candidate, 1);
  auto src = count_ngrams(source, 1);
  std::size_t clipped = 0;
  for (const auto& [gram, cnt] : cand) {
    auto it = src.find(gram);
    if (it != src.end()) clipped += static_cast<std::size_t>(std::min(cnt, it->second));
  }
  return static_cast<double>(clipped) / static_cast<double>(candidate.size());
}

double validity_rate(std::span<const Sentence> samples, const GrammarSpec& grammar, const Vocabulary& vocab) {
  if (samples.empty()) throw ContractError("validity_rate on no samples");
  std::size_t ok = 0;
  for (const auto& s : samples) ok += grammar_validity(grammar, vocab, s);
  return static_cast<double>(ok) / static_cast<double>(samples.size());
}

std::vector<Tokens> strip_eos(std::span<const Sentence> sentences) {
  std::vector<Tokens> out;
  out.reserve(sentences.size());
  for (const auto& s : sentences) {
    auto w = s.words();
    out.emplace_back(w.begin(), w.end());
  }
  return out;
}

nlohmann::json BleuReport::to_json() const {
  auto keyed = [](const std::map<int, double>& m) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : m) j[std::to_string(k)] = v;
    return j;
  };
  nlohmann::json j = {{"test_bleu", keyed(test_bleu)},
                      {"self_bleu", keyed(self_bleu)},
                      {"f1_bleu", keyed(f1_bleu)},
                      {"n_samples", n_samples},
                      {"n_references", n_references}};
  if (validity) j["validity"] = *validity;
  return j;
}

BleuReport BleuReport::from_json(const nlohmann::json& j) {
  auto keyed = [](const nlohmann::json& m) {
    std::map<int, double> out;
    for (const auto& [k, v] : m.items()) out[std::stoi(k)] = v.get<double>();
    return out;
  };
  BleuReport r;
  r.test_bleu = keyed(j.at("test_bleu"));
  r.self_bleu = keyed(j.at("self_bleu"));
  r.f1_bleu = keyed(j.at("f1_bleu"));
  r.n_samples = j.at("n_samples").get<std::size_t>();
  r.n_references = j.at("n_references").get<std::size_t>();
  if (j.contains("validity")) r.validity = j.at("validity").get<double>();
  return r;
}

std::string BleuReport::table() const {
  std::string out;
  char buf[64];
  auto row = [&](const char* name, const std::map<int, double>& m) {
    std::snprintf(buf, sizeof buf, "%-10s", name);
    out += buf;
    for (int k = 2; k <= 5; ++k) {
      auto it = m.find(k);
      if (it == m.end()) {
        std::snprintf(buf, sizeof buf, "%9s", "-");
      } else {
        std::snprintf(buf, sizeof buf, "%9.4f", it->second);
      }
      out += buf;
    }
    out += '\n';
  };
  std::snprintf(buf, sizeof buf, "%-10s%9s%9s%9s%9s\n", "metric", "BLEU-2", "BLEU-3", "BLEU-4", "BLEU-5");
  out += buf;
  row("test", test_bleu);
  row("self", self_bleu);
  row("F1", f1_bleu);
  if (validity) {
    std::snprintf(buf, sizeof buf, "%-10s%9.4f\n", "validity", *validity);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "samples=%zu references=%zu\n", n_samples, n_references);
  out += buf;
  return out;
}

BleuReport evaluate_bleu(std::span<const Tokens> samples, std::span<const Tokens> references, bool require_self) {
  BleuReport r;
  r.n_samples = samples.size();
  r.n_references = references.size();
  for (int k = 2; k <= 5; ++k) r.test_bleu[k] = test_bleu(samples, references, static_cast<std::size_t>(k));
  if (samples.size() < 2) {
    if (require_self) throw ContractError("self-BLEU needs at least two samples");
    return r;
  }
  for (int k = 2; k <= 4; ++k) {
    r.self_bleu[k] = self_bleu(samples, static_cast<std::size_t>(k));
    r.f1_bleu[k] = f1_bleu(r.test_bleu[k], r.self_bleu[k]);
  }
  return r;
}

}  // namespace gmg
