// Acceptance suite: one PASS/FAIL line per criterion.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "gmg/checkpoint.hpp"
#include "gmg/errors.hpp"
#include "gmg/trainer.hpp"
#include "support/fd_check.hpp"

using namespace gmg;
using gmg::testing::check_gradients;
using gmg::testing::random_tensor;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Clock {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

int failures = 0;

void report(int id, const char* name, Outcome o, double seconds) {
  if (!o.pass) ++failures;
  std::printf("%s [%d] %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), seconds);
  std::fflush(stdout);
}

void run(int id, const char* name, const std::function<Outcome()>& body) {
  Clock clock;
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  report(id, name, o, clock.seconds());
}

// 1. Gradient correctness --------------------------------------------------------

constexpr int kFdCases = 100;
constexpr double kFdTolerance = 1e-4;

ModelDims fd_dims() {
  ModelDims d;
  d.embed = 4;
  d.conv = 3;
  d.feature = 5;
  d.hidden = 4;
  d.max_len = 6;
  return d;
}

constexpr std::size_t kFdVocab = 9;

std::vector<Tensor*> pointers(const ParameterList& list) {
  std::vector<Tensor*> out;
  for (const auto& p : list) out.push_back(p.tensor);
  return out;
}

std::vector<int> random_words(std::mt19937_64& rng, std::size_t n) {
  std::uniform_int_distribution<int> word(Vocabulary::kNumSpecials, kFdVocab - 1);
  std::vector<int> out(n);
  for (auto& w : out) w = word(rng);
  return out;
}

void jitter_biases(const ParameterList& list, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (const auto& p : list) {
    if (p.name.ends_with(".bias")) {
      for (auto& v : p.tensor->mutable_values()) v += u(rng);
    }
  }
}

/// One random case: the tensors to perturb and the scalar loss over them.
struct FdCase {
  std::vector<Tensor> owned;
  std::vector<Tensor*> extra;
  std::function<Var(Tape&, std::vector<Tensor>&)> loss;
};

using CaseMaker = std::function<FdCase(std::mt19937_64&, int rep)>;

FdCase op_case(std::vector<Tensor> inputs, std::function<Var(Tape&, std::vector<Tensor>&)> loss) {
  return {std::move(inputs), {}, std::move(loss)};
}

std::vector<std::pair<std::string, CaseMaker>> fd_suite() {
  std::vector<std::pair<std::string, CaseMaker>> s;
  auto R = [](std::mt19937_64& rng, Shape shape, double bound = 1.0) { return random_tensor(std::move(shape), rng, bound); };

  s.emplace_back("matmul", [=](std::mt19937_64& g, int) {
    Tensor w = R(g, {3, 2});
    return op_case({R(g, {3, 4}), R(g, {4, 2})}, [w](Tape& t, std::vector<Tensor>& x) {
      return sum(mul(matmul(t.param(x[0]), t.param(x[1])), t.frozen(w)));
    });
  });
  s.emplace_back("matvec", [=](std::mt19937_64& g, int) {
    Tensor w = R(g, {3});
    return op_case({R(g, {3, 4}), R(g, {4})},
                   [w](Tape& t, std::vector<Tensor>& x) { return dot(matvec(t.param(x[0]), t.param(x[1])), t.frozen(w)); });
  });
  s.emplace_back("vecmat", [=](std::mt19937_64& g, int) {
    Tensor w = R(g, {4});
    return op_case({R(g, {3}), R(g, {3, 4})},
                   [w](Tape& t, std::vector<Tensor>& x) { return dot(vecmat(t.param(x[0]), t.param(x[1])), t.frozen(w)); });
  });
  for (auto kind : {ElementwiseKind::add, ElementwiseKind::sub, ElementwiseKind::mul}) {
    const char* name = kind == ElementwiseKind::add ? "add" : kind == ElementwiseKind::sub ? "sub" : "mul";
    s.emplace_back(name, [=](std::mt19937_64& g, int) {
      Tensor w = R(g, {5});
      return op_case({R(g, {5}), R(g, {5})}, [w, kind](Tape& t, std::vector<Tensor>& x) {
        return dot(elementwise(t.param(x[0]), t.param(x[1]), kind), t.frozen(w));
      });
    });
  }
  s.emplace_back("scale", [=](std::mt19937_64& g, int) {
    Tensor w = R(g, {5});
    return op_case({R(g, {5})}, [w](Tape& t, std::vector<Tensor>& x) { return dot(scale(t.param(x[0]), -1.7), t.frozen(w)); });
  });
  s.emplace_back("add_scalar", [=](std::mt19937_64& g, int) {
    Tensor w = R(g, {5});
    return op_case({R(g, {5})}, [w](Tape& t, std::vector<Tensor>& x) {
      Var a = t.param(x[0]);
      return dot(mul(add_scalar(a, 0.3), a), t.frozen(w));
    });
  });
  using Unary = Var (*)(Var);
  const std::pair<const char*, Unary> unary[] = {{"sigmoid", &sigmoid}, {"tanh", &tanh}, {"relu", &relu}};
  for (auto [name, f] : unary) {
    s.emplace_back(name, [=](std::mt19937_64& g, int) {
      Tensor w = R(g, {6});
      return op_case({R(g, {6}, 2.0)}, [w, f](Tape& t, std::vector<Tensor>& x) { return dot(f(t.param(x[0])), t.frozen(w)); });
    });
  }
  s.emplace_back("log", [=](std::mt19937_64& g, int) {
    Tensor w = R(g, {6});
    return op_case({R(g, {6})}, [w](Tape& t, std::vector<Tensor>& x) {
      return dot(log(add_scalar(t.param(x[0]), 1.5)), t.frozen(w));
    });
  });
  s.emplace_back("sum", [=](std::mt19937_64& g, int) {
    return op_case({R(g, {2, 3}), R(g, {2, 3})},
                   [](Tape& t, std::vector<Tensor>& x) { return sum(mul(t.param(x[0]), t.param(x[1]))); });
  });
  s.emplace_back("mean", [=](std::mt19937_64& g, int) {
    return op_case({R(g, {7})}, [](Tape& t, std::vector<Tensor>& x) {
      Var a = t.param(x[0]);
      return mean(mul(a, a));
    });
  });
  s.emplace_back("dot", [=](std::mt19937_64& g, int) {
    return op_case({R(g, {5}), R(g, {5})}, [](Tape& t, std::vector<Tensor>& x) { return dot(t.param(x[0]), t.param(x[1])); });
  });
  s.emplace_back("sum_all", [=](std::mt19937_64& g, int) {
    return op_case({R(g, {4})}, [](Tape& t, std::vector<Tensor>& x) {
      Var a = t.param(x[0]);
      return sum_all({pick(a, 0), mul(pick(a, 1), pick(a, 2)), pick(a, 3)});
    });
  });
  s.emplace_back("concat", [=](std::mt19937_64& g, int) {
    Tensor w = R(g, {7});
    return op_case({R(g, {3}), R(g, {4})},
                   [w](Tape& t, std::vector<Tensor>& x) { return dot(concat({t.param(x[0]), t.param(x[1])}), t.frozen(w)); });
  });
  s.emplace_back("slice", [=](std::mt19937_64& g, int) {
    Tensor w = R(g, {3});
    return op_case({R(g, {6})}, [w](Tape& t, std::vector<Tensor>& x) { return dot(slice(t.param(x[0]), 2, 3), t.frozen(w)); });
  });
  s.emplace_back("pick", [=](std::mt19937_64& g, int) {
    return op_case({R(g, {5})}, [](Tape& t, std::vector<Tensor>& x) {
      Var a = t.param(x[0]);
      return pick(mul(a, a), 3);
    });
  });
  s.emplace_back("reshape", [=](std::mt19937_64& g, int) {
    Tensor w = R(g, {2, 3});
    return op_case({R(g, {6})},
                   [w](Tape& t, std::vector<Tensor>& x) { return sum(mul(reshape(t.param(x[0]), {2, 3}), t.frozen(w))); });
  });
  s.emplace_back("stack_columns", [=](std::mt19937_64& g, int) {
    Tensor w = R(g, {4, 3});
    return op_case({R(g, {4}), R(g, {4})}, [w](Tape& t, std::vector<Tensor>& x) {
      return sum(mul(stack_columns({t.param(x[0]), t.param(x[1])}, 3), t.frozen(w)));
    });
  });
  s.emplace_back("softmax", [=](std::mt19937_64& g, int) {
    Tensor w = R(g, {6});
    return op_case({R(g, {6}, 3.0)}, [w](Tape& t, std::vector<Tensor>& x) { return dot(softmax(t.param(x[0])), t.frozen(w)); });
  });
  s.emplace_back("log_softmax", [=](std::mt19937_64& g, int) {
    Tensor w = R(g, {6});
    return op_case({R(g, {6}, 3.0)},
                   [w](Tape& t, std::vector<Tensor>& x) { return dot(log_softmax(t.param(x[0])), t.frozen(w)); });
  });
  s.emplace_back("bce_with_logits", [=](std::mt19937_64& g, int rep) {
    const double target = (rep % 5) / 4.0;
    return op_case({R(g, {4}), R(g, {4})}, [target](Tape& t, std::vector<Tensor>& x) {
      return bce_with_logits(dot(t.param(x[0]), t.param(x[1])), target);
    });
  });
  s.emplace_back("binary_entropy", [=](std::mt19937_64& g, int) {
    return op_case({R(g, {4}), R(g, {4})},
                   [](Tape& t, std::vector<Tensor>& x) { return binary_entropy(dot(t.param(x[0]), t.param(x[1]))); });
  });
  s.emplace_back("cosine_similarity", [=](std::mt19937_64& g, int) {
    return op_case({R(g, {6}), R(g, {6})},
                   [](Tape& t, std::vector<Tensor>& x) { return cosine_similarity(t.param(x[0]), t.param(x[1])); });
  });
  s.emplace_back("conv1d", [=](std::mt19937_64& g, int) {
    Tensor w = R(g, {4, 4});
    return op_case({R(g, {3, 11}), R(g, {4, 3, 5}), R(g, {4})}, [w](Tape& t, std::vector<Tensor>& x) {
      return sum(mul(conv1d(t.param(x[0]), t.param(x[1]), t.param(x[2]), 2), t.frozen(w)));
    });
  });
  s.emplace_back("embed_columns", [=](std::mt19937_64& g, int) {
    Tensor w = R(g, {3, 6});
    auto ids = random_words(g, 4);
    ids[1] = Vocabulary::kPad;
    return op_case({R(g, {kFdVocab, 3})}, [w, ids](Tape& t, std::vector<Tensor>& x) {
      return sum(mul(embed_columns(t.param(x[0]), ids, 6, Vocabulary::kPad), t.frozen(w)));
    });
  });
  s.emplace_back("lstm_cell", [=](std::mt19937_64& g, int) {
    return op_case({R(g, {3}), R(g, {4}, 0.5), R(g, {4}, 0.5), R(g, {16, 7}), R(g, {16})},
                   [](Tape& t, std::vector<Tensor>& x) {
                     RecurrentState st{t.param(x[1]), t.param(x[2])};
                     st = lstm_cell(t.param(x[0]), st, t.param(x[3]), t.param(x[4]));
                     return add(sum(st.hidden), scale(sum(st.cell), 0.3));
                   });
  });

  // Composite networks; parameters live in shared_ptrs captured by the loss.
  s.emplace_back("encoder", [=](std::mt19937_64& g, int rep) {
    auto enc = std::make_shared<Encoder>(kFdVocab, fd_dims(), g);
    auto ids = random_words(g, 1 + rep % 6);
    ids.insert(ids.begin(), Vocabulary::kBos);
    Tensor w = R(g, {5});
    ParameterList params;
    enc->collect(params);
    jitter_biases(params, g);
    FdCase c;
    c.extra = pointers(params);
    c.loss = [enc, ids, w](Tape& t, std::vector<Tensor>&) { return dot(enc->encode(t, ids, true), t.value(w)); };
    return c;
  });
  s.emplace_back("guider 3-step unroll", [=](std::mt19937_64& g, int rep) {
    auto gd = std::make_shared<Guider>(fd_dims(), rep % 2 ? 2 : 0, g);
    std::optional<int> label;
    if (gd->num_labels() > 0) label = rep % 4 < 2 ? 0 : 1;
    std::vector<Tensor> w;
    for (int k = 0; k < 3; ++k) w.push_back(R(g, {5}));
    ParameterList params;
    gd->collect(params);
    FdCase c;
    c.owned = {R(g, {5}), R(g, {5}), R(g, {5}), R(g, {5})};
    c.extra = pointers(params);
    c.loss = [gd, label, w](Tape& t, std::vector<Tensor>& x) {
      std::vector<Var> fv{t.param(x[1]), t.param(x[2]), t.param(x[3])};
      auto preds = gd->unroll(t, t.param(x[0]), fv, label, true);
      std::vector<Var> terms;
      for (std::size_t k = 0; k < preds.size(); ++k) terms.push_back(dot(preds[k], t.value(w[k])));
      return sum_all(terms);
    };
    return c;
  });
  s.emplace_back("gated decoder step", [=](std::mt19937_64& g, int rep) {
    auto gen = std::make_shared<Generator>(kFdVocab, fd_dims(), g);
    const std::size_t target = rep % 6;
    ParameterList params;
    gen->collect(params);
    FdCase c;
    c.owned = {R(g, {5}), R(g, {4}), R(g, {5})};
    c.extra = pointers(params);
    c.loss = [gen, target](Tape& t, std::vector<Tensor>& x) {
      auto state = gen->initial_state(t, t.param(x[0]), true);
      state = gen->advance(t, state, t.param(x[1]), true);
      Var o = gen->decoder_feature(t, state.hidden, true);
      Var w = gen->gate_vector(t, t.param(x[2]), true);
      return pick(log_softmax(gen->gated_logits(t, o, w, true)), target);
    };
    return c;
  });
  s.emplace_back("discriminator", [=](std::mt19937_64& g, int rep) {
    auto d = std::make_shared<Discriminator>(kFdVocab, fd_dims(), g);
    std::uniform_int_distribution<std::size_t> len(1, 5);
    Sentence sent{random_words(g, len(g))};
    sent.tokens.push_back(Vocabulary::kEos);
    ParameterList params;
    d->collect(params);
    jitter_biases(params, g);
    FdCase c;
    c.extra = pointers(params);
    c.loss = [d, sent, rep](Tape& t, std::vector<Tensor>&) { return bce_with_logits(d->logit(t, sent.tokens, true), rep % 2); };
    return c;
  });
  return s;
}

Outcome gradient_correctness() {
  std::mt19937_64 rng(101);
  double worst = 0.0;
  std::string worst_name, failed;
  std::size_t groups = 0, entries = 0;
  for (auto& [name, make] : fd_suite()) {
    double group_worst = 0.0;
    for (int rep = 0; rep < kFdCases; ++rep) {
      FdCase c = make(rng, rep);
      std::vector<Tensor*> ptrs = c.extra;
      for (auto& t : c.owned) ptrs.push_back(&t);
      auto r = check_gradients(ptrs, [&](Tape& t) { return c.loss(t, c.owned); }, 60, rng());
      group_worst = std::max(group_worst, r.max_rel_error);
      entries += r.checked;
    }
    ++groups;
    if (group_worst >= kFdTolerance) failed += (failed.empty() ? "" : ",") + name;
    if (group_worst > worst) {
      worst = group_worst;
      worst_name = name;
    }
  }
  std::string detail = fmt("%zu groups x %d cases, %zu entries, worst rel error %.2e (%s)", groups, kFdCases, entries, worst,
                           worst_name.c_str());
  if (!failed.empty()) detail += "; over tolerance: " + failed;
  return {failed.empty(), detail};
}

// 2. Reward oracle ----------------------------------------------------------------

double ref_cos(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (std::sqrt(aa) < 1e-12 || std::sqrt(bb) < 1e-12) return 0.0;
  return ab / (std::sqrt(aa) * std::sqrt(bb));
}

std::vector<double> ref_minus(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

Outcome reward_oracle() {
  std::vector<double> r{0.5, 0.5, 0.5};
  auto R = discounted_cumulative(r, 0.25);
  auto Q = q_values(R, 0.8);
  const bool hand = R == std::vector<double>{0.65625, 0.625, 0.5} && Q == std::vector<double>{0.525, 0.5, 0.4};

  std::mt19937_64 rng(202);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> len(1, 10);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t cs[] = {2, 3, 4, 5, 8};
  double worst = 0.0;
  for (int rep = 0; rep < 1000; ++rep) {
    const std::size_t T = len(rng), c = cs[rep % 5];
    std::vector<std::vector<double>> f(T + 1, std::vector<double>(6)), p(T, std::vector<double>(6));
    std::vector<Tensor> ft, pt;
    for (auto& v : f) {
      for (auto& x : v) x = n(rng);
      ft.push_back(Tensor::vector(v));
    }
    for (auto& v : p) {
      for (auto& x : v) x = n(rng);
      pt.push_back(Tensor::vector(v));
    }
    const double gamma = 0.99 * u(rng), r_f = u(rng);
    auto rg = feature_matching_rewards(ft, pt, c);
    auto Rg = discounted_cumulative(rg, gamma);
    auto Qg = q_values(Rg, r_f);
    std::vector<double> ref_r(T), ref_R(T, 0.0);
    for (std::size_t t = 1; t <= T; ++t) {
      const auto& fhat = p[t >= c ? t - c : 0];
      const std::size_t m = std::min(t, c);
      double acc = 0.0;
      for (std::size_t i = 1; i <= m; ++i) acc += ref_cos(f[t], fhat) + ref_cos(ref_minus(f[t], f[t - i]), ref_minus(fhat, f[t - i]));
      ref_r[t - 1] = acc / (2.0 * static_cast<double>(m));
    }
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t i = t; i < T; ++i) ref_R[t] += std::pow(gamma, static_cast<double>(i - t)) * ref_r[i];
    }
    for (std::size_t t = 0; t < T; ++t) {
      worst = std::max({worst, std::abs(rg[t] - ref_r[t]), std::abs(Rg[t] - ref_R[t]), std::abs(Qg[t] - ref_R[t] * r_f)});
    }
  }
  return {hand && worst < 1e-10,
          fmt("worked example %s; 1000 traces, max |diff| %.2e (r_g, R, Q)", hand ? "exact" : "MISMATCH", worst)};
}

// 3-4. BLEU ---------------------------------------------------------------------

Outcome f1_regression() {
  struct Row {
    const char* name;
    double test[3], self[3], f1[3];
  };
  const Row rows[] = {
      {"MLE", {0.902, 0.706, 0.470}, {0.787, 0.646, 0.485}, {0.345, 0.472, 0.491}},
      {"Guider", {0.920, 0.723, 0.489}, {0.812, 0.589, 0.360}, {0.312, 0.524, 0.554}},
      {"GMGAN", {0.923, 0.727, 0.491}, {0.814, 0.576, 0.328}, {0.310, 0.537, 0.567}},
  };
  double worst = 0.0;
  int ok = 0;
  for (const auto& r : rows) {
    for (int k = 0; k < 3; ++k) {
      const double d = std::abs(f1_bleu(r.test[k], r.self[k]) - r.f1[k]);
      worst = std::max(worst, d);
      ok += d <= 0.002;
    }
  }
  return {ok == 9, fmt("%d/9 cells within 0.002, worst %.4f", ok, worst)};
}

Outcome bleu_units() {
  Tokens s{1, 2, 3, 4, 5};
  std::vector<Tokens> refs{s};
  bool perfect = true;
  for (std::size_t k = 1; k <= 4; ++k) perfect = perfect && bleu(s, refs, k) == 1.0;
  const double clipped = bleu(Tokens{7, 7, 7}, std::vector<Tokens>{{7, 9}}, 1);
  const double bp = bleu(Tokens{1, 2, 3, 4}, std::vector<Tokens>{{1, 2, 3, 4, 5}}, 4);
  const double self = self_bleu(std::vector<Tokens>(5, Tokens{3, 1, 4, 1, 5}), 4);
  const bool pass = perfect && clipped == 1.0 / 3.0 && std::abs(bp - std::exp(-0.25)) <= 1e-6 && self == 1.0;
  return {pass, fmt("perfect %s, clipped %.6f, brevity %.9f (e^-0.25 %.9f), identical self-BLEU %.6f",
                    perfect ? "1" : "!=1", clipped, bp, std::exp(-0.25), self)};
}

// 5-6, 8-9. Desk grammar runs ------------------------------------------------------

RunConfig desk_config() {
  RunConfig c;
  c.profile = "small";
  c.grammar = "desk";
  c.max_len = 16;
  c.seed = 1;
  c.lr_generator = 1e-3;
  c.lr_guider = 1e-3;
  c.mle_epochs = 10;
  return c;
}

double unigram_entropy(std::span<const Sentence> sentences) {
  std::map<int, double> counts;
  double total = 0.0;
  for (const auto& s : sentences) {
    for (int id : s.tokens) {
      counts[id] += 1.0;
      total += 1.0;
    }
  }
  double h = 0.0;
  for (const auto& [id, n] : counts) h -= n / total * std::log(n / total);
  return h;
}

struct DeskState {
  std::string mle_checkpoint;
  double mle_seconds = 0.0;
};

Outcome mle_learning(DeskState& state) {
  Clock clock;
  RunConfig c = desk_config();
  Trainer tr(c, build_dataset(c, false));
  const double h = unigram_entropy(tr.data().train);
  std::size_t first = 0;
  double last = 0.0;
  tr.pretrain_mle([&](const EpochRecord& r) {
    last = r.values["valid_nll"].get<double>();
    if (first == 0 && last < h) first = r.epoch;
  });
  state.mle_checkpoint = serialize_checkpoint(tr);
  state.mle_seconds = clock.seconds();
  const bool fast = state.mle_seconds < 600.0;
  return {first > 0 && fast,
          fmt("unigram entropy %.4f nats; validation CE below it from epoch %zu, %.4f after %zu epochs; %.0f s of 600 s budget",
              h, first, last, c.mle_epochs, state.mle_seconds)};
}

Outcome guider_learning(const DeskState& state) {
  auto trained = deserialize_checkpoint(state.mle_checkpoint, true);
  auto [direct, direction] = trained->guider_validation_cosines();

  auto untrained = deserialize_checkpoint(state.mle_checkpoint, true);
  Models fresh(untrained->models().vocab_size, untrained->models().dims, 0, 777);
  auto src = fresh.guider_group(), dst = untrained->models().guider_group();
  for (std::size_t i = 0; i < src.size(); ++i) *dst[i].tensor = *src[i].tensor;
  auto [rd, rdir] = untrained->guider_validation_cosines();
  return {direct > 0.8 && direction > 0.8,
          fmt("trained cosines %.3f (feature), %.3f (direction); random guider %.3f, %.3f", direct, direction, rd, rdir)};
}

Outcome policy_gradient_sanity() {
  auto vocab = Vocabulary::from_words(std::vector<std::string>{"a", "b"});
  ModelDims dims;
  dims.embed = 8;
  dims.conv = 8;
  dims.feature = 16;
  dims.hidden = 16;
  dims.max_len = 2;
  Models m(vocab.size(), dims, 0, 3);
  Adam opt(m.generator_group(), {1e-2});
  Tensor init = Tensor::filled({16}, 0.1);
  const std::size_t arm = id_to_output(vocab.id("a"));
  auto prob = [&] {
    Tape tape;
    UnrollOptions o;
    o.max_len = 2;
    TokenChooser eos = [](std::span<const double>) { return std::size_t{0}; };
    auto u = unroll(tape, m.policy(), tape.value(init), o, std::nullopt, eos);
    return std::exp(log_softmax(u.logits[0]).value()[arm]);
  };
  std::mt19937_64 rng(4);
  Baseline baseline;
  baseline.momentum = 0.9;
  const double p0 = prob();
  int reached = 0;
  double p = p0;
  for (int step = 1; step <= 500; ++step) {
    std::vector<GenerationTrace> traces;
    std::vector<std::vector<double>> Q;
    for (int b = 0; b < 8; ++b) {
      traces.push_back(sample_sequence(m.policy(), init, rng, DecodeMode::sample, 2));
      std::vector<double> q(traces.back().length(), 0.0);
      q[0] = traces.back().sentence.tokens[0] == vocab.id("a") ? 1.0 : 0.0;
      Q.push_back(q);
    }
    auto adv = baseline_advantage(Q, baseline);
    for (std::size_t b = 0; b < traces.size(); ++b) {
      if (traces[b].truncated) adv[b].back() = 0.0;
    }
    policy_gradient_step(m.policy(), traces, adv, &opt);
    p = prob();
    if (!reached && p > 0.9) reached = step;
  }

  std::vector<GenerationTrace> traces;
  std::vector<std::vector<double>> zeros;
  std::mt19937_64 rng2(5);
  for (int b = 0; b < 4; ++b) {
    traces.push_back(sample_sequence(m.policy(), init, rng2, DecodeMode::sample, 2));
    zeros.emplace_back(traces.back().length(), 0.0);
  }
  auto params = m.all_parameters();
  std::vector<std::vector<double>> before;
  for (const auto& q : params) before.emplace_back(q.tensor->values().begin(), q.tensor->values().end());
  const auto steps = opt.steps();
  policy_gradient_step(m.policy(), traces, zeros, &opt);
  bool unchanged = opt.steps() == steps;
  for (std::size_t i = 0; i < params.size(); ++i) {
    unchanged = unchanged && std::memcmp(before[i].data(), params[i].tensor->values().data(),
                                         before[i].size() * sizeof(double)) == 0;
  }
  return {reached > 0 && unchanged,
          fmt("p(best) %.3f -> %.4f, above 0.9 at step %d; zero-advantage batch %s", p0, p, reached,
              unchanged ? "bit-unchanged" : "CHANGED parameters")};
}

Outcome end_to_end(const DeskState& state) {
  Clock clock;
  auto mle = deserialize_checkpoint(state.mle_checkpoint, true);
  const double baseline = mle->evaluate_samples(500).validity;

  std::string histories;
  double gmgan = 0.0;
  bool complete = true;
  for (auto mode : {RewardMode::both, RewardMode::final_only, RewardMode::stepwise_only}) {
    auto tr = deserialize_checkpoint(state.mle_checkpoint, true);
    auto& c = tr->config();
    c.reward_mode = mode;
    c.lr_generator = c.lr_guider = 5e-5;
    tr->generator_optimizer().set_lr(c.lr_generator);
    tr->guider_optimizer().set_lr(c.lr_guider);
    c.pg_batch_size = 32;
    c.disc_pretrain_steps = 300;
    c.d_steps = 3;
    c.rl_epochs = 3;
    c.steps_per_epoch = 20;
    c.eval_samples = 100;
    auto records = tr->run_gmgan();
    const double v = tr->evaluate_samples(500).validity;
    complete = complete && records.size() == c.rl_epochs &&
               std::all_of(records.begin(), records.end(), [](const EpochRecord& r) { return r.values.contains("validity"); });
    std::string curve;
    for (const auto& r : records) curve += fmt("%s%.2f", curve.empty() ? "" : "/", r.values["validity"].get<double>());
    histories += fmt(", %s %.3f [%s]", to_string(mode).c_str(), v, curve.c_str());
    if (mode == RewardMode::both) gmgan = v;
  }
  const double seconds = clock.seconds() + state.mle_seconds;
  return {complete && gmgan >= baseline && seconds < 1800.0,
          fmt("validity on 500 samples: MLE %.3f, GMGAN %.3f%s; %.0f s of 1800 s budget", baseline, gmgan,
              histories.c_str(), seconds)};
}

Outcome reward_contrast(const DeskState& state) {
  auto tr = deserialize_checkpoint(state.mle_checkpoint, true);
  std::mt19937_64 rng(303);
  int wins = 0, noise_wins = 0, n = 0;
  auto mean = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); };
  for (std::size_t i = 0; i < tr->data().train.size() && n < 50; ++i) {
    const Sentence& s = tr->data().train[i];
    auto w = s.words();
    std::vector<int> words(w.begin(), w.end()), shuffled = words;
    if (words.size() < 3) continue;
    for (int tries = 0; tries < 20 && shuffled == words; ++tries) std::shuffle(shuffled.begin(), shuffled.end(), rng);
    if (shuffled == words) continue;
    shuffled.push_back(Vocabulary::kEos);
    Sentence y{shuffled};
    wins += mean(tr->inspect_rewards(s, i, s)) > mean(tr->inspect_rewards(y, i, s));
    noise_wins += mean(tr->inspect_rewards(s, i)) > mean(tr->inspect_rewards(y, i));
    ++n;
  }
  const double rate = static_cast<double>(wins) / n;
  return {n == 50 && rate >= 0.8,
          fmt("real > shuffled mean r_g for %d/%d sentences (%.2f) with the guider conditioned on the real sentence; "
              "%d/%d under noise conditioning",
              wins, n, rate, noise_wins, n)};
}

// 10. Style transfer ------------------------------------------------------------

Outcome style_transfer() {
  RunConfig c;
  c.profile = "small";
  c.grammar = "style";
  c.max_len = 12;
  c.seed = 1;
  c.lr_generator = c.lr_guider = 3e-3;
  c.steps_per_epoch = 50;
  c.style.epochs = 18;
  c.style.warmup_epochs = 12;
  c.style.classifier_weight = 0.1;
  c.style.classifier_epochs = 2;
  Trainer tr(c, build_dataset(c, true));
  tr.run_style_transfer();
  const auto& d = tr.data();
  double accuracy = 0.0, precision = 0.0;
  for (std::size_t i = 0; i < d.test.size(); ++i) {
    const int target = 1 - d.test_labels[i];
    Sentence y = tr.transfer(d.test[i], target);
    accuracy += oracle_style(*d.grammar, d.vocab.decode_words(y)) == target;
    precision += unigram_precision(y.words(), d.test[i].words());
  }
  accuracy /= static_cast<double>(d.test.size());
  precision /= static_cast<double>(d.test.size());
  return {accuracy > 0.8 && precision > 0.5,
          fmt("%zu held-out sentences: oracle transfer accuracy %.3f, source unigram precision %.3f", d.test.size(),
              accuracy, precision)};
}

// 11. Reproducibility ---------------------------------------------------------------

RunConfig tiny_run() {
  RunConfig c;
  c.grammar = "desk";
  c.max_len = 12;
  ModelDims d;
  d.embed = 8;
  d.conv = 8;
  d.feature = 16;
  d.hidden = 16;
  c.dims = d;
  c.train_size = 64;
  c.valid_size = 16;
  c.test_size = 16;
  c.batch_size = 8;
  c.mle_epochs = 2;
  c.rl_epochs = 2;
  c.steps_per_epoch = 4;
  c.pg_batch_size = 8;
  c.disc_pretrain_steps = 4;
  c.eval_samples = 16;
  c.self_bleu_samples = 16;
  return c;
}

Outcome reproducibility() {
  auto once = [] {
    Trainer tr(tiny_run(), build_dataset(tiny_run(), false));
    tr.pretrain_mle();
    tr.run_gmgan();
    return serialize_checkpoint(tr);
  };
  const std::string a = once(), b = once();
  auto back = deserialize_checkpoint(a, true);
  const std::string again = serialize_checkpoint(*back);
  Trainer fresh(tiny_run(), build_dataset(tiny_run(), false));
  auto pa = back->models().all_parameters(), pb = fresh.models().all_parameters();
  auto original = deserialize_checkpoint(a);
  auto po = original->models().all_parameters();
  bool bit_exact = po.size() == pa.size();
  for (std::size_t i = 0; bit_exact && i < pa.size(); ++i) bit_exact = *pa[i].tensor == *po[i].tensor;
  return {a == b && again == a && bit_exact,
          fmt("two fixed-seed runs %s (%zu bytes); round trip %s", a == b ? "byte-identical" : "DIFFER", a.size(),
              again == a && bit_exact ? "bit-exact" : "NOT bit-exact")};
}

}  // namespace

int main() {
  Clock total;
  {
    Clock clock;
    Outcome o = gradient_correctness();
    if (o.pass && clock.seconds() >= 120.0) o = {false, o.detail + "; over the 120 s budget"};
    report(1, "gradient correctness", o, clock.seconds());
  }
  run(2, "reward-engine oracle equivalence", reward_oracle);
  run(3, "F1-BLEU appendix regression", f1_regression);
  run(4, "BLEU unit suite", bleu_units);
  DeskState desk;
  run(5, "MLE learning", [&] { return mle_learning(desk); });
  const bool have_mle = !desk.mle_checkpoint.empty();
  auto needs_mle = [&](auto body) {
    return [&, body] { return have_mle ? body() : Outcome{false, "MLE run unavailable"}; };
  };
  run(6, "guider learning", needs_mle([&] { return guider_learning(desk); }));
  run(7, "policy-gradient sanity", policy_gradient_sanity);
  run(8, "end-to-end improvement", needs_mle([&] { return end_to_end(desk); }));
  run(9, "reward-trace contrast", needs_mle([&] { return reward_contrast(desk); }));
  run(10, "style transfer", style_transfer);
  run(11, "reproducibility and persistence", reproducibility);
  std::printf("%d of 11 criteria failed (%.0f s)\n", failures, total.seconds());
  return failures == 0 ? 0 : 1;
}
