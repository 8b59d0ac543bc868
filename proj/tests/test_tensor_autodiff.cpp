#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "gmg/errors.hpp"
#include "gmg/nn.hpp"
#include "gmg/ops.hpp"
#include "gmg/optim.hpp"
#include "support/fd_check.hpp"

using namespace gmg;
using gmg::testing::check_gradients;
using gmg::testing::random_tensor;

namespace {

std::vector<double> values_of(Var v) { return {v.value().begin(), v.value().end()}; }

}  // namespace

TEST(Tensor, RejectsBadConstruction) {
  EXPECT_THROW(Tensor({2, 2}, {1, 2, 3}), DimensionError);
  EXPECT_THROW(Tensor({0}, {}), DimensionError);
  EXPECT_THROW(Tensor::vector({1.0, std::nan("")}), NumericalError);
  EXPECT_THROW(Tensor::vector({INFINITY}), NumericalError);
}

TEST(Tensor, GradBufferMatchesShape) {
  Tensor t = Tensor::zeros({3, 2}, true);
  EXPECT_EQ(t.grad().size(), 6u);
  t.set_requires_grad(false);
  EXPECT_TRUE(t.grad().empty());
}

TEST(Matmul, IdentityAndAnnihilator) {
  Tape tape;
  Var eye = tape.value(Tensor::matrix(2, 2, {1, 0, 0, 1}));
  Var m = tape.value(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  EXPECT_EQ(values_of(matmul(eye, m)), (std::vector<double>{1, 2, 3, 4}));
  Var a = tape.value(Tensor::matrix(2, 2, {1, 0, 0, 0}));
  Var b = tape.value(Tensor::matrix(2, 1, {0, 5}));
  EXPECT_EQ(values_of(matmul(a, b)), (std::vector<double>{0, 0}));
}

TEST(Matmul, ShapeMismatchIsDimensionError) {
  Tape tape;
  Var a = tape.value(Tensor::zeros({2, 3}));
  Var b = tape.value(Tensor::zeros({2, 3}));
  EXPECT_THROW(matmul(a, b), DimensionError);
}

TEST(Matmul, FiniteDifferences) {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 100; ++rep) {
    Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng);
    auto r = check_gradients({&a, &b}, [&](Tape& t) { return sum(matmul(t.param(a), t.param(b))); });
    ASSERT_LT(r.max_rel_error, 1e-6);
  }
}

TEST(Elementwise, Values) {
  Tape tape;
  Var v = tape.value(Tensor::vector({1.5, -2, 3}));
  Var ones = tape.value(Tensor::ones({3}));
  EXPECT_EQ(values_of(mul(v, ones)), (std::vector<double>{1.5, -2, 3}));
  Var a = tape.value(Tensor::vector({1, 2})), b = tape.value(Tensor::vector({3, 4}));
  EXPECT_EQ(values_of(mul(a, b)), (std::vector<double>{3, 8}));
  EXPECT_EQ(values_of(add(a, b)), (std::vector<double>{4, 6}));
  EXPECT_EQ(values_of(sub(a, b)), (std::vector<double>{-2, -2}));
  EXPECT_THROW(mul(a, v), DimensionError);
}

TEST(Elementwise, FiniteDifferences) {
  std::mt19937_64 rng(12);
  for (int rep = 0; rep < 100; ++rep) {
    Tensor a = random_tensor({5}, rng), b = random_tensor({5}, rng), w = random_tensor({5}, rng);
    for (auto kind : {ElementwiseKind::mul, ElementwiseKind::add, ElementwiseKind::sub}) {
      auto r = check_gradients({&a, &b}, [&](Tape& t) {
        return dot(elementwise(t.param(a), t.param(b), kind), t.frozen(w));
      });
      ASSERT_LT(r.max_rel_error, 1e-6);
    }
  }
}

TEST(Softmax, UniformAndStable) {
  Tape tape;
  auto u = values_of(softmax(tape.value(Tensor::zeros({4}))));
  for (double p : u) EXPECT_DOUBLE_EQ(p, 0.25);
  auto s = values_of(softmax(tape.value(Tensor::vector({1000, 0}))));
  EXPECT_NEAR(s[0], 1.0, 1e-15);
  EXPECT_GE(s[1], 0.0);
  EXPECT_LT(s[1], 1e-300);
}

TEST(Softmax, HighPrecisionReference) {
  // exp-normalize of [1,2,3] evaluated with 50-digit arithmetic.
  const double expected[] = {0.090030573170380457998, 0.24472847105479765247, 0.66524095577482188953};
  Tape tape;
  auto p = values_of(softmax(tape.value(Tensor::vector({1, 2, 3}))));
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(p[i], expected[i], 1e-12);
}

TEST(Softmax, SumsToOneAndPermutationEquivariant) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-30, 30);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<double> z(7);
    for (auto& v : z) v = u(rng);
    std::vector<std::size_t> perm(7);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<double> zp(7);
    for (std::size_t i = 0; i < 7; ++i) zp[i] = z[perm[i]];
    Tape tape;
    auto p = values_of(softmax(tape.value(Tensor::vector(z))));
    auto pp = values_of(softmax(tape.value(Tensor::vector(zp))));
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-12);
    for (std::size_t i = 0; i < 7; ++i) EXPECT_DOUBLE_EQ(pp[i], p[perm[i]]);
  }
}

TEST(Softmax, FiniteDifferences) {
  std::mt19937_64 rng(13);
  for (int rep = 0; rep < 100; ++rep) {
    Tensor z = random_tensor({6}, rng, 3.0), w = random_tensor({6}, rng);
    auto r = check_gradients({&z}, [&](Tape& t) { return dot(softmax(t.param(z)), t.frozen(w)); });
    ASSERT_LT(r.max_rel_error, 1e-6);
    auto r2 = check_gradients({&z}, [&](Tape& t) { return dot(log_softmax(t.param(z)), t.frozen(w)); });
    ASSERT_LT(r2.max_rel_error, 1e-6);
  }
}

TEST(Softmax, EmptyIsDimensionError) {
  EXPECT_THROW(Tensor::vector({}), DimensionError);
}

TEST(Lstm, ZeroEverythingGivesZeroHidden) {
  Tape tape;
  Tensor w = Tensor::zeros({12, 5}), b = Tensor::zeros({12});
  RecurrentState s{tape.value(Tensor::zeros({3})), tape.value(Tensor::zeros({3}))};
  auto next = lstm_cell(tape.value(Tensor::zeros({2})), s, tape.frozen(w), tape.frozen(b));
  for (double v : next.hidden.value()) EXPECT_EQ(v, 0.0);
}

TEST(Lstm, RepeatedInputConverges) {
  std::mt19937_64 rng(5);
  LstmLayer layer(3, 4, rng);
  // Force the forget gate below one by a negative bias.
  for (std::size_t k = 4; k < 8; ++k) layer.bias[k] = -1.0;
  Tensor x = Tensor::uniform({3}, 1.0, rng);
  Tape tape;
  Var xv = tape.value(x);
  RecurrentState s{tape.value(Tensor::zeros({4})), tape.value(Tensor::zeros({4}))};
  std::vector<std::vector<double>> cells;
  for (int t = 0; t < 52; ++t) {
    s = layer.step(tape, xv, s, false);
    cells.push_back(values_of(concat({s.hidden, s.cell})));
  }
  auto dist = [](const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0;
    for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(d);
  };
  double prev = INFINITY;
  for (int t = 0; t < 50; ++t) {
    double d = dist(cells[t], cells[t + 1]);
    EXPECT_LE(d, prev + 1e-15);
    prev = d;
  }
  EXPECT_LT(prev, 1e-6);
}

TEST(Lstm, ThreeStepFiniteDifferences) {
  std::mt19937_64 rng(14);
  for (int rep = 0; rep < 20; ++rep) {
    LstmLayer layer(3, 4, rng);
    Tensor x0 = random_tensor({3}, rng), x1 = random_tensor({3}, rng), x2 = random_tensor({3}, rng);
    Tensor h0 = random_tensor({4}, rng, 0.5), c0 = random_tensor({4}, rng, 0.5);
    auto r = check_gradients({&layer.weight, &layer.bias, &x0, &x1, &x2, &h0, &c0}, [&](Tape& t) {
      RecurrentState s{t.param(h0), t.param(c0)};
      for (Tensor* x : {&x0, &x1, &x2}) s = layer.step(t, t.param(*x), s, true);
      return add(sum(s.hidden), scale(sum(s.cell), 0.3));
    });
    ASSERT_LT(r.max_rel_error, 1e-5);
  }
}

TEST(Lstm, DimensionMismatch) {
  Tape tape;
  Tensor w = Tensor::zeros({12, 5}), b = Tensor::zeros({12});
  RecurrentState s{tape.value(Tensor::zeros({3})), tape.value(Tensor::zeros({3}))};
  EXPECT_THROW(lstm_cell(tape.value(Tensor::zeros({4})), s, tape.frozen(w), tape.frozen(b)), DimensionError);
}

TEST(Conv1d, ConstantSignalGivesConstantOutput) {
  Tape tape;
  Var x = tape.value(Tensor::ones({2, 9}));
  Var k = tape.value(Tensor::filled({1, 2, 3}, 1.0 / 6.0));
  Var b = tape.value(Tensor::zeros({1}));
  auto y = values_of(conv1d(x, k, b, 2));
  ASSERT_EQ(y.size(), 4u);
  for (double v : y) EXPECT_NEAR(v, 1.0, 1e-15);
}

TEST(Conv1d, DeltaRecoversReversedKernel) {
  // Cross-correlating a unit impulse walks the kernel backwards.
  Tape tape;
  Var x = tape.value(Tensor::matrix(1, 5, {0, 0, 1, 0, 0}));
  Var k = tape.value(Tensor({1, 1, 3}, {2, 3, 5}));
  Var b = tape.value(Tensor::zeros({1}));
  EXPECT_EQ(values_of(conv1d(x, k, b, 1)), (std::vector<double>{5, 3, 2}));
}

TEST(Conv1d, ShortInputIsDimensionError) {
  Tape tape;
  Var x = tape.value(Tensor::ones({1, 2}));
  Var k = tape.value(Tensor::ones({1, 1, 3}));
  Var b = tape.value(Tensor::zeros({1}));
  EXPECT_THROW(conv1d(x, k, b, 1), DimensionError);
}

TEST(Conv1d, FiniteDifferences) {
  std::mt19937_64 rng(15);
  for (int rep = 0; rep < 100; ++rep) {
    Tensor x = random_tensor({3, 11}, rng), k = random_tensor({4, 3, 5}, rng), b = random_tensor({4}, rng);
    Tensor w = random_tensor({4, 4}, rng);
    auto r = check_gradients({&x, &k, &b}, [&](Tape& t) {
      return sum(mul(conv1d(t.param(x), t.param(k), t.param(b), 2), t.frozen(w)));
    });
    ASSERT_LT(r.max_rel_error, 1e-5);
  }
}

TEST(Cosine, Values) {
  Tape tape;
  Var v = tape.value(Tensor::vector({0.3, -2, 5}));
  EXPECT_NEAR(cosine_similarity(v, v).item(), 1.0, 1e-15);
  EXPECT_EQ(cosine_similarity(tape.value(Tensor::vector({1, 0})), tape.value(Tensor::vector({0, 1}))).item(), 0.0);
  EXPECT_NEAR(cosine_similarity(tape.value(Tensor::vector({1, 1})), tape.value(Tensor::vector({1, 0}))).item(),
              1.0 / std::sqrt(2.0), 1e-9);
  EXPECT_EQ(cosine_similarity(tape.value(Tensor::zeros({3})), v).item(), 0.0);
}

TEST(Cosine, SymmetricAndScaleInvariant) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> alpha(0.01, 100);
  for (int rep = 0; rep < 200; ++rep) {
    Tensor a = Tensor::uniform({6}, 1, rng), b = Tensor::uniform({6}, 1, rng);
    double s = alpha(rng);
    Tensor as = a;
    for (auto& v : as.mutable_values()) v *= s;
    EXPECT_EQ(cosine_similarity(a.values(), b.values()), cosine_similarity(b.values(), a.values()));
    EXPECT_NEAR(cosine_similarity(as.values(), b.values()), cosine_similarity(a.values(), b.values()), 1e-12);
  }
}

TEST(Cosine, FiniteDifferences) {
  std::mt19937_64 rng(16);
  for (int rep = 0; rep < 100; ++rep) {
    Tensor a = random_tensor({6}, rng), b = random_tensor({6}, rng);
    auto r = check_gradients({&a, &b}, [&](Tape& t) { return cosine_similarity(t.param(a), t.param(b)); });
    ASSERT_LT(r.max_rel_error, 1e-6);
  }
}

TEST(Backward, LinearAndAccumulation) {
  Tensor x = Tensor::vector({1, 2, 3});
  x.set_requires_grad(true);
  {
    Tape tape;
    tape.backward(sum(tape.param(x)));
  }
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
  x.zero_grad();
  {
    Tape tape;
    Var v = tape.param(x);
    tape.backward(add(sum(v), sum(v)));
  }
  for (double g : x.grad()) EXPECT_EQ(g, 2.0);
}

TEST(Backward, NonScalarLossAndSecondCall) {
  Tensor x = Tensor::vector({1, 2});
  x.set_requires_grad(true);
  Tape tape;
  Var v = tape.param(x);
  EXPECT_THROW(tape.backward(v), ContractError);
  Var loss = sum(v);
  tape.backward(loss);
  EXPECT_THROW(tape.backward(loss), ContractError);
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, FrozenBindingGetsNoGradient) {
  Tensor x = Tensor::vector({1, 2});
  x.set_requires_grad(true);
  Tape tape;
  tape.backward(sum(mul(tape.frozen(x), tape.frozen(x))));
  for (double g : x.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Adam, TwoStepRecurrenceOnScalar) {
  Tensor p = Tensor::vector({0.5});
  p.set_requires_grad(true);
  AdamConfig cfg{0.01, 0.9, 0.999, 1e-8};
  Adam opt({{"p", &p}}, cfg);
  double m = 0, v = 0, w = 0.5;
  for (int step = 1; step <= 2; ++step) {
    double g = 2 * w;  // d/dp p^2
    {
      Tape tape;
      Var x = tape.param(p);
      tape.backward(sum(mul(x, x)));
    }
    opt.step();
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    double mh = m / (1 - std::pow(0.9, step)), vh = v / (1 - std::pow(0.999, step));
    w -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
    EXPECT_NEAR(p[0], w, 1e-12);
    EXPECT_EQ(p.grad()[0], 0.0);
  }
}
