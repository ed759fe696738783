#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "../support/finite_diff.hpp"
#include "imu2emg/core/errors.hpp"
#include "imu2emg/core/ops.hpp"

using namespace imu2emg;
using imu2emg::testing::check_gradients;
using imu2emg::testing::random_tensor;
using TensorD = Tensor<double>;

namespace {

// Values frozen from scipy.stats.norm.cdf and numpy's exp/sum, computed
// outside this code base.
constexpr double kPhi1 = 0.8413447460685429;

TensorD make(Shape s, std::vector<double> v) { return TensorD(std::move(s), std::move(v)); }

}  // namespace

TEST(Matmul, IdentityAndProjector) {
  Tape<double> tape;
  auto eye = tape.constant(make({2, 2}, {1, 0, 0, 1}));
  auto m = tape.constant(make({2, 2}, {1, 2, 3, 4}));
  auto y = ops::matmul(eye, m);
  EXPECT_EQ(y.value().storage(), (std::vector<double>{1, 2, 3, 4}));

  auto proj = tape.constant(make({2, 2}, {1, 0, 0, 0}));
  auto m2 = tape.constant(make({2, 2}, {5, 6, 7, 8}));
  EXPECT_EQ(ops::matmul(proj, m2).value().storage(), (std::vector<double>{5, 6, 0, 0}));
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  Tape<double> tape;
  auto a = tape.constant(TensorD({2, 3}));
  auto b = tape.constant(TensorD({2, 2}));
  try {
    ops::matmul(a, b);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos);
    EXPECT_NE(msg.find("[2x2]"), std::string::npos);
  }
}

TEST(Matmul, GradientOfSumMatchesFiniteDifferences) {
  RngState rng(5);
  auto a = random_tensor({3, 3}, rng);
  auto b = random_tensor({3, 3}, rng);
  auto res = check_gradients({&a, &b}, [&](Tape<double>& t) { return ops::sum(ops::matmul(t.leaf(a), t.leaf(b))); });
  EXPECT_LT(res.max_rel_error, 1e-6);
}

TEST(Gelu, ReferencePoints) {
  Tape<double> tape;
  auto x = tape.constant(make({3}, {0.0, 10.0, 1.0}));
  auto y = ops::gelu(x).value();
  EXPECT_EQ(y[0], 0.0);
  EXPECT_NEAR(y[1], 10.0, 1e-6);
  EXPECT_NEAR(y[2], kPhi1, 1e-12);
  EXPECT_NEAR(y[2], 0.841345, 1e-6);
}

TEST(Softmax, UniformStableAndReference) {
  Tape<double> tape;
  auto u = ops::softmax(tape.constant(make({3}, {0, 0, 0})), 0).value();
  for (double v : u.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);

  auto big = ops::softmax(tape.constant(make({3}, {1000, 0, 0})), 0).value();
  EXPECT_NEAR(big[0], 1.0, 1e-12);
  EXPECT_NEAR(big[1], 0.0, 1e-12);
  EXPECT_TRUE(big.all_finite());

  auto r = ops::softmax(tape.constant(make({3}, {1, 2, 3})), 0).value();
  EXPECT_NEAR(r[0], 0.09003057, 1e-8);
  EXPECT_NEAR(r[1], 0.24472847, 1e-8);
  EXPECT_NEAR(r[2], 0.66524096, 1e-8);
}

TEST(Softmax, RowsSumToOneAlongAnyAxis) {
  RngState rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    Tape<double> tape;
    auto x = tape.constant(random_tensor({3, 4, 5}, rng, -50.0, 50.0));
    for (std::size_t axis = 0; axis < 3; ++axis) {
      auto y = ops::softmax(x, axis).value();
      const std::size_t n = y.dim(axis);
      const std::size_t inner = axis == 2 ? 1 : (axis == 1 ? 5 : 20);
      const std::size_t outer = y.size() / (n * inner);
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t in = 0; in < inner; ++in) {
          double s = 0;
          for (std::size_t j = 0; j < n; ++j) s += y[o * n * inner + j * inner + in];
          EXPECT_NEAR(s, 1.0, 1e-12);
        }
    }
  }
}

TEST(LayerNorm, ConstantRowAndHandCase) {
  Tape<double> tape;
  auto g = tape.constant(make({2}, {1, 1}));
  auto b = tape.constant(make({2}, {0, 0}));
  auto c = ops::layer_norm(tape.constant(make({2}, {4, 4})), g, b, 1e-5).value();
  EXPECT_EQ(c[0], 0.0);
  EXPECT_EQ(c[1], 0.0);
  auto r = ops::layer_norm(tape.constant(make({2}, {1, 3})), g, b, 1e-14).value();
  EXPECT_NEAR(r[0], -1.0, 1e-12);
  EXPECT_NEAR(r[1], 1.0, 1e-12);
}

TEST(LayerNorm, NormalizedRowsHaveZeroMeanUnitVariance) {
  RngState rng(2);
  Tape<double> tape;
  const std::size_t d = 16;
  auto x = tape.constant(random_tensor({10, d}, rng, -3.0, 7.0));
  auto y = ops::layer_norm(x, tape.constant(TensorD({d}, 1.0)), tape.constant(TensorD({d}, 0.0)), 1e-5).value();
  for (std::size_t r = 0; r < 10; ++r) {
    double mu = 0, var = 0;
    for (std::size_t j = 0; j < d; ++j) mu += y[r * d + j];
    mu /= d;
    for (std::size_t j = 0; j < d; ++j) var += (y[r * d + j] - mu) * (y[r * d + j] - mu);
    var /= d;
    EXPECT_LT(std::abs(mu), 1e-10);
    EXPECT_NEAR(var, 1.0, 1e-3);
  }
}

TEST(LayerNorm, GradientCheck) {
  RngState rng(8);
  auto x = random_tensor({4, 6}, rng);
  auto g = random_tensor({6}, rng, 0.5, 1.5);
  auto b = random_tensor({6}, rng);
  auto w = random_tensor({4, 6}, rng);
  auto res = check_gradients({&x, &g, &b}, [&](Tape<double>& t) {
    return ops::sum(ops::mul(ops::layer_norm(t.leaf(x), t.leaf(g), t.leaf(b), 1e-5), t.constant(w)));
  });
  EXPECT_LT(res.max_rel_error, 1e-5);
}

TEST(GroupNorm, DegenerateGroupingIsInstanceNorm) {
  RngState rng(4);
  Tape<double> tape;
  const std::size_t c = 4, len = 9;
  auto xt = random_tensor({c, len}, rng, -2.0, 5.0);
  auto x = tape.constant(xt);
  auto one = tape.constant(TensorD({c}, 1.0));
  auto zero = tape.constant(TensorD({c}, 0.0));
  auto y = ops::group_norm(x, c, one, zero, 1e-5).value();
  for (std::size_t ch = 0; ch < c; ++ch) {
    auto row = tape.constant(make({len}, std::vector<double>(xt.data().begin() + ch * len, xt.data().begin() + (ch + 1) * len)));
    auto ln = ops::layer_norm(row, tape.constant(TensorD({len}, 1.0)), tape.constant(TensorD({len}, 0.0)), 1e-5).value();
    for (std::size_t t = 0; t < len; ++t) EXPECT_NEAR(y[ch * len + t], ln[t], 1e-12);
  }
}

TEST(GroupNorm, ConstantInputGivesZeros) {
  Tape<double> tape;
  auto y = ops::group_norm(tape.constant(TensorD({4, 5}, 3.25)), 2, tape.constant(TensorD({4}, 1.0)),
                           tape.constant(TensorD({4}, 0.0)), 1e-5)
               .value();
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(GroupNorm, IndivisibleChannelsIsConfigError) {
  Tape<double> tape;
  EXPECT_THROW(ops::group_norm(tape.constant(TensorD({6, 5})), 4, tape.constant(TensorD({6}, 1.0)),
                               tape.constant(TensorD({6}, 0.0)), 1e-5),
               ConfigError);
}

TEST(GroupNorm, GradientCheckBatched) {
  RngState rng(9);
  auto x = random_tensor({2, 6, 5}, rng);
  auto g = random_tensor({6}, rng, 0.5, 1.5);
  auto b = random_tensor({6}, rng);
  auto w = random_tensor({2, 6, 5}, rng);
  auto res = check_gradients({&x, &g, &b}, [&](Tape<double>& t) {
    return ops::sum(ops::mul(ops::group_norm(t.leaf(x), 3, t.leaf(g), t.leaf(b), 1e-5), t.constant(w)));
  });
  EXPECT_LT(res.max_rel_error, 1e-5);
}

TEST(Conv1d, IdentityKernelAndHandConvolution) {
  Tape<double> tape;
  auto x = tape.constant(make({1, 3}, {1, 2, 3}));
  auto id = ops::conv1d(x, tape.constant(make({1, 1, 1}, {1})), tape.constant(make({1}, {0}))).value();
  EXPECT_EQ(id.storage(), (std::vector<double>{1, 2, 3}));
  auto box = ops::conv1d(x, tape.constant(make({1, 1, 3}, {1, 1, 1})), tape.constant(make({1}, {0}))).value();
  EXPECT_EQ(box.storage(), (std::vector<double>{3, 6, 5}));
}

TEST(Conv1d, CrossCorrelationConvention) {
  Tape<double> tape;
  auto x = tape.constant(make({1, 3}, {1, 2, 3}));
  // w = [1, 0, 0] picks the left neighbour: y[t] = x[t-1].
  auto y = ops::conv1d(x, tape.constant(make({1, 1, 3}, {1, 0, 0})), tape.constant(make({1}, {0}))).value();
  EXPECT_EQ(y.storage(), (std::vector<double>{0, 1, 2}));
}

TEST(Conv1d, EvenKernelIsConfigError) {
  Tape<double> tape;
  EXPECT_THROW(ops::conv1d(tape.constant(TensorD({1, 4})), tape.constant(TensorD({1, 1, 2})), tape.constant(TensorD({1}))),
               ConfigError);
}

TEST(Conv1d, GradientCheck) {
  RngState rng(12);
  auto x = random_tensor({2, 3, 7}, rng);
  auto w = random_tensor({2, 3, 5}, rng);
  auto b = random_tensor({2}, rng);
  auto proj = random_tensor({2, 2, 7}, rng);
  auto res = check_gradients({&x, &w, &b}, [&](Tape<double>& t) {
    return ops::sum(ops::mul(ops::conv1d(t.leaf(x), t.leaf(w), t.leaf(b)), t.constant(proj)));
  });
  EXPECT_LT(res.max_rel_error, 1e-5);
}

TEST(Dropout, IdentityCasesAndRateValidation) {
  Tape<double> tape;
  RngState rng(1);
  auto x = tape.constant(TensorD({5}, 2.0));
  EXPECT_EQ(ops::dropout(x, 0.7, false, rng).id(), x.id());
  EXPECT_EQ(ops::dropout(x, 0.0, true, rng).id(), x.id());
  EXPECT_THROW(ops::dropout(x, 1.0, true, rng), ConfigError);
  EXPECT_THROW(ops::dropout(x, -0.1, true, rng), ConfigError);
}

TEST(Dropout, InvertedScalingPreservesMean) {
  Tape<double> tape;
  RngState rng(77);
  auto y = ops::dropout(tape.constant(TensorD({100000}, 1.0)), 0.5, true, rng).value();
  const double mean = std::accumulate(y.data().begin(), y.data().end(), 0.0) / y.size();
  EXPECT_NEAR(mean, 1.0, 0.02);
  for (double v : y.data()) EXPECT_TRUE(v == 0.0 || v == 2.0);
}

TEST(Dropout, SameSeedSameMask) {
  auto run = [] {
    Tape<double> tape;
    RngState rng(2024);
    return ops::dropout(tape.constant(TensorD({257}, 1.0)), 0.3, true, rng).value().storage();
  };
  EXPECT_EQ(run(), run());
}

TEST(Attention, BatchedProductsAndHeadsGradientCheck) {
  RngState rng(31);
  auto q = random_tensor({2, 5, 4}, rng);
  auto k = random_tensor({2, 5, 4}, rng);
  auto v = random_tensor({2, 5, 4}, rng);
  auto w = random_tensor({2, 5, 4}, rng);
  auto res = check_gradients({&q, &k, &v}, [&](Tape<double>& t) {
    auto qh = ops::split_heads(t.leaf(q), 2);
    auto kh = ops::split_heads(t.leaf(k), 2);
    auto vh = ops::split_heads(t.leaf(v), 2);
    auto p = ops::softmax(ops::scale(ops::bmm(qh, kh, true), 0.5), 2);
    auto o = ops::merge_heads(ops::bmm(p, vh), 2);
    return ops::sum(ops::mul(o, t.constant(w)));
  });
  EXPECT_LT(res.max_rel_error, 1e-5);
}

TEST(Broadcast, AddBiasAndTransposeGradients) {
  RngState rng(41);
  auto x = random_tensor({2, 3, 4}, rng);
  auto bias = random_tensor({4}, rng);
  auto pe = random_tensor({3, 4}, rng);
  auto w = random_tensor({2, 4, 3}, rng);
  auto res = check_gradients({&x, &bias, &pe}, [&](Tape<double>& t) {
    auto y = ops::add(ops::add(t.leaf(x), t.leaf(bias)), t.leaf(pe));
    return ops::sum(ops::mul(ops::transpose_last2(y), t.constant(w)));
  });
  EXPECT_LT(res.max_rel_error, 1e-6);
  Tape<double> tape;
  EXPECT_THROW(ops::add(tape.constant(TensorD({2, 3})), tape.constant(TensorD({2}))), DimensionError);
}

// Every differentiable op over 20 seeds at the documented tolerance.
TEST(GradientProperty, AllOpsOverTwentySeeds) {
  for (std::uint64_t seed = 100; seed < 120; ++seed) {
    RngState rng(seed);
    auto x = random_tensor({2, 4, 6}, rng);
    auto w = random_tensor({6, 4}, rng);
    auto cw = random_tensor({4, 4, 3}, rng);
    auto cb = random_tensor({4}, rng);
    auto g = random_tensor({4}, rng, 0.5, 1.5);
    auto b = random_tensor({4}, rng);
    auto proj = random_tensor({2, 4, 4}, rng);
    auto res = check_gradients({&x, &w, &cw, &cb, &g, &b}, [&](Tape<double>& t) {
      auto h = ops::gelu(ops::matmul(t.leaf(x), t.leaf(w)));          // [2,4,4]
      auto c = ops::conv1d(h, t.leaf(cw), t.leaf(cb));                  // [2,4,4]
      auto n = ops::group_norm(c, 2, t.leaf(g), t.leaf(b), 1e-5);
      auto l = ops::layer_norm(n, t.leaf(g), t.leaf(b), 1e-5);
      auto s = ops::softmax(l, 1);
      return ops::mse_loss(ops::mul(s, t.constant(proj)), Tensor<double>({2, 4, 4}, 0.1));
    });
    EXPECT_LT(res.max_rel_error, 1e-4) << "seed " << seed;
  }
}

TEST(Backward, SumGivesOnesAndMseHandDerivative) {
  TensorD x({2, 3}, 0.5);
  x.set_requires_grad(true);
  {
    Tape<double> tape;
    tape.backward(ops::sum(tape.leaf(x)));
  }
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);

  TensorD y({1}, 2.0);
  y.set_requires_grad(true);
  Tape<double> tape;
  auto loss = ops::mse_loss(tape.leaf(y), TensorD({1}, 0.0));
  EXPECT_EQ(loss.value().item(), 4.0);
  tape.backward(loss);
  EXPECT_EQ(y.grad()[0], 4.0);
}

TEST(Backward, NonScalarLossIsContractError) {
  Tape<double> tape;
  auto x = tape.constant(TensorD({2}));
  EXPECT_THROW(tape.backward(x), ContractError);
}

TEST(Backward, UnusedLeafGetsZeroGradAndNodesVisitedOnce) {
  TensorD used({3}, 1.0), unused({2}, 5.0);
  used.set_requires_grad(true);
  unused.set_requires_grad(true);
  Tape<double> tape;
  auto a = tape.leaf(used);
  tape.leaf(unused);
  auto loss = ops::sum(ops::mul(a, a));
  tape.backward(loss);
  EXPECT_EQ(unused.grad().size(), 2u);
  for (double g : unused.grad()) EXPECT_EQ(g, 0.0);
  for (double g : used.grad()) EXPECT_EQ(g, 2.0);
  EXPECT_EQ(tape.backward_visits(), 2u);
  for (std::size_t id = 0; id < tape.size(); ++id)
    for (auto in : tape.inputs_of(id)) EXPECT_LT(in, id);
}
