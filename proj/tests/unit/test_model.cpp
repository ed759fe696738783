#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "../support/finite_diff.hpp"
#include "../support/temp_dir.hpp"
#include "imu2emg/core/errors.hpp"
#include "imu2emg/core/ops.hpp"
#include "imu2emg/model/checkpoint.hpp"
#include "imu2emg/model/transformer.hpp"

using namespace imu2emg;
using namespace imu2emg::model;
using imu2emg::testing::check_gradients;
using imu2emg::testing::random_tensor;

namespace {

// 2 * Phi(1), Phi from scipy.stats.norm.cdf.
constexpr double kTwoPhiOne = 1.6826894921370859;

std::vector<Tensor<double>*> all_params(ModelParams<double>& p) {
  std::vector<Tensor<double>*> out;
  p.for_each([&](const std::string&, Tensor<double>& t) { out.push_back(&t); });
  return out;
}

// Nudges gains and biases away from their init so the check also covers
// non-trivial norm affine parameters.
void perturb_all(ModelParams<double>& p, RngState& rng) {
  p.for_each([&](const std::string&, Tensor<double>& t) {
    for (auto& v : t.data()) v += rng.uniform(-0.1, 0.1);
  });
}

ModelConfig random_config(RngState& rng) {
  ModelConfig c;
  c.n_heads = 1 + rng.below(4);
  c.groupnorm_groups = 1 + rng.below(4);
  c.d_model = c.n_heads * c.groupnorm_groups * (1 + rng.below(6));
  c.n_layers = 1 + rng.below(4);
  c.input_dim = 1 + rng.below(30);
  c.output_dim = 1 + rng.below(12);
  c.conv_kernel = 1 + 2 * rng.below(4);
  c.ffn_hidden = 1 + rng.below(100);
  c.seq_len = 3 + rng.below(10);
  c.ffn = rng.below(2) ? FfnKind::geglu : FfnKind::gelu;
  return c;
}

std::size_t enumerate_count(const ModelConfig& c) {
  RngState rng(0);
  auto p = init_params<double>(c, rng);
  std::size_t n = 0;
  p.for_each([&](const std::string&, Tensor<double>& t) { n += t.size(); });
  return n;
}

}  // namespace

TEST(Geglu, HandCaseMatchesErfOracle) {
  Tensor<double> x({1, 1}, 1.0), w1({1, 1}, 1.0), w2({1, 1}, 2.0), wo({1, 1}, 1.0), b({1}, 0.0);
  Tape<double> tape;
  auto y = geglu_ff(tape.constant(x), tape.constant(w1), tape.constant(b), tape.constant(w2), tape.constant(b),
                    tape.constant(wo), tape.constant(b));
  EXPECT_NEAR(y.value().item(), kTwoPhiOne, 1e-12);
  EXPECT_NEAR(y.value().item(), 1.682690, 1e-6);
}

TEST(Geglu, ClosedGateGivesBiasOnly) {
  RngState rng(1);
  Tensor<double> w1 = random_tensor({8, 16}, rng), b1 = random_tensor({16}, rng);
  Tensor<double> w2({8, 16}, 0.0), b2({16}, 0.0);
  Tensor<double> wo = random_tensor({16, 8}, rng), bo = random_tensor({8}, rng);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor<double> x = random_tensor({4, 8}, rng, -3, 3);
    Tape<double> tape;
    auto y = geglu_ff(tape.constant(x), tape.constant(w1), tape.constant(b1), tape.constant(w2), tape.constant(b2),
                      tape.constant(wo), tape.constant(bo));
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(y.value()[r * 8 + c], bo[c]);
  }
}

TEST(Geglu, FiniteDifferenceGradient) {
  RngState rng(2);
  Tensor<double> x = random_tensor({4, 8}, rng), w1 = random_tensor({8, 12}, rng), b1 = random_tensor({12}, rng);
  Tensor<double> w2 = random_tensor({8, 12}, rng), b2 = random_tensor({12}, rng);
  Tensor<double> wo = random_tensor({12, 8}, rng), bo = random_tensor({8}, rng);
  Tensor<double> target = random_tensor({4, 8}, rng);
  auto res = check_gradients({&x, &w1, &b1, &w2, &b2, &wo, &bo}, [&](Tape<double>& t) {
    return ops::mse_loss(geglu_ff(t.leaf(x), t.leaf(w1), t.leaf(b1), t.leaf(w2), t.leaf(b2), t.leaf(wo), t.leaf(bo)),
                         target);
  });
  EXPECT_LT(res.max_rel_error, 1e-5);
}

TEST(Attention, SingleHeadTwoStepsMatchesHandComputation) {
  // Identity projections, zero biases, d = 2, T = 2.
  Tensor<double> x({2, 2}, std::vector<double>{1.0, 2.0, 3.0, 4.0});
  Tensor<double> eye({2, 2}, std::vector<double>{1, 0, 0, 1}), zero({2}, 0.0);
  Tape<double> tape;
  auto I = tape.constant(eye);
  auto z = tape.constant(zero);
  auto y = self_attention(tape.constant(x), 1, I, z, I, z, I, z, I, z);
  // scores = x x^T / sqrt(2) = [[5, 11], [11, 25]] / sqrt(2)
  const double s = std::sqrt(2.0);
  const double a0 = 1.0 / (1.0 + std::exp((11.0 - 5.0) / s));
  const double a1 = 1.0 / (1.0 + std::exp((25.0 - 11.0) / s));
  const double expect[4] = {a0 * 1 + (1 - a0) * 3, a0 * 2 + (1 - a0) * 4, a1 * 1 + (1 - a1) * 3,
                            a1 * 2 + (1 - a1) * 4};
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(y.value()[i], expect[i], 1e-12);
}

TEST(EncoderLayer, ZeroOutputProjectionsGiveIdentity) {
  auto cfg = tiny_config();
  RngState rng(3);
  auto p = init_params<double>(cfg, rng);
  auto& l = p.layers[0];
  for (auto* t : {&l.wo, &l.bo, &l.w_out, &l.b_out}) std::fill(t->data().begin(), t->data().end(), 0.0);
  Tensor<double> x = random_tensor({1, 7, 8}, rng);
  Tape<double> tape;
  auto y = encoder_layer(tape, tape.constant(x), l, cfg, false, rng);
  EXPECT_EQ(y.value().storage(), x.storage());
}

TEST(EncoderLayer, PermutationEquivariantWithoutPositions) {
  for (FfnKind kind : {FfnKind::geglu, FfnKind::gelu}) {
    auto cfg = tiny_config();
    cfg.ffn = kind;
    cfg.n_layers = 2;
    RngState rng(4);
    auto p = init_params<double>(cfg, rng);
    perturb_all(p, rng);
    Tensor<double> x = random_tensor({1, 7, 8}, rng);
    const std::vector<std::size_t> perm{3, 6, 0, 5, 1, 4, 2};
    Tensor<double> xp({1, 7, 8});
    for (std::size_t t = 0; t < 7; ++t)
      for (std::size_t c = 0; c < 8; ++c) xp[t * 8 + c] = x[perm[t] * 8 + c];
    auto run = [&](const Tensor<double>& in) {
      Tape<double> tape;
      auto h = tape.constant(in);
      for (auto& l : p.layers) h = encoder_layer(tape, h, l, cfg, false, rng);
      return h.value();
    };
    const auto y = run(x);
    const auto yp = run(xp);
    for (std::size_t t = 0; t < 7; ++t)
      for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(yp[t * 8 + c], y[perm[t] * 8 + c], 1e-12);
  }
}

TEST(Forward, ShapeContractAndDeterminism) {
  ModelConfig cfg;
  cfg.d_model = 32;
  cfg.n_heads = 4;
  cfg.n_layers = 2;
  cfg.ffn_hidden = 64;
  RngState rng(5);
  auto p = init_params<float>(cfg, rng);
  Tensor<float> x({101, 24});
  for (auto& v : x.data()) v = static_cast<float>(rng.uniform());
  auto y1 = predict(p, x);
  auto y2 = predict(p, x);
  EXPECT_EQ(y1.shape(), (Shape{101, 10}));
  EXPECT_EQ(y1.storage(), y2.storage());

  Tensor<float> batch({3, 101, 24}, 0.5f);
  EXPECT_EQ(predict(p, batch).shape(), (Shape{3, 101, 10}));
  EXPECT_THROW(predict(p, Tensor<float>({100, 24})), DimensionError);
  EXPECT_THROW(predict(p, Tensor<float>({101, 23})), DimensionError);
}

TEST(Forward, DefaultConfigShape) {
  RngState rng(6);
  auto p = init_params<float>(ModelConfig{}, rng);
  EXPECT_EQ(predict(p, Tensor<float>({101, 24}, 0.25f)).shape(), (Shape{101, 10}));
}

TEST(Forward, BatchedMatchesPerSample) {
  auto cfg = tiny_config();
  RngState rng(7);
  auto p = init_params<double>(cfg, rng);
  Tensor<double> batch = random_tensor({3, 7, 3}, rng, 0, 1);
  auto yb = predict(p, batch);
  for (std::size_t b = 0; b < 3; ++b) {
    Tensor<double> one({7, 3}, std::vector<double>(batch.storage().begin() + b * 21, batch.storage().begin() + (b + 1) * 21));
    auto y = predict(p, one);
    for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], yb[b * 14 + i], 1e-12);
  }
}

TEST(Forward, TinyConfigFullGradientCheck) {
  for (FfnKind kind : {FfnKind::geglu, FfnKind::gelu}) {
    auto cfg = tiny_config();
    cfg.ffn = kind;
    RngState rng(8);
    auto p = init_params<double>(cfg, rng);
    perturb_all(p, rng);
    Tensor<double> x = random_tensor({7, 3}, rng, 0, 1);
    Tensor<double> target = random_tensor({7, 2}, rng, 0, 1);
    auto res = check_gradients(all_params(p), [&](Tape<double>& t) {
      RngState unused(0);
      return ops::mse_loss(forward(t, p, t.constant(x), false, unused), target);
    });
    EXPECT_EQ(res.checked, parameter_count(cfg));
    EXPECT_LT(res.max_rel_error, 1e-3) << ffn_name(kind);
  }
}

TEST(Params, CountFormulaMatchesEnumeration) {
  EXPECT_EQ(enumerate_count(ModelConfig{}), parameter_count(ModelConfig{}));
  RngState rng(9);
  for (int i = 0; i < 10; ++i) {
    auto c = random_config(rng);
    EXPECT_EQ(enumerate_count(c), parameter_count(c)) << c.to_json();
  }
}

TEST(Params, NonGatedVariantIsParameterMatched) {
  ModelConfig gated;
  ModelConfig plain = gated;
  plain.ffn = FfnKind::gelu;
  EXPECT_EQ(plain.effective_hidden(), 768u);
  const double a = static_cast<double>(parameter_count(gated));
  const double b = static_cast<double>(parameter_count(plain));
  EXPECT_LT(std::abs(a - b) / a, 0.01);
  auto small = gated;
  small.d_model = 32;
  small.n_heads = 4;
  small.ffn_hidden = 64;
  auto small_plain = small;
  small_plain.ffn = FfnKind::gelu;
  EXPECT_LT(std::abs(double(parameter_count(small)) - double(parameter_count(small_plain))) / double(parameter_count(small)),
            0.01);
}

TEST(Params, InitIsSeededAndNormsStartAtIdentity) {
  RngState a(10), b(10);
  auto pa = init_params<float>(tiny_config(), a);
  auto pb = init_params<float>(tiny_config(), b);
  EXPECT_EQ(encode_checkpoint(pa), encode_checkpoint(pb));
  pa.for_each([](const std::string& name, Tensor<float>& t) {
    if (name.ends_with(".gamma"))
      for (float v : t.data()) EXPECT_EQ(v, 1.0f);
    if (name.ends_with(".bias") || name.ends_with(".beta"))
      for (float v : t.data()) EXPECT_EQ(v, 0.0f);
  });
}

TEST(Params, InvalidConfigIsRejected) {
  auto c = tiny_config();
  c.n_heads = 3;
  c.conv_kernel = 4;
  EXPECT_EQ(c.problems().size(), 2u);
  RngState rng(0);
  EXPECT_THROW(init_params<float>(c, rng), ConfigError);
}

TEST(Variants, ZeroFfnGivesIdenticalOutputs) {
  auto cfg = tiny_config();
  RngState rng(11);
  auto gated = init_params<double>(cfg, rng);
  auto plain_cfg = cfg;
  plain_cfg.ffn = FfnKind::gelu;
  auto plain = init_params<double>(plain_cfg, rng);
  // Copy every non-FFN tensor and zero the FFN in both.
  std::vector<Tensor<double>*> src;
  gated.for_each([&](const std::string& name, Tensor<double>& t) {
    if (name.find(".ffn.") != std::string::npos) std::fill(t.data().begin(), t.data().end(), 0.0);
    else src.push_back(&t);
  });
  std::size_t i = 0;
  plain.for_each([&](const std::string& name, Tensor<double>& t) {
    if (name.find(".ffn.") != std::string::npos) std::fill(t.data().begin(), t.data().end(), 0.0);
    else t = *src[i++];
  });
  Tensor<double> x = random_tensor({7, 3}, rng, 0, 1);
  Tape<double> t1, t2;
  RngState r(0);
  auto y1 = forward(t1, gated, t1.constant(x), false, r);
  auto y2 = forward_nongated(t2, plain, t2.constant(x), false, r);
  EXPECT_EQ(y1.value().storage(), y2.value().storage());
  Tape<double> t3;
  EXPECT_THROW(forward_nongated(t3, gated, t3.constant(x), false, r), ConfigError);
}

TEST(PositionalEncoding, BoundedDeterministicAndFixed) {
  auto pe = positional_encoding<double>(101, 256);
  for (double v : pe.data()) EXPECT_TRUE(v >= -1.0 && v <= 1.0);
  EXPECT_EQ(pe.storage(), positional_encoding<double>(101, 256).storage());
  EXPECT_EQ(pe[0], 0.0);
  EXPECT_EQ(pe[1], 1.0);
  EXPECT_NEAR(pe[256 * 1 + 0], std::sin(1.0), 1e-15);
  EXPECT_NEAR(pe[256 * 3 + 3], std::cos(3.0 / std::pow(10000.0, 2.0 / 256)), 1e-15);
  RngState rng(0);
  auto p = init_params<float>(ModelConfig{}, rng);
  p.for_each([](const std::string& name, Tensor<float>&) { EXPECT_EQ(name.find("pos"), std::string::npos); });
}

class Checkpoints : public ::testing::Test {
 protected:
  imu2emg::test::TempDir tmp;
};

TEST_F(Checkpoints, SaveLoadSaveIsByteIdentical) {
  RngState rng(12);
  auto cfg = tiny_config();
  cfg.dropout_rate = 0.1;
  auto p = init_params<float>(cfg, rng);
  save_checkpoint(p, tmp.path() / "a.ckpt");
  auto q = load_checkpoint(tmp.path() / "a.ckpt");
  EXPECT_EQ(q.config, cfg);
  save_checkpoint(q, tmp.path() / "b.ckpt");
  auto read = [](const std::filesystem::path& f) {
    std::ifstream in(f, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  EXPECT_EQ(read(tmp.path() / "a.ckpt"), read(tmp.path() / "b.ckpt"));
  EXPECT_FALSE(std::filesystem::exists(tmp.path() / "a.ckpt.tmp"));

  Tensor<float> x({7, 3}, 0.3f);
  EXPECT_EQ(predict(p, x).storage(), predict(q, x).storage());
}

TEST_F(Checkpoints, CorruptionIsDetected) {
  RngState rng(13);
  const auto bytes = encode_checkpoint(init_params<float>(tiny_config(), rng));
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad_magic), LoadError);
  auto flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x10;
  EXPECT_THROW(decode_checkpoint(flipped), LoadError);
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 9)), LoadError);
  auto version = bytes;
  version[8] = 7;
  EXPECT_THROW(decode_checkpoint(version), LoadError);
  EXPECT_THROW(load_checkpoint(tmp.path() / "missing.ckpt"), LoadError);
  EXPECT_NO_THROW(decode_checkpoint(bytes));
}
