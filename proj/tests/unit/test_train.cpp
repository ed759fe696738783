#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "../support/tiny_task.hpp"
#include "imu2emg/core/errors.hpp"
#include "imu2emg/core/ops.hpp"
#include "imu2emg/model/config.hpp"
#include "imu2emg/train/optim.hpp"
#include "imu2emg/train/trainer.hpp"

using namespace imu2emg;
using namespace imu2emg::train;

namespace {

struct TinySetup {
  std::vector<data::SubjectDataset> subjects;
  data::LosoFold fold;
  data::TrainValSplit split;
};

TinySetup tiny_setup(std::size_t cycles, bool with_val) {
  TinySetup s;
  s.subjects = imu2emg::testing::tiny_population(3, cycles, 11);
  s.fold = data::make_loso_folds({"S01", "S02", "S03"})[2];
  auto pool = data::pooled(s.subjects, s.fold.train_subjects);
  if (with_val) {
    RngState rng(5);
    s.split = data::train_val_split(s.fold, pool, rng);
  } else {
    s.split.train = pool;
  }
  return s;
}

bool same_bits(const model::ModelParams<float>& a, const model::ModelParams<float>& b) {
  bool same = true;
  std::vector<const Tensor<float>*> ta;
  a.for_each_const([&](const std::string&, const Tensor<float>& t) { ta.push_back(&t); });
  std::size_t k = 0;
  b.for_each_const([&](const std::string&, const Tensor<float>& t) {
    const auto x = ta[k++]->data();
    const auto y = t.data();
    same = same && x.size() == y.size() && std::memcmp(x.data(), y.data(), x.size() * sizeof(float)) == 0;
  });
  return same;
}

}  // namespace

TEST(MseLoss, HandExamples) {
  Tape<double> tape;
  Tensor<double> target({1, 2}, std::vector<double>{1.0, 1.0});
  auto a = ops::mse_loss(tape.constant(Tensor<double>({1, 2}, std::vector<double>{0.0, 1.0})), target);
  EXPECT_DOUBLE_EQ(a.value().item(), 0.5);
  auto b = ops::mse_loss(tape.constant(Tensor<double>({1, 2}, std::vector<double>{2.0, 2.0})), target);
  EXPECT_DOUBLE_EQ(b.value().item(), 1.0);
  auto c = ops::mse_loss(tape.constant(target), target);
  EXPECT_EQ(c.value().item(), 0.0);
  EXPECT_THROW(ops::mse_loss(tape.constant(Tensor<double>({2, 1})), target), DimensionError);
}

TEST(Adam, HandStepOnScalar) {
  Tensor<double> theta({1}, 1.0);
  theta.set_requires_grad(true);
  theta.zero_grad();
  theta.grad()[0] = 1.0;
  std::vector<ParamRef<double>> refs{{"x.weight", &theta, true}};
  Adam<double> opt({OptimizerKind::adamw, 0.1, 0.0, 0.9, 0.999, 1e-8});
  opt.step(refs);
  EXPECT_NEAR(theta[0], 0.900000, 1e-6);
  EXPECT_EQ(opt.state().step, 1u);
  ASSERT_EQ(opt.state().m.size(), 1u);
  EXPECT_EQ(opt.state().m[0].size(), theta.size());
}

TEST(Adam, ZeroGradsLeaveParamsUnchanged) {
  RngState rng(1);
  auto p = model::init_params<double>(model::tiny_config(), rng);
  const auto before = p;
  p.zero_grad();
  auto refs = param_refs(p);
  Adam<double> opt({OptimizerKind::adamw, 0.1, 0.0});
  for (int i = 0; i < 3; ++i) opt.step(refs);
  std::vector<double> a, b;
  p.for_each_const([&](const std::string&, const Tensor<double>& t) { a.insert(a.end(), t.data().begin(), t.data().end()); });
  before.for_each_const([&](const std::string&, const Tensor<double>& t) { b.insert(b.end(), t.data().begin(), t.data().end()); });
  EXPECT_EQ(a, b);
}

TEST(Adam, DecoupledDecayShrinksWeightsOnly) {
  Tensor<double> w({1}, 2.0), bias({1}, 2.0);
  for (auto* t : {&w, &bias}) {
    t->set_requires_grad(true);
    t->zero_grad();
  }
  std::vector<ParamRef<double>> refs{{"a.weight", &w, true}, {"a.bias", &bias, false}};
  Adam<double> opt({OptimizerKind::adamw, 0.1, 0.5});
  opt.step(refs);
  EXPECT_NEAR(w[0], 2.0 - 0.1 * 0.5 * 2.0, 1e-15);
  EXPECT_EQ(bias[0], 2.0);
}

TEST(Adam, CoupledDecayGoesThroughMoments) {
  // With g = 0 and L2 decay the effective gradient is wd * theta > 0, and
  // the first bias-corrected step moves theta by lr.
  Tensor<double> w({1}, 2.0);
  w.set_requires_grad(true);
  w.zero_grad();
  std::vector<ParamRef<double>> refs{{"a.weight", &w, true}};
  Adam<double> opt({OptimizerKind::adam, 0.1, 0.5});
  opt.step(refs);
  EXPECT_NEAR(w[0], 1.9, 1e-7);
}

TEST(Adam, ParamRefsExcludeNormsAndBiasesFromDecay) {
  RngState rng(2);
  auto p = model::init_params<float>(model::tiny_config(), rng);
  for (const auto& r : param_refs(p)) {
    const bool is_weight = r.name.ends_with(".weight");
    EXPECT_EQ(r.decay, is_weight) << r.name;
    if (r.name.find("norm") != std::string::npos || r.name.find("gamma") != std::string::npos)
      EXPECT_FALSE(r.decay) << r.name;
  }
}

TEST(GradClip, HandExamples) {
  Tensor<double> g({2});
  g.set_requires_grad(true);
  g.zero_grad();
  g.grad()[0] = 3.0;
  g.grad()[1] = 4.0;
  std::vector<ParamRef<double>> refs{{"g", &g, false}};
  auto r = grad_clip_norm<double>(refs, 1.0);
  EXPECT_TRUE(r.applied);
  EXPECT_DOUBLE_EQ(r.pre_norm, 5.0);
  EXPECT_NEAR(g.grad()[0], 0.6, 1e-12);
  EXPECT_NEAR(g.grad()[1], 0.8, 1e-12);

  g.grad()[0] = 0.3;
  g.grad()[1] = 0.4;
  r = grad_clip_norm<double>(refs, 1.0);
  EXPECT_FALSE(r.applied);
  EXPECT_EQ(g.grad()[0], 0.3);
  EXPECT_EQ(g.grad()[1], 0.4);
  EXPECT_THROW(grad_clip_norm<double>(refs, 0.0), ConfigError);
}

TEST(GradClip, PostNormNeverExceedsThreshold) {
  RngState rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Tensor<float>> ts;
    for (int k = 0; k < 4; ++k) ts.emplace_back(Shape{1 + rng.below(50)});
    std::vector<ParamRef<float>> refs;
    const double scale = std::pow(10.0, rng.uniform(-3, 4));
    for (auto& t : ts) {
      t.set_requires_grad(true);
      t.zero_grad();
      for (auto& v : t.grad()) v = static_cast<float>(rng.normal() * scale);
      refs.push_back({"t", &t, false});
    }
    const double threshold = rng.uniform(0.1, 2.0);
    auto r = grad_clip_norm<float>(refs, threshold);
    EXPECT_LE(global_grad_norm<float>(refs), threshold + 1e-9);
    EXPECT_LE(r.post_norm, threshold + 1e-9);
  }
}

TEST(EarlyStopping, PatienceOneStopsAfterFirstWorseEpoch) {
  EarlyStopping es(1);
  EXPECT_TRUE(es.update(1, 1.0));
  EXPECT_FALSE(es.should_stop(1));
  EXPECT_FALSE(es.update(2, 1.1));
  EXPECT_TRUE(es.should_stop(2));
  EXPECT_EQ(es.best_epoch(), 1u);
  EXPECT_EQ(es.best_loss(), 1.0);
}

TEST(EarlyStopping, EqualLossIsNotAnImprovement) {
  EarlyStopping es(3);
  es.update(1, 0.5);
  EXPECT_FALSE(es.update(2, 0.5));
  EXPECT_FALSE(es.should_stop(3));
  EXPECT_TRUE(es.should_stop(4));
}

TEST(TrainConfig, ValidationListsEveryProblem) {
  TrainConfig c;
  c.lr = 0;
  c.weight_decay = -1;
  c.patience = 0;
  try {
    c.validate();
    FAIL();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("lr"), std::string::npos);
    EXPECT_NE(msg.find("weight_decay"), std::string::npos);
    EXPECT_NE(msg.find("patience"), std::string::npos);
  }
}

TEST(Fit, EmptyTrainingSetIsConfigError) {
  auto s = tiny_setup(4, false);
  s.split.train.clear();
  EXPECT_THROW(fit<float>(s.fold, s.split, model::tiny_config(), TrainConfig{}), ConfigError);
}

TEST(Fit, RejectsTestSubjectSegments) {
  auto s = tiny_setup(4, false);
  s.split.train.push_back(&s.subjects[2].segments[0]);
  EXPECT_THROW(fit<float>(s.fold, s.split, model::tiny_config(), TrainConfig{}), ContractError);
}

TEST(Fit, SameSeedGivesIdenticalLog) {
  auto s = tiny_setup(6, true);
  TrainConfig c;
  c.max_epochs = 5;
  c.batch_size = 4;
  c.seed = 9;
  const auto a = fit<float>(s.fold, s.split, model::tiny_config(), c);
  const auto b = fit<float>(s.fold, s.split, model::tiny_config(), c);
  EXPECT_EQ(a.log.to_csv(false), b.log.to_csv(false));
  EXPECT_TRUE(same_bits(a.params, b.params));
  c.seed = 10;
  const auto d = fit<float>(s.fold, s.split, model::tiny_config(), c);
  EXPECT_NE(a.log.to_csv(false), d.log.to_csv(false));
}

TEST(Fit, AdamwWithoutDecayMatchesAdamBitwise) {
  auto s = tiny_setup(6, true);
  TrainConfig c;
  c.max_epochs = 4;
  c.batch_size = 4;
  c.weight_decay = 0.0;
  c.optimizer = OptimizerKind::adamw;
  const auto a = fit<float>(s.fold, s.split, model::tiny_config(), c);
  c.optimizer = OptimizerKind::adam;
  const auto b = fit<float>(s.fold, s.split, model::tiny_config(), c);
  EXPECT_EQ(a.log.to_csv(false), b.log.to_csv(false));
  EXPECT_TRUE(same_bits(a.params, b.params));
}

TEST(Fit, ReturnedParamsReplayBestValidationLoss) {
  auto s = tiny_setup(8, true);
  TrainConfig c;
  c.max_epochs = 30;
  c.patience = 3;
  c.batch_size = 4;
  c.lr = 3e-2;
  auto r = fit<double>(s.fold, s.split, model::tiny_config(), c);
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;
  for (const auto& e : r.log.epochs)
    if (e.val_loss < best) {
      best = e.val_loss;
      best_epoch = e.epoch;
    }
  EXPECT_EQ(r.log.best_epoch, best_epoch);
  EXPECT_EQ(r.log.best_loss, best);
  EXPECT_EQ(evaluate_loss(r.params, s.split.val), best);
  if (r.log.stopped_early) EXPECT_EQ(r.log.epochs.size(), best_epoch + c.patience);
}

TEST(Fit, PatienceOneStopsOnFirstRegression) {
  // A large step size makes validation loss bounce; whenever it rises the
  // loop must stop right there and hand back the previous epoch.
  auto s = tiny_setup(8, true);
  TrainConfig c;
  c.max_epochs = 200;
  c.patience = 1;
  c.batch_size = 4;
  c.lr = 0.3;
  auto r = fit<double>(s.fold, s.split, model::tiny_config(), c);
  ASSERT_TRUE(r.log.stopped_early);
  const auto& ep = r.log.epochs;
  ASSERT_GE(ep.size(), 2u);
  EXPECT_GE(ep.back().val_loss, ep[ep.size() - 2].val_loss);
  for (std::size_t i = 1; i + 1 < ep.size(); ++i) EXPECT_LT(ep[i].val_loss, ep[i - 1].val_loss);
  EXPECT_EQ(r.log.best_epoch, ep.size() - 1);
  EXPECT_EQ(evaluate_loss(r.params, s.split.val), ep[ep.size() - 2].val_loss);
}

TEST(Fit, LogCsvLayout) {
  TrainLog log;
  log.epochs.push_back({1, 0.5, 0.25, 1.5});
  log.epochs.push_back({2, 0.125, std::numeric_limits<double>::quiet_NaN(), 2.0});
  EXPECT_EQ(log.to_csv(false), "epoch,train_loss,val_loss,seconds\n1,0.5,0.25,\n2,0.125,,\n");
  EXPECT_EQ(log.to_csv(true), "epoch,train_loss,val_loss,seconds\n1,0.5,0.25,1.5\n2,0.125,,2\n");
}

TEST(Fit, BatchLossDecreasesOverFirstTenSteps) {
  auto s = tiny_setup(8, false);
  RngState rng(4);
  auto params = model::init_params<float>(model::tiny_config(), rng);
  auto refs = param_refs(params);
  Adam<float> opt({OptimizerKind::adamw, 3e-4, 1e-2});
  const auto b = make_batch<float>(s.split.train);
  std::vector<double> losses;
  for (int step = 0; step <= 10; ++step) {
    params.zero_grad();
    Tape<float> tape;
    auto loss = ops::mse_loss(model::forward(tape, params, tape.constant(b.inputs), true, rng), b.targets);
    losses.push_back(loss.value().item());
    tape.backward(loss);
    opt.step(refs);
  }
  for (std::size_t i = 1; i < losses.size(); ++i) EXPECT_LT(losses[i], losses[i - 1]) << "step " << i;
}

TEST(Fit, TinyTaskOverfitsEightCycles) {
  auto subjects = imu2emg::testing::tiny_population(2, 8, 21);
  const auto fold = data::make_loso_folds({"S01", "S02"})[1];
  data::TrainValSplit split;
  split.train = data::pointers(subjects[0].segments);
  ASSERT_EQ(split.train.size(), 8u);
  TrainConfig c;
  c.batch_size = 8;
  c.max_epochs = 2000;
  c.patience = 2000;
  c.lr = 1e-2;
  c.weight_decay = 0.0;
  auto r = fit<float>(fold, split, model::tiny_config(), c);
  EXPECT_LE(r.log.steps, 2000u);
  EXPECT_LT(evaluate_loss(r.params, split.train), 1e-3);
}
