#include "avgk/training.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "avgk/error.hpp"
#include "avgk/losses.hpp"
#include "support/oracles.hpp"

namespace avgk {
namespace {

DatasetSplit small_dataset(std::uint64_t seed, std::size_t classes = 6) {
  SuperclassLayout layout;
  layout.num_classes = classes;
  layout.num_superclasses = classes / 2;
  layout.separation = 1.0;
  layout.spread = 4.0;
  return generate(make_superclass_spec(layout, seed, 600, 200, 200));
}

ModelShape shape_for(const DatasetSplit& d) {
  ModelShape s;
  s.input_dim = d.feature_dim();
  s.hidden = {16};
  s.num_classes = d.num_classes;
  return s;
}

TrainConfig quick_config() {
  TrainConfig cfg;
  cfg.k_target = 2;
  cfg.max_epochs = 4;
  cfg.batch_size = 32;
  cfg.rng_seed = 3;
  return cfg;
}

TEST(LearningRateAt, StepSchedule) {
  TrainConfig cfg;
  cfg.learning_rate = 1.0;
  cfg.lr_schedule = {{2, 10.0}, {4, 2.0}};
  EXPECT_DOUBLE_EQ(learning_rate_at(cfg, 0), 1.0);
  EXPECT_DOUBLE_EQ(learning_rate_at(cfg, 1), 1.0);
  EXPECT_DOUBLE_EQ(learning_rate_at(cfg, 2), 0.1);
  EXPECT_DOUBLE_EQ(learning_rate_at(cfg, 3), 0.1);
  EXPECT_DOUBLE_EQ(learning_rate_at(cfg, 4), 0.05);
}

TEST(LossKind, ParseRoundTrip) {
  for (LossKind k : {LossKind::kCe, LossKind::kAn, LossKind::kEpr, LossKind::kAvgK, LossKind::kBcePos}) {
    EXPECT_EQ(parse_loss_kind(to_string(k)), k);
  }
  EXPECT_FALSE(parse_loss_kind("bogus").has_value());
}

TEST(TrainConfig, RejectsBadValues) {
  TrainConfig cfg;
  cfg.k_target = 10;
  EXPECT_THROW(cfg.validate(10), InvalidConfig);
  cfg = TrainConfig{};
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(10), InvalidConfig);
  cfg = TrainConfig{};
  cfg.learning_rate = -1.0;
  EXPECT_THROW(cfg.validate(10), InvalidConfig);
  EXPECT_NO_THROW(TrainConfig{}.validate(10));
}

TEST(ComputeBatchLoss, SingleHeadLossesUseTheMlHead) {
  std::mt19937_64 rng(1);
  ForwardCache c;
  c.z_ml = testing::random_matrix(rng, 4, 6);
  c.z_sccp = testing::random_matrix(rng, 4, 6);
  const LabelVector y = testing::random_labels(rng, 4, 6);
  TrainConfig cfg;
  cfg.loss = LossKind::kCe;
  const BatchLoss b = compute_batch_loss(c, y, cfg);
  EXPECT_TRUE(b.grad_sccp.empty());
  EXPECT_DOUBLE_EQ(b.value, ce_loss(c.z_ml, y).value);
}

TEST(ComputeBatchLoss, AvgKWithZeroAlphaOnlyTouchesTrueLabels) {
  std::mt19937_64 rng(2);
  ForwardCache c;
  c.z_ml = testing::random_matrix(rng, 5, 6);
  c.z_sccp = testing::random_matrix(rng, 5, 6);
  const LabelVector y = testing::random_labels(rng, 5, 6);
  TrainConfig cfg;
  cfg.loss = LossKind::kAvgK;
  cfg.alpha = 0.0;
  cfg.k_target = 3;
  const BatchLoss b = compute_batch_loss(c, y, cfg);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 6; ++j) {
      if (j == y[i]) {
        EXPECT_NE(b.grad_ml(i, j), 0.0);
      } else {
        EXPECT_EQ(b.grad_ml(i, j), 0.0);
      }
    }
  }
}

TEST(Train, IsDeterministicForAFixedSeed) {
  const DatasetSplit d = small_dataset(5);
  const TwoHeadMlp m = TwoHeadMlp::initialize(shape_for(d), 5);
  const TrainResult a = train(m, d, quick_config());
  const TrainResult b = train(m, d, quick_config());
  EXPECT_EQ(a.best, b.best);
  ASSERT_EQ(a.log.size(), b.log.size());
  for (std::size_t e = 0; e < a.log.size(); ++e) EXPECT_EQ(to_json(a.log[e]), to_json(b.log[e]));
}

TEST(Train, ZeroEpochsReturnsTheInitialModel) {
  const DatasetSplit d = small_dataset(6);
  const TwoHeadMlp m = TwoHeadMlp::initialize(shape_for(d), 6);
  TrainConfig cfg = quick_config();
  cfg.max_epochs = 0;
  const TrainResult r = train(m, d, cfg);
  EXPECT_EQ(r.best.model, m);
  EXPECT_EQ(r.best.epoch, 0u);
  ASSERT_EQ(r.log.size(), 1u);
  EXPECT_FALSE(r.log[0].train_loss.has_value());
  EXPECT_EQ(r.best.best_val_accuracy, validate_model(m, d.val, 2, cfg.eval_batch_size).accuracy);
}

TEST(Train, BestCheckpointReproducesItsValidationScore) {
  const DatasetSplit d = small_dataset(7);
  TrainConfig cfg = quick_config();
  cfg.max_epochs = 6;
  const TrainResult r = train(TwoHeadMlp::initialize(shape_for(d), 7), d, cfg);
  const ValidationResult v = validate_model(r.best.model, d.val, cfg.k_target, cfg.eval_batch_size);
  EXPECT_EQ(v.accuracy, r.best.best_val_accuracy);
  EXPECT_EQ(v.lambda_val, r.best.lambda_val);
  double best = 0.0;
  for (const EpochLog& e : r.log) best = std::max(best, e.val_avg_k_accuracy);
  EXPECT_EQ(best, r.best.best_val_accuracy);
}

TEST(Train, SeparableTwoClassProblemReachesPerfectAccuracy) {
  SyntheticSpec spec;
  spec.num_classes = 2;
  spec.feature_dim = 2;
  spec.means = {{-20.0, 0.0}, {20.0, 0.0}};
  spec.priors = {0.5, 0.5};
  spec.seed = 8;
  spec.n_train = 200;
  spec.n_val = 100;
  spec.n_test = 100;
  const DatasetSplit d = generate(spec);
  TrainConfig cfg;
  cfg.loss = LossKind::kCe;
  cfg.k_target = 1;
  cfg.max_epochs = 50;
  cfg.batch_size = 20;
  cfg.learning_rate = 0.05;
  ModelShape s;
  s.input_dim = 2;
  s.hidden = {8};
  s.num_classes = 2;
  const TrainResult r = train(TwoHeadMlp::initialize(s, 8), d, cfg);
  EXPECT_EQ(r.best.best_val_accuracy, 1.0);
}

TEST(Train, PatienceStopsEarly) {
  const DatasetSplit d = small_dataset(9);
  TrainConfig cfg = quick_config();
  cfg.max_epochs = 40;
  cfg.early_stop_patience = 2;
  const TrainResult r = train(TwoHeadMlp::initialize(shape_for(d), 9), d, cfg);
  ASSERT_LT(r.log.size(), 41u);
  // The run ends exactly `patience` epochs after the last improvement.
  EXPECT_EQ(r.log.size() - 1, r.best.epoch + 2);
}

TEST(Train, NonFiniteUpdatesAbort) {
  const DatasetSplit d = small_dataset(10);
  TrainConfig cfg = quick_config();
  cfg.loss = LossKind::kCe;
  cfg.learning_rate = 1e300;
  cfg.momentum = 0.0;
  EXPECT_THROW(train(TwoHeadMlp::initialize(shape_for(d), 10), d, cfg), TrainingAborted);
}

TEST(Train, EmptyValidationSplitIsRejected) {
  DatasetSplit d = small_dataset(11);
  d.val = Split{};
  EXPECT_THROW(train(TwoHeadMlp::initialize(shape_for(d), 11), d, quick_config()), InvalidData);
}

}  // namespace
}  // namespace avgk
