#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <gtest/gtest.h>

#include "support.hpp"
#include "fedhar/training.hpp"

namespace fedhar {
namespace {

using testing::random_windows;
using testing::tiny_lstm;
using testing::tiny_transformer;

TrainConfig quick(std::size_t epochs, std::size_t patience = 0, std::uint64_t seed = 1) {
  TrainConfig c;
  c.batch_size = 8;
  c.lr = 5e-3;
  c.max_epochs = epochs;
  c.patience = patience;
  c.seed = seed;
  return c;
}

/// Every window labelled `label`, identical coordinates.
std::vector<WindowSample> relabelled(std::vector<WindowSample> windows, GestureLabel label) {
  for (auto& w : windows) w.label = label;
  return windows;
}

TEST(EpochOrder, IsAPermutationThatVariesByEpoch) {
  for (std::size_t n : {0u, 1u, 7u, 100u}) {
    auto order = epoch_order(n, 3, 1);
    auto sorted = order;
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::size_t> ident(n);
    std::iota(ident.begin(), ident.end(), 0u);
    EXPECT_EQ(sorted, ident);
  }
  EXPECT_EQ(epoch_order(50, 3, 2), epoch_order(50, 3, 2));
  EXPECT_NE(epoch_order(50, 3, 1), epoch_order(50, 3, 2));
  EXPECT_NE(epoch_order(50, 3, 1), epoch_order(50, 4, 1));
}

TEST(TrainLocal, ZeroEpochsReturnsInitialParameters) {
  Rng rng(1);
  const auto train = random_windows(rng, 16);
  const auto c = tiny_lstm();
  const auto init = build_model(c, 2);
  const auto r = train_local(init, c, train, {}, quick(0));
  EXPECT_TRUE(r.final_params == init);
  EXPECT_TRUE(r.best_params == init);
  EXPECT_TRUE(r.trace.epochs.empty());
  EXPECT_EQ(r.trace.best_epoch, 0u);
}

TEST(TrainLocal, PatienceOneStopsAfterFirstWorseEpoch) {
  // Validation labels contradict training labels, so every epoch of
  // training makes validation loss worse.
  Rng rng(2);
  const auto base = random_windows(rng, 16);
  const auto train = relabelled(base, GestureLabel::down);
  const auto val = relabelled(base, GestureLabel::up);
  const auto c = tiny_lstm();
  const auto r = train_local(build_model(c, 3), c, train, val, quick(10, 1));
  ASSERT_EQ(r.trace.epochs.size(), 2u);
  EXPECT_GT(r.trace.epochs[1].val_loss, r.trace.epochs[0].val_loss);
  EXPECT_EQ(r.trace.best_epoch, 1u);
  EXPECT_TRUE(r.trace.stopped_early);
  EXPECT_FALSE(r.best_params == r.final_params);
}

TEST(TrainLocal, RunsAllEpochsWhenStoppingDisabled) {
  Rng rng(3);
  const auto base = random_windows(rng, 16);
  const auto c = tiny_lstm();
  const auto r = train_local(build_model(c, 3), c, relabelled(base, GestureLabel::down),
                             relabelled(base, GestureLabel::up), quick(5, 0));
  EXPECT_EQ(r.trace.epochs.size(), 5u);
  EXPECT_FALSE(r.trace.stopped_early);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(r.trace.epochs[i].epoch, i + 1);
}

TEST(TrainLocal, DeterministicForFixedSeed) {
  Rng rng(4);
  const auto train = random_windows(rng, 24);
  const auto val = random_windows(rng, 8);
  for (const auto& c : {tiny_lstm(), tiny_transformer()}) {
    const auto init = build_model(c, 5);
    const auto a = train_local(init, c, train, val, quick(3, 5, 9));
    const auto b = train_local(init, c, train, val, quick(3, 5, 9));
    EXPECT_TRUE(a.final_params == b.final_params);
    EXPECT_TRUE(a.best_params == b.best_params);
    for (std::size_t i = 0; i < a.trace.epochs.size(); ++i) {
      EXPECT_EQ(a.trace.epochs[i].train_loss, b.trace.epochs[i].train_loss);
      EXPECT_EQ(a.trace.epochs[i].val_loss, b.trace.epochs[i].val_loss);
    }
    const auto other = train_local(init, c, train, val, quick(3, 5, 10));
    EXPECT_FALSE(a.final_params == other.final_params);
  }
}

TEST(TrainLocal, FullBatchIsInvariantToTrainingSetOrder) {
  // One batch holding the whole set: the shuffle only reorders columns, and
  // the mean loss does not depend on that order beyond rounding.
  Rng rng(5);
  auto train = random_windows(rng, 12);
  auto shuffled = train;
  rng.shuffle(std::span(shuffled));
  auto cfg = quick(3);
  cfg.batch_size = 64;
  const auto c = tiny_lstm();
  const auto init = build_model(c, 6);
  const auto a = train_local(init, c, train, {}, cfg);
  const auto b = train_local(init, c, shuffled, {}, cfg);
  for (std::size_t i = 0; i < a.final_params.size(); ++i) {
    EXPECT_LT((a.final_params[i].value - b.final_params[i].value).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(TrainLocal, BestParametersHoldLowestValidationLoss) {
  Rng rng(6);
  const auto train = random_windows(rng, 32);
  const auto val = random_windows(rng, 16);
  const auto c = tiny_lstm();
  const auto r = train_local(build_model(c, 7), c, train, val, quick(8, 0));
  double lowest = std::numeric_limits<double>::infinity();
  for (const auto& e : r.trace.epochs) lowest = std::min(lowest, e.val_loss);
  const auto best = r.trace.epochs.at(r.trace.best_epoch - 1);
  EXPECT_EQ(best.val_loss, lowest);
  EXPECT_LE(best.val_loss, r.trace.epochs.back().val_loss);
  EXPECT_NEAR(evaluate(r.best_params, c, val).loss, best.val_loss, 1e-12);
  EXPECT_NEAR(evaluate(r.final_params, c, val).loss, r.trace.epochs.back().val_loss, 1e-12);
}

TEST(TrainLocal, NoValidationSetMeansBestIsFinal) {
  Rng rng(7);
  const auto c = tiny_lstm();
  const auto r = train_local(build_model(c, 1), c, random_windows(rng, 10), {}, quick(2));
  EXPECT_TRUE(r.best_params == r.final_params);
  EXPECT_TRUE(std::isnan(r.trace.epochs[0].val_loss));
  EXPECT_EQ(r.trace.best_epoch, 2u);
}

TEST(TrainLocal, LearnsSeparableData) {
  Rng rng(8);
  const auto train = random_windows(rng, 64);
  const auto c = tiny_lstm(16, 1);
  auto cfg = quick(40);
  cfg.lr = 1e-2;
  const auto r = train_local(build_model(c, 2), c, train, {}, cfg);
  EXPECT_LT(r.trace.epochs.back().train_loss, r.trace.epochs.front().train_loss);
  EXPECT_GT(evaluate(r.final_params, c, train).accuracy, 0.5);
}

TEST(TrainLocal, RejectsBadInputs) {
  Rng rng(9);
  const auto c = tiny_lstm();
  const auto p = build_model(c, 0);
  const auto w = random_windows(rng, 4);
  EXPECT_THROW(train_local(p, c, {}, w, quick(1)), ConfigError);
  EXPECT_THROW(train_local(p, c, w, {}, quick(1, 3)), ConfigError);
  auto bad = quick(1);
  bad.batch_size = 0;
  EXPECT_THROW(train_local(p, c, w, w, bad), ConfigError);
  bad = quick(1);
  bad.lr = -1.0;
  EXPECT_THROW(train_local(p, c, w, w, bad), ConfigError);
}

TEST(TrainLocal, NonFiniteLossReportsCoordinates) {
  Rng rng(10);
  const auto c = tiny_lstm();
  auto p = build_model(c, 0);
  p.at("head.b")(0, 0) = std::numeric_limits<double>::quiet_NaN();
  try {
    train_local(p, c, random_windows(rng, 4), {}, quick(1));
    FAIL();
  } catch (const NumericHealthError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch 1, batch 0"), std::string::npos) << e.what();
  }
}

TEST(Evaluate, ConstantPredictorOnMatchingLabelsIsPerfect) {
  Rng rng(11);
  const auto c = tiny_lstm();
  auto p = build_model(c, 0);
  p.at("head.W").setZero();
  p.at("head.b").setZero();
  p.at("head.b")(3, 0) = 5.0;
  const auto data = relabelled(random_windows(rng, 10), GestureLabel::nothing);
  const auto ev = evaluate(p, c, data);
  EXPECT_EQ(ev.accuracy, 1.0);
  EXPECT_EQ(ev.confusion.counts[3][3], 10u);
}

TEST(Evaluate, ConstantPredictorOnBalancedDataScoresOneEighth) {
  Rng rng(12);
  const auto c = tiny_lstm();
  auto p = build_model(c, 0);
  p.at("head.W").setZero();
  p.at("head.b").setZero();
  p.at("head.b")(5, 0) = 5.0;
  const auto ev = evaluate(p, c, random_windows(rng, 80));
  EXPECT_DOUBLE_EQ(ev.accuracy, 0.125);
  for (std::size_t i = 0; i < kNumClasses; ++i) EXPECT_EQ(ev.confusion.counts[i][5], 10u);
}

TEST(Evaluate, MatchesIndependentPerWindowComputation) {
  Rng rng(13);
  const auto data = random_windows(rng, 300);  // spans two evaluation chunks
  for (const auto& c : {tiny_lstm(), tiny_transformer()}) {
    auto p = build_model(c, 14);
    for (auto& e : p) e.value.array() += 0.05;
    const auto ev = evaluate(p, c, data);
    const auto logits = forward_logits(p, c, data);
    double loss = 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto row = logits.row(static_cast<Eigen::Index>(i)).transpose().eval();
      const double m = row.maxCoeff();
      const double lse = m + std::log((row.array() - m).exp().sum());
      const auto label = static_cast<Eigen::Index>(index_of(data[i].label));
      loss += lse - row(label);
      Eigen::Index arg = 0;
      row.maxCoeff(&arg);
      correct += arg == label;
    }
    EXPECT_NEAR(ev.loss, loss / static_cast<double>(data.size()), 1e-12);
    EXPECT_DOUBLE_EQ(ev.accuracy, static_cast<double>(correct) / static_cast<double>(data.size()));
    EXPECT_EQ(ev.confusion.total(), data.size());
    EXPECT_DOUBLE_EQ(ev.accuracy, static_cast<double>(ev.confusion.correct()) /
                                      static_cast<double>(ev.confusion.total()));
    const auto preds = predict_all(p, c, data);
    ASSERT_EQ(preds.size(), data.size());
  }
}

TEST(Evaluate, EmptyDatasetIsAnError) {
  const auto c = tiny_lstm();
  EXPECT_THROW(evaluate(build_model(c, 0), c, {}), EvaluationError);
}

TEST(Evaluate, ConfusionAccuracyIsTraceOverTotal) {
  Rng rng(15);
  for (int trial = 0; trial < 100; ++trial) {
    ConfusionMatrix m;
    const auto n = rng.below(50);
    for (std::uint64_t i = 0; i < n; ++i) m.add(gesture_at(rng.below(8)), gesture_at(rng.below(8)));
    std::uint64_t trace = 0, total = 0;
    for (std::size_t i = 0; i < 8; ++i)
      for (std::size_t j = 0; j < 8; ++j) {
        total += m.counts[i][j];
        if (i == j) trace += m.counts[i][j];
      }
    EXPECT_EQ(m.accuracy(), total == 0 ? 0.0 : static_cast<double>(trace) / static_cast<double>(total));
  }
}

TEST(TraceCsv, HeaderAndRows) {
  TrainTrace t;
  t.epochs.push_back({1, 2.0, 1.5, 0.25});
  t.epochs.push_back({2, 1.0, 1.25, 0.5});
  std::ostringstream out;
  write_trace_csv(out, t);
  EXPECT_EQ(out.str(), "epoch,train_loss,val_loss,val_acc\n1,2,1.5,0.25\n2,1,1.25,0.5\n");
}

}  // namespace
}  // namespace fedhar
