// Copyright 2026 The URM Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "test_support.hpp"
#include "urm/gradcheck.hpp"

namespace urm {
namespace {

using testing::constant_model;
using testing::record;
using testing::vec;

Record scored(std::uint64_t id, double mean) {
  Record r = record(id, {0.0});
  r.true_mean = {mean};
  return r;
}

// Scores by the record's true mean through an arbitrary transform.
template <typename Fn>
struct TransformScorer {
  Fn fn;
  Assessment assess(const Record& r) const { return {fn(r.true_mean[0]), 0.0, 0.0, 0.0}; }
  UncertaintyKind default_uncertainty() const { return UncertaintyKind::aleatoric; }
};

TEST(PairwiseAccuracy, Counting) {
  const OracleScorer s({1.0});
  std::vector<PreferencePair> pairs{{scored(0, 2), scored(1, 1), {}},
                                    {scored(2, 5), scored(3, 0), {}},
                                    {scored(4, 1), scored(5, 0.5), {}},
                                    {scored(6, 0), scored(7, 4), {}}};
  EXPECT_EQ(eval_pairwise_accuracy(s, pairs), 0.75);
  EXPECT_THROW(eval_pairwise_accuracy(s, std::vector<PreferencePair>{}), InputError);
}

TEST(PairwiseAccuracy, TiesAreIncorrect) {
  const auto m = constant_model(1, {0.4}, {0.0}, {1.0});
  std::vector<PreferencePair> pairs{{scored(0, 2), scored(1, 1), {}}, {scored(2, 5), scored(3, 0), {}}};
  EXPECT_EQ(eval_pairwise_accuracy(m, pairs), 0.0);
}

TEST(PairwiseAccuracy, InvariantUnderIncreasingTransforms) {
  Rng rng(4);
  std::vector<PreferencePair> pairs;
  for (std::uint64_t i = 0; i < 300; ++i) pairs.push_back({scored(2 * i, rng.normal()), scored(2 * i + 1, rng.normal()), {}});
  const double base = eval_pairwise_accuracy(TransformScorer{[](double x) { return x; }}, pairs);
  EXPECT_EQ(eval_pairwise_accuracy(TransformScorer{[](double x) { return std::exp(x); }}, pairs), base);
  EXPECT_EQ(eval_pairwise_accuracy(TransformScorer{[](double x) { return 3.0 * x * x * x + x - 7.0; }}, pairs), base);
}

TEST(PairwiseAccuracy, OracleOnNoiseFreePairs) {
  const auto w = gen_world({}, 6);
  const auto pairs = make_pairs(sample_records(w, 2000, 0.0, 1), w, 3000, 2);
  std::size_t ties = 0;
  for (const auto& p : pairs) ties += w.utility(p.chosen.true_mean) == w.utility(p.rejected.true_mean) ? 1 : 0;
  EXPECT_EQ(eval_pairwise_accuracy(OracleScorer(w.weights()), pairs),
            1.0 - static_cast<double>(ties) / static_cast<double>(pairs.size()));
}

TEST(KlPenalty, LinearFormula) {
  EXPECT_NEAR(kl_penalized_reward(1.0, 0.5, 0.1), 0.95, 1e-15);
  EXPECT_EQ(kl_penalized_reward(1.7, 0.5, 0.0), 1.7);
  EXPECT_EQ(kl_penalized_reward(1.7, 0.0, 0.3), 1.7);
  EXPECT_THROW(kl_penalized_reward(1.0, -0.1, 0.1), InputError);
}

TEST(ExampleLoss, FullModelGradientMatchesFiniteDifferences) {
  Rng rng(15);
  const auto schema = Schema::make(4, 2);
  for (LossKind kind : {LossKind::mle, LossKind::regression, LossKind::deterministic}) {
    const auto model = UrmModel::random(schema, head_kind_for(kind), Architecture{{5}, 6}, {0.5, 0.5}, rng);
    Record r = record(0, {0.4, -1.0, 0.3, 2.0});
    r.labels = {0.7, -0.4};
    const std::vector<double> alpha{0.8, -1.3};
    const std::size_t nt = model.trunk().parameter_count();
    auto with = [&](std::span<const double> p) {
      UrmModel m = model;
      std::copy(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(nt), m.trunk().params().begin());
      std::copy(p.begin() + static_cast<std::ptrdiff_t>(nt), p.end(), m.head().params().begin());
      return m;
    };
    auto loss = [&](std::span<const double> p) {
      detail::ExampleWorkspace ws;
      return detail::example_loss(with(p), kind, r, alpha, ws, 1.0, {}, {});
    };
    auto grad = [&](std::span<const double> p) {
      detail::ExampleWorkspace ws;
      const auto m = with(p);
      std::vector<double> gt(nt, 0.0);
      std::vector<double> gh(m.head().parameter_count(), 0.0);
      detail::example_loss(m, kind, r, alpha, ws, 1.0, gt, gh);
      gt.insert(gt.end(), gh.begin(), gh.end());
      return gt;
    };
    auto params = vec(model.trunk().params());
    const auto head = vec(model.head().params());
    params.insert(params.end(), head.begin(), head.end());
    EXPECT_LE(finite_diff_check(loss, grad, params, 1e-6), 1e-4) << to_string(kind);
  }
}

TEST(TrainUrm, ConstantLabelsAreRecovered) {
  // Zero-noise data with a single value: the optimum is mu = c and the
  // smallest admissible spread.
  Rng rng(3);
  const double c = 1.25;
  std::vector<Record> records;
  for (std::uint64_t i = 0; i < 1200; ++i) {
    Record r = record(i, {rng.normal(), rng.normal(), rng.normal()});
    r.labels = {c, c};
    records.push_back(r);
  }
  TrainConfig cfg;
  cfg.epochs = 60;
  cfg.batch_size = 32;
  cfg.optimizer.learning_rate = 3e-3;
  cfg.seed = 2;
  const auto result = train_urm(records, Schema::make(3, 2), cfg);
  for (int t = 0; t < 50; ++t) {
    const std::vector<double> x{rng.normal(), rng.normal(), rng.normal()};
    const auto d = result.model.distribution(x);
    for (std::size_t k = 0; k < 2; ++k) {
      EXPECT_LE(std::abs(d.mu[k] - c), 0.05);
      EXPECT_LE(std::exp(d.log_std[k]), 0.15);
    }
  }
}

class SmallWorldTraining : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { data_ = new testing::SmallWorld(testing::small_world(2, 3000, 300)); }
  static void TearDownTestSuite() { delete data_; }
  static TrainConfig config(LossKind loss) {
    TrainConfig cfg;
    cfg.loss = loss;
    cfg.epochs = 8;
    cfg.seed = 9;
    return cfg;
  }
  static inline testing::SmallWorld* data_ = nullptr;
};

TEST_F(SmallWorldTraining, SameSeedSameModel) {
  const auto a = train_urm(data_->train, data_->world.schema(), config(LossKind::mle));
  const auto b = train_urm(data_->train, data_->world.schema(), config(LossKind::mle));
  EXPECT_TRUE(a.model == b.model);
  EXPECT_EQ(a.best_epoch, b.best_epoch);
  EXPECT_EQ(a.history.size(), 9u);
}

TEST_F(SmallWorldTraining, RecordsAreNotMutated) {
  const auto before = data_->train;
  train_urm(data_->train, data_->world.schema(), config(LossKind::regression));
  EXPECT_EQ(before, data_->train);
}

TEST_F(SmallWorldTraining, ZeroEpochsKeepsInitialization) {
  auto cfg = config(LossKind::mle);
  cfg.epochs = 0;
  const auto result = train_urm(data_->train, data_->world.schema(), cfg);
  EXPECT_EQ(result.best_epoch, 0u);
  EXPECT_EQ(result.model.metadata().steps, 0u);
  EXPECT_EQ(result.history.size(), 1u);
}

TEST_F(SmallWorldTraining, RegressionCollapsesSpread) {
  auto mean_std = [&](const UrmModel& m) {
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& r : data_->id_probe) {
      for (double s : m.distribution(r.features).log_std) {
        total += std::exp(s);
        ++count;
      }
    }
    return total / static_cast<double>(count);
  };
  const auto mle = train_urm(data_->train, data_->world.schema(), config(LossKind::mle));
  const auto reg = train_urm(data_->train, data_->world.schema(), config(LossKind::regression));
  EXPECT_LE(mean_std(reg.model), 0.1 * mean_std(mle.model));
}

TEST_F(SmallWorldTraining, DeterministicHeadTrains) {
  const auto result = train_urm(data_->train, data_->world.schema(), config(LossKind::deterministic));
  EXPECT_EQ(result.model.head_kind(), HeadKind::deterministic);
  EXPECT_LT(result.history.back().val_loss, result.history.front().val_loss);
  EXPECT_TRUE(std::isnan(result.history.back().mean_log_std));
}

TEST(MergeModels, Endpoints) {
  const auto a = constant_model(2, {1.0, 2.0}, {0.0, 0.5}, {0.3, 0.7}, 1);
  const auto b = constant_model(2, {3.0, -2.0}, {1.0, 0.1}, {0.6, 0.4}, 2);
  EXPECT_EQ(merge_models(a, b, 1.0).flat_parameters(), a.flat_parameters());
  EXPECT_EQ(merge_models(a, b, 0.0).flat_parameters(), b.flat_parameters());
}

TEST(MergeModels, Midpoint) {
  const auto a = constant_model(1, {2.0}, {0.0}, {1.0}, 1);
  const auto b = constant_model(1, {4.0}, {0.0}, {1.0}, 2);
  EXPECT_EQ(merge_models(a, b, 0.5).distribution(std::vector<double>{0.0}).mu[0], 3.0);
}

TEST(MergeModels, SelfMergeIsIdentity) {
  Rng rng(7);
  const auto m = UrmModel::random(Schema::make(3, 2), HeadKind::probabilistic, Architecture{{4}, 5}, {0.5, 0.5}, rng);
  for (double lambda : {0.0, 0.13, 0.5, 0.77, 1.0}) EXPECT_EQ(merge_models(m, m, lambda).flat_parameters(), m.flat_parameters());
}

TEST(MergeModels, ArchitectureMismatch) {
  Rng rng(7);
  const auto a = UrmModel::random(Schema::make(3, 2), HeadKind::probabilistic, Architecture{{4}, 5}, {0.5, 0.5}, rng);
  const auto b = UrmModel::random(Schema::make(3, 2), HeadKind::probabilistic, Architecture{{4}, 6}, {0.5, 0.5}, rng);
  EXPECT_THROW(merge_models(a, b, 0.5), ConfigError);
  EXPECT_THROW(merge_models(a, a, 1.5), ConfigError);
}

}  // namespace
}  // namespace urm
