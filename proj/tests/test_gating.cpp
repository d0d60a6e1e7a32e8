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

#include "urm/gating.hpp"
#include "urm/gradcheck.hpp"
#include "urm/trainer.hpp"

namespace urm {
namespace {

std::vector<double> vec(std::span<const double> s) { return {s.begin(), s.end()}; }

Record record(std::uint64_t id, std::vector<double> features) {
  Record r;
  r.id = id;
  r.features = std::move(features);
  return r;
}

GatingNet zero_gate(std::size_t d, std::size_t n) {
  Rng rng(0);
  GatingNet g = GatingNet::random(d, n, 8, rng);
  std::fill(g.net().params().begin(), g.net().params().end(), 0.0);
  return g;
}

TEST(Combine, DotProduct) {
  EXPECT_NEAR(combine(std::vector<double>{1, 2, 3}, std::vector<double>{0.2, 0.3, 0.5}), 2.3, 1e-15);
}

TEST(Combine, OneHotSelectsAttribute) {
  const std::vector<double> s{4.0, -1.5, 9.0};
  for (std::size_t k = 0; k < 3; ++k) {
    std::vector<double> w(3, 0.0);
    w[k] = 1.0;
    EXPECT_EQ(combine(s, w), s[k]);
  }
}

TEST(Combine, ZeroWeights) { EXPECT_EQ(combine(std::vector<double>{1, 2}, std::vector<double>{0, 0}), 0.0); }

TEST(Combine, Linear) {
  Rng rng(2);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> s1(4), s2(4), w(4), mix(4);
    for (std::size_t i = 0; i < 4; ++i) {
      s1[i] = rng.uniform(-3, 3);
      s2[i] = rng.uniform(-3, 3);
      w[i] = rng.uniform(0, 1);
    }
    const double a = rng.uniform(-2, 2);
    const double b = rng.uniform(-2, 2);
    for (std::size_t i = 0; i < 4; ++i) mix[i] = a * s1[i] + b * s2[i];
    EXPECT_NEAR(combine(mix, w), a * combine(s1, w) + b * combine(s2, w), 1e-12);
  }
}

TEST(Softmax, HandEvaluated) {
  const auto w = softmax(std::vector<double>{std::log(2.0), 0.0});
  EXPECT_NEAR(w[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(w[1], 1.0 / 3.0, 1e-15);
}

TEST(GatingForward, ZeroNetIsUniform) {
  const auto w = gating_forward(zero_gate(3, 4), std::vector<double>{1.0, -2.0, 0.5});
  EXPECT_EQ(w.weights, (std::vector<double>{0.25, 0.25, 0.25, 0.25}));
  EXPECT_EQ(w.source, WeightSource::gated);
}

TEST(GatingForward, AlwaysOnSimplex) {
  Rng rng(6);
  const auto gate = GatingNet::random(5, 4, 16, rng);
  for (int t = 0; t < 500; ++t) {
    std::vector<double> h(5);
    for (auto& v : h) v = rng.uniform(-20, 20);
    const auto w = gating_forward(gate, h).weights;
    double total = 0.0;
    for (double v : w) {
      EXPECT_GE(v, 0.0);
      total += v;
    }
    EXPECT_NEAR(total, 1.0, 1e-9);
  }
}

TEST(RankingLoss, ValuesAndSlope) {
  EXPECT_NEAR(ranking_loss(0.0), std::log(2.0), 1e-15);
  EXPECT_NEAR(ranking_loss(800.0), 0.0, 1e-300);
  EXPECT_NEAR(ranking_loss(-800.0), 800.0, 1e-9);
  for (double m : {-3.0, -0.2, 0.0, 0.7, 4.0}) {
    const double numeric = (ranking_loss(m + 1e-6) - ranking_loss(m - 1e-6)) / 2e-6;
    EXPECT_NEAR(ranking_loss_slope(m), numeric, 1e-8);
  }
}

std::vector<GatingExample> random_examples(std::size_t count, std::size_t d, std::size_t n, Rng& rng) {
  std::vector<GatingExample> out(count);
  for (auto& ex : out) {
    ex.chosen_h.resize(d);
    ex.rejected_h.resize(d);
    ex.chosen_scores.resize(n);
    ex.rejected_scores.resize(n);
    for (auto& v : ex.chosen_h) v = rng.normal();
    for (auto& v : ex.rejected_h) v = rng.normal();
    for (auto& v : ex.chosen_scores) v = rng.normal();
    for (auto& v : ex.rejected_scores) v = rng.normal();
  }
  return out;
}

TEST(GatingLoss, GradientMatchesFiniteDifferences) {
  Rng rng(17);
  const auto examples = random_examples(6, 4, 3, rng);
  const auto gate = GatingNet::random(4, 3, 5, rng);
  auto with = [&](std::span<const double> p) {
    GatingNet g = gate;
    std::copy(p.begin(), p.end(), g.net().params().begin());
    return g;
  };
  auto loss = [&](std::span<const double> p) {
    std::vector<double> scratch(p.size(), 0.0);
    return gating_loss_and_grad(with(p), examples, scratch);
  };
  auto grad = [&](std::span<const double> p) {
    std::vector<double> g(p.size(), 0.0);
    gating_loss_and_grad(with(p), examples, g);
    return g;
  };
  EXPECT_LE(finite_diff_check(loss, grad, gate.net().params(), 1e-6), 1e-4);
}

TEST(TrainGating, DegenerateInputsStayAtLogTwo) {
  // Chosen and rejected are indistinguishable: margin is always zero, so the
  // tie rule scores every pair as incorrect and the loss cannot move.
  std::vector<GatingExample> examples(8, GatingExample{{1.0, 2.0}, {0.5, 0.5}, {1.0, 2.0}, {0.5, 0.5}});
  GatingTrainConfig cfg;
  cfg.hidden_width = 4;
  cfg.steps = 50;
  cfg.batch_size = 4;
  const auto result = train_gating(examples, examples, cfg);
  EXPECT_EQ(result.best_val_accuracy, 0.0);
  EXPECT_EQ(gating_accuracy(result.gate, examples), 0.0);
  for (const auto& h : result.history) EXPECT_NEAR(h.train_loss, std::log(2.0), 1e-12);
}

TEST(TrainGating, OverfitsSinglePair) {
  GatingExample ex{{0.3, -0.1}, {1.0, -2.0, 0.0}, {-0.4, 0.2}, {0.0, 1.0, 0.5}};
  GatingTrainConfig cfg;
  cfg.hidden_width = 8;
  cfg.steps = 300;
  cfg.optimizer.learning_rate = 1e-2;
  const auto result = train_gating({ex}, {}, cfg);
  EXPECT_GT(gated_reward(result.gate, ex.chosen_h, ex.chosen_scores),
            gated_reward(result.gate, ex.rejected_h, ex.rejected_scores));
}

TEST(TrainGating, LearnsTheDecisiveAttribute) {
  // Preference depends only on attribute 0.
  Rng rng(23);
  auto examples = random_examples(600, 4, 4, rng);
  for (auto& ex : examples) {
    if (ex.chosen_scores[0] < ex.rejected_scores[0]) std::swap(ex.chosen_scores, ex.rejected_scores);
  }
  std::vector<GatingExample> train(examples.begin(), examples.begin() + 500);
  std::vector<GatingExample> val(examples.begin() + 500, examples.end());
  GatingTrainConfig cfg;
  cfg.hidden_width = 16;
  cfg.steps = 600;
  cfg.optimizer.learning_rate = 3e-3;
  cfg.seed = 4;
  const auto result = train_gating(train, val, cfg);
  std::vector<double> mean(4, 0.0);
  for (const auto& ex : val) {
    const auto w = gating_forward(result.gate, ex.chosen_h).weights;
    for (std::size_t i = 0; i < 4; ++i) mean[i] += w[i] / static_cast<double>(val.size());
  }
  for (std::size_t i = 1; i < 4; ++i) EXPECT_GT(mean[0], mean[i]);
}

TEST(TrainGating, FreezesHeadAndTrunk) {
  Rng rng(31);
  const auto schema = Schema::make(3, 2);
  const auto model = UrmModel::random(schema, HeadKind::probabilistic, Architecture{{6}, 5}, {0.5, 0.5}, rng);
  std::vector<PreferencePair> pairs;
  for (std::uint64_t i = 0; i < 20; ++i) {
    Record a = record(2 * i, {rng.normal(), rng.normal(), rng.normal()});
    Record b = record(2 * i + 1, {rng.normal(), rng.normal(), rng.normal()});
    pairs.push_back({a, b, std::nullopt});
  }
  GatingTrainConfig cfg;
  cfg.hidden_width = 4;
  cfg.steps = 30;
  const auto [gated, result] = train_gating(model, pairs, {}, cfg);
  EXPECT_EQ(vec(gated.trunk().params()), vec(model.trunk().params()));
  EXPECT_EQ(vec(gated.head().params()), vec(model.head().params()));
  ASSERT_TRUE(gated.gating().has_value());
  EXPECT_EQ(gated.weights_for(pairs[0].chosen.features).source, WeightSource::gated);
}

}  // namespace
}  // namespace urm
