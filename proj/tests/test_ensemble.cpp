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
#include <map>
#include <vector>

#include <gtest/gtest.h>

#include "test_support.hpp"

namespace urm {
namespace {

using testing::constant_model;

TEST(U1, MaxMinusMin) {
  EXPECT_NEAR(u1_reward_gap(std::vector<double>{1.0, 1.5, 0.8}), 0.7, 1e-15);
  EXPECT_EQ(u1_reward_gap(std::vector<double>{2.5, 2.5, 2.5}), 0.0);
  EXPECT_EQ(u1_reward_gap(std::vector<double>{-1.0, 1.0}), 2.0);
  EXPECT_THROW(u1_reward_gap(std::vector<double>{1.0}), ConfigError);
}

TEST(U1, TranslationAndScale) {
  Rng rng(3);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> r(4);
    for (auto& v : r) v = rng.uniform(-5, 5);
    const double c = rng.uniform(-10, 10);
    const double s = rng.uniform(0.1, 10);
    std::vector<double> shifted = r;
    std::vector<double> scaled = r;
    for (auto& v : shifted) v += c;
    for (auto& v : scaled) v *= s;
    EXPECT_NEAR(u1_reward_gap(shifted), u1_reward_gap(r), 1e-12);
    EXPECT_NEAR(u1_reward_gap(scaled), s * u1_reward_gap(r), 1e-12);
    EXPECT_GT(u1_reward_gap(r), 0.0);
  }
}

TEST(U2, SingleMemberIdentityCovariance) {
  const std::vector<AttributeDistribution> d{{{0, 0}, {0, 0}}};
  EXPECT_NEAR(u2_max_cov_norm(d), 1.414214, 1e-6);
}

TEST(U2, MaxOverMembers) {
  // A: diag(1,1) -> sqrt(2). B: diag(4,1) -> sqrt(17).
  const std::vector<AttributeDistribution> d{{{0, 0}, {0, 0}}, {{0, 0}, {std::log(2.0), 0}}};
  const double a = std::sqrt(1.0 * 1.0 + 1.0 * 1.0);
  const double b = std::sqrt(4.0 * 4.0 + 1.0 * 1.0);
  EXPECT_NEAR(u2_max_cov_norm(d), std::max(a, b), 1e-12);
  EXPECT_NEAR(u2_max_cov_norm(d), 4.123106, 1e-6);
}

TEST(U2, ClampFloor) {
  for (std::size_t n : {1u, 3u, 5u}) {
    const std::vector<AttributeDistribution> d{{std::vector<double>(n, 0.0), std::vector<double>(n, -6.0)}};
    EXPECT_NEAR(u2_max_cov_norm(d), std::sqrt(static_cast<double>(n)) * std::exp(-12.0), 1e-20);
  }
}

TEST(U2, PositiveAndMonotone) {
  Rng rng(8);
  for (int t = 0; t < 100; ++t) {
    std::vector<AttributeDistribution> d(3, {{0, 0}, {0, 0}});
    for (auto& m : d) m.log_std = {rng.uniform(-6, 3), rng.uniform(-6, 3)};
    const double base = u2_max_cov_norm(d);
    EXPECT_GE(base, std::exp(-12.0));
    auto up = d;
    auto& s = up[rng.index(3)].log_std[rng.index(2)];
    s = std::min(3.0, s + rng.uniform(0, 1));
    EXPECT_GE(u2_max_cov_norm(up), base);
  }
}

TEST(Urme, MeanAndGap) {
  const Urme e({constant_model(2, {1.0}, {0.0}, {1.0}, 1), constant_model(2, {3.0}, {0.0}, {1.0}, 2)});
  const auto ev = e.evaluate(std::vector<double>{0.3, 0.1});
  EXPECT_EQ(ev.reward, 2.0);
  EXPECT_EQ(ev.report.u1, 2.0);
  EXPECT_EQ(ev.report.rewards_per_member, (std::vector<double>{1.0, 3.0}));
}

TEST(Urme, IdenticalMembersHaveNoGap) {
  const auto m = constant_model(2, {0.7, -0.2}, {0.1, 0.4}, {0.5, 0.5}, 1);
  auto m2 = m;
  m2.metadata().seed = 2;
  auto m3 = m;
  m3.metadata().seed = 3;
  const Urme e({m, m2, m3});
  const std::vector<double> x{1.0, 2.0};
  const auto ev = e.evaluate(x);
  EXPECT_EQ(ev.report.u1, 0.0);
  EXPECT_EQ(ev.reward, m.reward(x));
}

TEST(Urme, RejectsDuplicateSeedsAndSingletons) {
  EXPECT_THROW(Urme({constant_model(1, {0.0}, {0.0}, {1.0}, 7), constant_model(1, {1.0}, {0.0}, {1.0}, 7)}),
               ConfigError);
  EXPECT_THROW(Urme({constant_model(1, {0.0}, {0.0}, {1.0}, 7)}), ConfigError);
  TrainConfig cfg;
  EXPECT_THROW(build_ensemble(cfg, {7, 7}, {}, Schema::make(1, 1)), ConfigError);
}

class TrainedEnsemble : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    data_ = new testing::SmallWorld(testing::small_world(5, 3000, 400));
    config_.epochs = 8;
    config_.seed = 0;
    ensemble_ = new Urme(build_ensemble(config_, {1, 2, 3}, data_->train, data_->world.schema()));
  }
  static void TearDownTestSuite() {
    delete ensemble_;
    delete data_;
  }
  static inline testing::SmallWorld* data_ = nullptr;
  static inline Urme* ensemble_ = nullptr;
  static inline TrainConfig config_{};
};

TEST_F(TrainedEnsemble, MembersDiffer) {
  const auto& m = ensemble_->members();
  ASSERT_EQ(m.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = i + 1; j < 3; ++j) EXPECT_NE(m[i].flat_parameters(), m[j].flat_parameters());
  }
  EXPECT_EQ(ensemble_->seeds(), (std::vector<std::uint64_t>{1, 2, 3}));
}

TEST_F(TrainedEnsemble, RebuildIsBitwiseIdenticalInAnyOrder) {
  const auto again = build_ensemble(config_, {3, 1, 2}, data_->train, data_->world.schema());
  std::map<std::uint64_t, const UrmModel*> by_seed;
  for (const auto& m : again.members()) by_seed[m.metadata().seed] = &m;
  for (const auto& m : ensemble_->members()) {
    ASSERT_TRUE(by_seed.count(m.metadata().seed));
    EXPECT_TRUE(m == *by_seed[m.metadata().seed]);
  }
}

TEST_F(TrainedEnsemble, MoreUncertainOffSupport) {
  auto mean_u1 = [&](const std::vector<Record>& records) {
    double total = 0.0;
    for (const auto& r : records) total += ensemble_->assess(r).u1;
    return total / static_cast<double>(records.size());
  };
  EXPECT_GT(mean_u1(data_->ood_probe), mean_u1(data_->id_probe));
}

}  // namespace
}  // namespace urm
