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

// Ensembles of independently trained URMs and their epistemic uncertainty.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <span>
#include <vector>

#include "urm/error.hpp"
#include "urm/model.hpp"
#include "urm/parallel.hpp"
#include "urm/record.hpp"
#include "urm/reward_head.hpp"
#include "urm/scoring.hpp"
#include "urm/trainer.hpp"

namespace urm {

struct UncertaintyReport {
  std::vector<double> aleatoric_per_member;
  std::vector<double> rewards_per_member;
  double u1 = 0.0;
  double u2 = 0.0;
};

/// Largest pairwise reward difference across members, i.e. max - min.
inline double u1_reward_gap(std::span<const double> rewards) {
  if (rewards.size() < 2) throw ConfigError("reward gap needs at least two ensemble members");
  const auto [lo, hi] = std::minmax_element(rewards.begin(), rewards.end());
  return *hi - *lo;
}

/// Largest Frobenius norm among the members' diagonal covariances.
inline double u2_max_cov_norm(std::span<const AttributeDistribution> dists) {
  if (dists.empty()) throw ConfigError("covariance norm needs at least one distribution");
  const std::size_t n = dists.front().log_std.size();
  double best = 0.0;
  for (const auto& d : dists) {
    if (d.log_std.size() != n) throw ConfigError("ensemble members disagree on attribute count");
    best = std::max(best, covariance_frobenius_norm(d));
  }
  return best;
}

class Urme {
 public:
  Urme() = default;
  explicit Urme(std::vector<UrmModel> members) : members_(std::move(members)) {
    if (members_.size() < 2) throw ConfigError("an ensemble needs at least two members");
    std::set<std::uint64_t> seeds;
    for (const auto& m : members_) {
      if (!(m.schema() == members_.front().schema())) throw ConfigError("ensemble members disagree on schema");
      if (!seeds.insert(m.metadata().seed).second) {
        throw ConfigError("ensemble member seeds must be distinct (duplicate " + std::to_string(m.metadata().seed) +
                          ")");
      }
    }
  }

  const std::vector<UrmModel>& members() const { return members_; }
  std::size_t size() const { return members_.size(); }
  const Schema& schema() const { return members_.front().schema(); }
  std::vector<std::uint64_t> seeds() const {
    std::vector<std::uint64_t> out;
    for (const auto& m : members_) out.push_back(m.metadata().seed);
    return out;
  }

  struct Evaluation {
    double reward = 0.0;
    UncertaintyReport report;
  };

  /// Member rewards are combined attribute means; the ensemble reward is
  /// their arithmetic mean.
  Evaluation evaluate(std::span<const double> features) const {
    Evaluation out;
    std::vector<AttributeDistribution> dists;
    dists.reserve(members_.size());
    bool probabilistic = true;
    for (const auto& m : members_) {
      auto dist = m.distribution(features);
      out.report.rewards_per_member.push_back(combine(dist.mu, m.weights_for(features)));
      if (m.head_kind() == HeadKind::probabilistic) {
        out.report.aleatoric_per_member.push_back(aleatoric_uncertainty(dist));
      } else {
        probabilistic = false;
        out.report.aleatoric_per_member.push_back(0.0);
      }
      dists.push_back(std::move(dist));
    }
    double total = 0.0;
    for (double r : out.report.rewards_per_member) total += r;
    out.reward = total / static_cast<double>(members_.size());
    out.report.u1 = u1_reward_gap(out.report.rewards_per_member);
    out.report.u2 = probabilistic ? u2_max_cov_norm(dists) : 0.0;
    return out;
  }

  Assessment assess(const Record& record) const {
    const auto ev = evaluate(record.features);
    double aleatoric = 0.0;
    for (double a : ev.report.aleatoric_per_member) aleatoric += a;
    return {ev.reward, aleatoric / static_cast<double>(members_.size()), ev.report.u1, ev.report.u2};
  }
  UncertaintyKind default_uncertainty() const { return UncertaintyKind::u1; }

 private:
  std::vector<UrmModel> members_;
};

inline Urme::Evaluation ensemble_evaluate(const Urme& ensemble, std::span<const double> features) {
  return ensemble.evaluate(features);
}

/// Trains one member per seed. Each seed drives that member's
/// initialization, data order and reparameterization draws; members share
/// nothing, so they are trained concurrently when threads allow.
inline Urme build_ensemble(const TrainConfig& config, const std::vector<std::uint64_t>& seeds,
                           const std::vector<Record>& records, const Schema& schema,
                           const std::vector<PreferencePair>& validation_pairs = {}) {
  if (seeds.size() < 2) throw ConfigError("an ensemble needs at least two seeds");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw ConfigError("ensemble seeds must be distinct");
  }
  std::vector<UrmModel> members(seeds.size());
  parallel_for(seeds.size(), [&](std::size_t i) {
    TrainConfig member = config;
    member.seed = seeds[i];
    member.init_seed.reset();
    members[i] = train_urm(records, schema, member, validation_pairs).model;
  });
  return Urme(std::move(members));
}

}  // namespace urm
