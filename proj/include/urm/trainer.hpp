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

// Training loops for the three head variants, pairwise evaluation, the
// KL-penalized reward, and weight-space merging.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "urm/dense.hpp"
#include "urm/error.hpp"
#include "urm/gating.hpp"
#include "urm/model.hpp"
#include "urm/optim.hpp"
#include "urm/parallel.hpp"
#include "urm/random.hpp"
#include "urm/record.hpp"
#include "urm/reward_head.hpp"
#include "urm/scoring.hpp"

namespace urm {

struct TrainConfig {
  LossKind loss = LossKind::mle;
  std::size_t epochs = 20;
  std::size_t batch_size = 64;
  AdamConfig optimizer{1e-3, 0.9, 0.999, 1e-8, 1e-3};
  double validation_fraction = 0.1;
  std::uint64_t seed = 0;
  // Seed for parameter initialization; defaults to `seed`. Runs sharing an
  // init seed start from the same weights and differ only in data order and
  // reparameterization draws.
  std::optional<std::uint64_t> init_seed;
  Architecture architecture{};
  std::vector<double> fixed_weights;  // empty: uniform 1/n
};

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double mean_log_std = 0.0;  // NaN for deterministic heads
  double val_accuracy = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
  UrmModel model;
  std::vector<EpochStats> history;
  std::size_t best_epoch = 0;
};

template <RewardScorer Scorer>
double eval_pairwise_accuracy(const Scorer& scorer, const std::vector<PreferencePair>& pairs) {
  if (pairs.empty()) throw InputError("eval_pairwise_accuracy: no pairs");
  std::vector<char> correct(pairs.size(), 0);
  parallel_for(pairs.size(), [&](std::size_t i) {
    correct[i] = scorer.assess(pairs[i].chosen).reward > scorer.assess(pairs[i].rejected).reward ? 1 : 0;
  });
  std::size_t total = 0;
  for (char c : correct) total += static_cast<std::size_t>(c);
  return static_cast<double>(total) / static_cast<double>(pairs.size());
}

/// r - eta * kl.
inline double kl_penalized_reward(double reward, double kl, double eta) {
  if (kl < 0.0) throw InputError("kl_penalized_reward: KL divergence must be nonnegative");
  if (eta < 0.0) throw InputError("kl_penalized_reward: eta must be nonnegative");
  return reward - eta * kl;
}

namespace detail {

// Loss and gradient of one labeled record, accumulated into the trunk/head
// gradient buffers after scaling by `scale`.
struct ExampleWorkspace {
  ForwardTrace trunk_trace;
  ForwardTrace head_trace;
  std::vector<double> grad_raw;
  std::vector<double> grad_hidden;
};

inline double example_loss(const UrmModel& model, LossKind loss, const Record& record, std::span<const double> alpha,
                           ExampleWorkspace& ws, double scale, std::span<double> grad_trunk,
                           std::span<double> grad_head, double* mean_log_std = nullptr) {
  model.trunk().forward(record.features, ws.trunk_trace);
  model.head().forward(ws.trunk_trace.output(), ws.head_trace);
  const auto raw = ws.head_trace.output();
  const std::size_t n = model.schema().attribute_count;
  LossAndGrad lg;
  if (loss == LossKind::deterministic) {
    lg = mse_loss(raw, record.labels);
    ws.grad_raw = lg.grad;
  } else {
    const auto dist = split_head_output(raw);
    lg = loss == LossKind::mle ? mle_loss(dist, record.labels) : regression_loss(dist, record.labels, alpha);
    ws.grad_raw = lg.grad;
    for (std::size_t i = 0; i < n; ++i) ws.grad_raw[n + i] *= clamp_log_std_slope(raw[n + i]);
    if (mean_log_std != nullptr) {
      double s = 0.0;
      for (double v : dist.log_std) s += v;
      *mean_log_std = s / static_cast<double>(n);
    }
  }
  if (!grad_head.empty()) {
    for (double& g : ws.grad_raw) g *= scale;
    model.head().backward(ws.head_trace, ws.grad_raw, grad_head, &ws.grad_hidden);
    model.trunk().backward(ws.trunk_trace, ws.grad_hidden, grad_trunk);
  }
  return lg.loss;
}

inline void check_labeled(const std::vector<Record>& records, const Schema& schema) {
  for (const auto& r : records) {
    if (r.features.size() != schema.feature_dim) {
      throw ConfigError("record " + std::to_string(r.id) + " has " + std::to_string(r.features.size()) +
                        " features, expected " + std::to_string(schema.feature_dim));
    }
    if (r.labels.size() != schema.attribute_count) {
      throw InputError("record " + std::to_string(r.id) + " lacks attribute labels");
    }
  }
}

}  // namespace detail

/// Mean per-record loss of `model` over `records`. Regression draws come from
/// a stream seeded by `alpha_seed`, so repeated calls are comparable.
inline double evaluate_loss(const UrmModel& model, LossKind loss, const std::vector<Record>& records,
                            std::uint64_t alpha_seed, double* mean_log_std = nullptr) {
  if (records.empty()) return std::numeric_limits<double>::quiet_NaN();
  Rng rng(alpha_seed);
  detail::ExampleWorkspace ws;
  const std::size_t n = model.schema().attribute_count;
  std::vector<double> alpha(n);
  double total = 0.0;
  double log_std_total = 0.0;
  for (const auto& r : records) {
    for (double& a : alpha) a = rng.normal();
    double mls = 0.0;
    total += detail::example_loss(model, loss, r, alpha, ws, 1.0, {}, {}, &mls);
    log_std_total += mls;
  }
  const double count = static_cast<double>(records.size());
  if (mean_log_std != nullptr) {
    *mean_log_std =
        loss == LossKind::deterministic ? std::numeric_limits<double>::quiet_NaN() : log_std_total / count;
  }
  return total / count;
}

/// Trains one URM with mini-batch Adam. The trunk and head are trained
/// jointly; the returned model is the epoch with the lowest validation loss.
inline TrainResult train_urm(const std::vector<Record>& records, const Schema& schema, const TrainConfig& config,
                             const std::vector<PreferencePair>& validation_pairs = {}) {
  if (records.empty()) throw InputError("train_urm: no records");
  if (config.batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (!(config.validation_fraction > 0.0 && config.validation_fraction < 1.0)) {
    throw ConfigError("validation_fraction must lie in (0, 1)");
  }
  detail::check_labeled(records, schema);
  std::vector<double> fixed = config.fixed_weights;
  if (fixed.empty()) fixed.assign(schema.attribute_count, 1.0 / static_cast<double>(schema.attribute_count));
  if (fixed.size() != schema.attribute_count) throw ConfigError("fixed_weights length does not match attribute count");

  const std::uint64_t init_seed = config.init_seed.value_or(config.seed);
  Rng init_rng(derive_seed(init_seed, 20));
  TrainResult result;
  UrmModel model = UrmModel::random(schema, head_kind_for(config.loss), config.architecture, fixed, init_rng);
  model.metadata().seed = config.seed;
  model.metadata().init_seed = init_seed;
  model.metadata().loss = config.loss;

  // Hold out a validation slice.
  Rng data_rng(derive_seed(config.seed, 21));
  std::vector<std::size_t> order(records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  data_rng.shuffle(order);
  auto val_count = static_cast<std::size_t>(std::floor(config.validation_fraction * static_cast<double>(records.size())));
  if (val_count >= records.size()) val_count = records.size() - 1;
  std::vector<Record> validation;
  std::vector<std::size_t> train_index;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i < val_count) {
      validation.push_back(records[order[i]]);
    } else {
      train_index.push_back(order[i]);
    }
  }
  std::sort(train_index.begin(), train_index.end());
  const std::uint64_t val_alpha_seed = derive_seed(config.seed, 22);
  Rng alpha_rng(derive_seed(config.seed, 23));

  AdamState trunk_adam(model.trunk().parameter_count(), config.optimizer);
  AdamState head_adam(model.head().parameter_count(), config.optimizer);
  std::vector<double> grad_trunk(model.trunk().parameter_count());
  std::vector<double> grad_head(model.head().parameter_count());
  std::vector<double> alpha(schema.attribute_count, 0.0);
  detail::ExampleWorkspace ws;

  const auto& selection_set = validation.empty() ? records : validation;
  auto record_epoch = [&](std::size_t epoch, double train_loss) {
    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = train_loss;
    stats.val_loss = evaluate_loss(model, config.loss, selection_set, val_alpha_seed, &stats.mean_log_std);
    if (!validation_pairs.empty()) stats.val_accuracy = eval_pairwise_accuracy(model, validation_pairs);
    result.history.push_back(stats);
    return stats.val_loss;
  };

  double best = record_epoch(0, std::numeric_limits<double>::quiet_NaN());
  result.model = model;
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    data_rng.shuffle(train_index);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < train_index.size(); start += config.batch_size) {
      const std::size_t end = std::min(train_index.size(), start + config.batch_size);
      const double scale = 1.0 / static_cast<double>(end - start);
      std::fill(grad_trunk.begin(), grad_trunk.end(), 0.0);
      std::fill(grad_head.begin(), grad_head.end(), 0.0);
      for (std::size_t b = start; b < end; ++b) {
        if (config.loss == LossKind::regression) {
          for (double& a : alpha) a = alpha_rng.normal();
        }
        const double loss =
            detail::example_loss(model, config.loss, records[train_index[b]], alpha, ws, scale, grad_trunk, grad_head);
        if (!std::isfinite(loss)) throw DivergedError(step, "non-finite loss");
        epoch_loss += loss;
      }
      if (!grad_trunk.empty()) adam_step(model.trunk().params(), grad_trunk, trunk_adam);
      adam_step(model.head().params(), grad_head, head_adam);
      ++step;
    }
    const double train_loss = epoch_loss / static_cast<double>(std::max<std::size_t>(1, train_index.size()));
    model.metadata().epochs = epoch;
    model.metadata().steps = step;
    const double val_loss = record_epoch(epoch, train_loss);
    if (!std::isfinite(val_loss)) throw DivergedError(step, "non-finite validation loss");
    if (val_loss < best) {
      best = val_loss;
      result.best_epoch = epoch;
      result.model = model;
    }
  }
  const auto& chosen = result.history[result.best_epoch];
  result.model.metadata().final_train_loss = chosen.train_loss;
  result.model.metadata().final_val_loss = chosen.val_loss;
  return result;
}

/// Interpolates every parameter: lambda * m1 + (1 - lambda) * m2.
inline UrmModel merge_models(const UrmModel& m1, const UrmModel& m2, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("merge lambda must lie in [0, 1]");
  if (!m1.same_architecture(m2)) throw ConfigError("cannot merge models with different architectures or schemas");
  auto mix = [lambda](std::span<double> out, std::span<const double> a, std::span<const double> b) {
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (lambda == 1.0 || a[i] == b[i]) {
        out[i] = a[i];
      } else if (lambda == 0.0) {
        out[i] = b[i];
      } else {
        out[i] = lambda * a[i] + (1.0 - lambda) * b[i];
      }
    }
  };
  UrmModel merged = m1;
  mix(merged.trunk().params(), m1.trunk().params(), m2.trunk().params());
  mix(merged.head().params(), m1.head().params(), m2.head().params());
  if (m1.gating()) {
    GatingNet gate = *m1.gating();
    mix(gate.net().params(), m1.gating()->net().params(), m2.gating()->net().params());
    merged.set_gating(std::move(gate));
  }
  std::vector<double> weights(m1.fixed_weights().size());
  mix(weights, m1.fixed_weights(), m2.fixed_weights());
  merged.set_fixed_weights(std::move(weights));
  std::ostringstream provenance;
  provenance.precision(17);
  provenance << "merge(lambda=" << lambda << ", seeds=" << m1.metadata().seed << "," << m2.metadata().seed << ")";
  merged.metadata().provenance = provenance.str();
  merged.metadata().steps = m1.metadata().steps + m2.metadata().steps;
  return merged;
}

/// Gate inputs for a frozen model: hidden states and attribute means.
inline std::vector<GatingExample> gating_examples(const UrmModel& model, const std::vector<PreferencePair>& pairs) {
  std::vector<GatingExample> out(pairs.size());
  parallel_for(pairs.size(), [&](std::size_t i) {
    const auto& p = pairs[i];
    out[i] = {p.chosen.features, model.distribution(p.chosen.features).mu, p.rejected.features,
              model.distribution(p.rejected.features).mu};
  });
  return out;
}

/// Trains a gate on top of a frozen model and returns a copy of the model
/// with the gate attached. Trunk and head are untouched.
inline std::pair<UrmModel, GatingResult> train_gating(const UrmModel& model, const std::vector<PreferencePair>& train,
                                                      const std::vector<PreferencePair>& validation,
                                                      const GatingTrainConfig& config) {
  if (train.empty()) throw InputError("train_gating: empty pair set");
  auto result = train_gating(gating_examples(model, train), gating_examples(model, validation), config);
  UrmModel gated = model;
  gated.set_gating(result.gate);
  return {std::move(gated), std::move(result)};
}

}  // namespace urm
