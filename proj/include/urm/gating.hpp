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

// Attribute combination: fixed weights or a softmax gating network.

#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "urm/dense.hpp"
#include "urm/error.hpp"
#include "urm/optim.hpp"
#include "urm/random.hpp"

namespace urm {

enum class WeightSource { fixed, gated };

struct CombinationWeights {
  std::vector<double> weights;
  WeightSource source = WeightSource::fixed;
};

inline double combine(std::span<const double> scores, std::span<const double> weights) {
  if (scores.size() != weights.size()) {
    throw ConfigError("cannot combine " + std::to_string(scores.size()) + " scores with " +
                      std::to_string(weights.size()) + " weights");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) acc += weights[i] * scores[i];
  return acc;
}

inline double combine(std::span<const double> scores, const CombinationWeights& w) { return combine(scores, w.weights); }

inline std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.begin(), logits.end());
  if (out.empty()) return out;
  const double top = *std::max_element(out.begin(), out.end());
  double total = 0.0;
  for (double& v : out) {
    v = std::exp(v - top);
    total += v;
  }
  for (double& v : out) v /= total;
  return out;
}

/// Maps a hidden state to mixture weights on the simplex: two SELU hidden
/// layers followed by a linear layer and a softmax.
class GatingNet {
 public:
  GatingNet() = default;
  explicit GatingNet(DenseNet net) : net_(std::move(net)) {}

  static GatingNet random(std::size_t input_dim, std::size_t attributes, std::size_t hidden_width, Rng& rng) {
    return GatingNet(DenseNet::random(input_dim, {hidden_width, hidden_width, attributes},
                                      {Activation::selu, Activation::selu, Activation::identity}, rng));
  }

  const DenseNet& net() const { return net_; }
  DenseNet& net() { return net_; }
  std::size_t input_dim() const { return net_.input_dim(); }
  std::size_t attribute_count() const { return net_.output_dim(); }

 private:
  DenseNet net_;
};

inline CombinationWeights gating_forward(const GatingNet& gate, std::span<const double> h) {
  if (h.size() != gate.input_dim()) {
    throw ConfigError("hidden state has dimension " + std::to_string(h.size()) + ", gating net expects " +
                      std::to_string(gate.input_dim()));
  }
  return {softmax(gate.net().forward(h)), WeightSource::gated};
}

/// -log sigmoid(margin), computed without overflow.
inline double ranking_loss(double margin) {
  return margin > 0.0 ? std::log1p(std::exp(-margin)) : -margin + std::log1p(std::exp(margin));
}

// d/dmargin of ranking_loss.
inline double ranking_loss_slope(double margin) {
  return margin > 0.0 ? -std::exp(-margin) / (1.0 + std::exp(-margin)) : -1.0 / (1.0 + std::exp(margin));
}

/// A preference pair as seen by the gate: hidden states plus the frozen
/// per-attribute scores of both responses.
struct GatingExample {
  std::vector<double> chosen_h;
  std::vector<double> chosen_scores;
  std::vector<double> rejected_h;
  std::vector<double> rejected_scores;
};

struct GatingTrainConfig {
  std::size_t hidden_width = 64;
  std::size_t steps = 400;
  std::size_t batch_size = 32;
  std::size_t eval_every = 20;
  AdamConfig optimizer{};
  std::uint64_t seed = 0;
};

struct GatingHistoryEntry {
  std::size_t step = 0;
  double train_loss = 0.0;
  double val_accuracy = 0.0;
};

struct GatingResult {
  GatingNet gate;
  std::vector<GatingHistoryEntry> history;
  double best_val_accuracy = 0.0;
  std::size_t best_step = 0;
};

inline double gated_reward(const GatingNet& gate, std::span<const double> h, std::span<const double> scores) {
  return combine(scores, gating_forward(gate, h));
}

inline double gating_accuracy(const GatingNet& gate, const std::vector<GatingExample>& examples) {
  if (examples.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& ex : examples) {
    if (gated_reward(gate, ex.chosen_h, ex.chosen_scores) > gated_reward(gate, ex.rejected_h, ex.rejected_scores)) {
      ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(examples.size());
}

/// Mean ranking loss over `examples` and its gradient w.r.t. the gate
/// parameters (accumulated into `grad`, which must be zeroed by the caller).
inline double gating_loss_and_grad(const GatingNet& gate, std::span<const GatingExample> examples,
                                   std::span<double> grad) {
  ForwardTrace trace_c;
  ForwardTrace trace_r;
  double total = 0.0;
  const double scale = 1.0 / static_cast<double>(examples.size());
  std::vector<double> dz;
  for (const auto& ex : examples) {
    gate.net().forward(ex.chosen_h, trace_c);
    gate.net().forward(ex.rejected_h, trace_r);
    const auto wc = softmax(trace_c.output());
    const auto wr = softmax(trace_r.output());
    const double rc = combine(ex.chosen_scores, wc);
    const double rr = combine(ex.rejected_scores, wr);
    const double margin = rc - rr;
    total += ranking_loss(margin);
    const double slope = ranking_loss_slope(margin) * scale;
    // dr/dz_j = w_j * (s_j - r)
    dz.resize(wc.size());
    for (std::size_t j = 0; j < wc.size(); ++j) dz[j] = slope * wc[j] * (ex.chosen_scores[j] - rc);
    gate.net().backward(trace_c, dz, grad);
    for (std::size_t j = 0; j < wr.size(); ++j) dz[j] = -slope * wr[j] * (ex.rejected_scores[j] - rr);
    gate.net().backward(trace_r, dz, grad);
  }
  return total * scale;
}

/// Trains a fresh gating network with the Bradley-Terry ranking loss and
/// keeps the checkpoint with the best validation accuracy (the training set
/// stands in when no validation examples are given).
inline GatingResult train_gating(const std::vector<GatingExample>& train, const std::vector<GatingExample>& validation,
                                 const GatingTrainConfig& config) {
  if (train.empty()) throw InputError("train_gating: empty pair set");
  if (config.batch_size == 0) throw ConfigError("gating batch_size must be positive");
  if (config.eval_every == 0) throw ConfigError("gating eval_every must be positive");
  const std::size_t d = train.front().chosen_h.size();
  const std::size_t n = train.front().chosen_scores.size();
  for (const auto* set : {&train, &validation}) {
    for (const auto& ex : *set) {
      if (ex.chosen_h.size() != d || ex.rejected_h.size() != d || ex.chosen_scores.size() != n ||
          ex.rejected_scores.size() != n) {
        throw ConfigError("train_gating: inconsistent example dimensions");
      }
    }
  }
  const auto& selection = validation.empty() ? train : validation;
  Rng rng(derive_seed(config.seed, 10));
  GatingResult result;
  result.gate = GatingNet::random(d, n, config.hidden_width, rng);
  GatingNet current = result.gate;
  AdamState adam(current.net().parameter_count(), config.optimizer);
  std::vector<double> grad(current.net().parameter_count());
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  std::size_t cursor = 0;
  std::vector<GatingExample> batch;

  result.best_val_accuracy = gating_accuracy(current, selection);
  result.history.push_back({0, gating_loss_and_grad(current, train, grad), result.best_val_accuracy});
  double running_loss = 0.0;
  std::size_t running_count = 0;
  for (std::size_t step = 1; step <= config.steps; ++step) {
    batch.clear();
    for (std::size_t b = 0; b < std::min(config.batch_size, train.size()); ++b) {
      if (cursor == order.size()) {
        rng.shuffle(order);
        cursor = 0;
      }
      batch.push_back(train[order[cursor++]]);
    }
    std::fill(grad.begin(), grad.end(), 0.0);
    const double loss = gating_loss_and_grad(current, batch, grad);
    if (!std::isfinite(loss)) throw DivergedError(step, "non-finite gating loss");
    running_loss += loss;
    ++running_count;
    adam_step(current.net().params(), grad, adam);
    if (step % config.eval_every == 0 || step == config.steps) {
      const double acc = gating_accuracy(current, selection);
      result.history.push_back({step, running_loss / static_cast<double>(running_count), acc});
      running_loss = 0.0;
      running_count = 0;
      if (acc > result.best_val_accuracy) {
        result.best_val_accuracy = acc;
        result.best_step = step;
        result.gate = current;
      }
    }
  }
  return result;
}

}  // namespace urm
