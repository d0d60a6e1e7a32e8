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

// The trainable unit: trunk (stand-in for the base model), value head, and
// attribute combination.

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "urm/dense.hpp"
#include "urm/error.hpp"
#include "urm/gating.hpp"
#include "urm/random.hpp"
#include "urm/record.hpp"
#include "urm/reward_head.hpp"
#include "urm/scoring.hpp"

namespace urm {

enum class LossKind { mle, regression, deterministic };

inline std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::mle:
      return "mle";
    case LossKind::regression:
      return "regression";
    case LossKind::deterministic:
      return "deterministic";
  }
  return "mle";
}

inline LossKind loss_kind_from_string(const std::string& name) {
  if (name == "mle") return LossKind::mle;
  if (name == "regression") return LossKind::regression;
  if (name == "deterministic") return LossKind::deterministic;
  throw ConfigError("unknown loss kind '" + name + "' (expected mle, regression or deterministic)");
}

inline HeadKind head_kind_for(LossKind loss) {
  return loss == LossKind::deterministic ? HeadKind::deterministic : HeadKind::probabilistic;
}

struct Architecture {
  std::vector<std::size_t> trunk_widths{32};  // empty: identity trunk
  std::size_t head_hidden = 64;
  Activation hidden_activation = Activation::tanh;
};

struct TrainingMetadata {
  std::uint64_t seed = 0;
  std::uint64_t init_seed = 0;
  LossKind loss = LossKind::mle;
  std::size_t epochs = 0;
  std::size_t steps = 0;
  double final_train_loss = 0.0;
  double final_val_loss = 0.0;
  std::string provenance;

  bool operator==(const TrainingMetadata&) const = default;
};

class UrmModel {
 public:
  UrmModel() = default;

  UrmModel(Schema schema, DenseNet trunk, DenseNet head, HeadKind head_kind, std::vector<double> fixed_weights)
      : schema_(std::move(schema)),
        trunk_(std::move(trunk)),
        head_(std::move(head)),
        head_kind_(head_kind),
        fixed_weights_(std::move(fixed_weights)) {
    validate();
  }

  /// Fresh model with randomly initialized trunk and head.
  static UrmModel random(const Schema& schema, HeadKind kind, const Architecture& arch,
                         std::vector<double> fixed_weights, Rng& rng) {
    DenseNet trunk = DenseNet::identity(schema.feature_dim);
    if (!arch.trunk_widths.empty()) {
      trunk = DenseNet::random(schema.feature_dim, arch.trunk_widths,
                               std::vector<Activation>(arch.trunk_widths.size(), arch.hidden_activation), rng);
    }
    const std::size_t outputs = kind == HeadKind::probabilistic ? 2 * schema.attribute_count : schema.attribute_count;
    DenseNet head = DenseNet::random(trunk.output_dim(), {arch.head_hidden, outputs},
                                     {arch.hidden_activation, Activation::identity}, rng);
    return UrmModel(schema, std::move(trunk), std::move(head), kind, std::move(fixed_weights));
  }

  const Schema& schema() const { return schema_; }
  const DenseNet& trunk() const { return trunk_; }
  DenseNet& trunk() { return trunk_; }
  const DenseNet& head() const { return head_; }
  DenseNet& head() { return head_; }
  HeadKind head_kind() const { return head_kind_; }
  const std::vector<double>& fixed_weights() const { return fixed_weights_; }
  void set_fixed_weights(std::vector<double> w) {
    if (w.size() != schema_.attribute_count) throw ConfigError("fixed weights length does not match attribute count");
    fixed_weights_ = std::move(w);
  }
  const std::optional<GatingNet>& gating() const { return gating_; }
  void set_gating(std::optional<GatingNet> gate) {
    if (gate && (gate->input_dim() != schema_.feature_dim || gate->attribute_count() != schema_.attribute_count)) {
      throw ConfigError("gating net dimensions do not match the model schema");
    }
    gating_ = std::move(gate);
  }
  TrainingMetadata& metadata() { return metadata_; }
  const TrainingMetadata& metadata() const { return metadata_; }

  std::vector<double> hidden(std::span<const double> features) const {
    check_features(features);
    return trunk_.forward(features);
  }

  /// Per-attribute Gaussian. Deterministic heads report their scores as mu
  /// with an empty log_std.
  AttributeDistribution distribution(std::span<const double> features) const {
    const auto h = hidden(features);
    if (head_kind_ == HeadKind::probabilistic) return head_forward(head_, h);
    return {deterministic_forward(head_, h), {}};
  }

  CombinationWeights weights_for(std::span<const double> features) const {
    if (gating_) return gating_forward(*gating_, features);
    return {fixed_weights_, WeightSource::fixed};
  }

  /// Inference reward: combined attribute means (never a sample).
  double reward(std::span<const double> features) const {
    return combine(distribution(features).mu, weights_for(features));
  }

  Assessment assess(const Record& record) const {
    const auto dist = distribution(record.features);
    Assessment a;
    a.reward = combine(dist.mu, weights_for(record.features));
    if (head_kind_ == HeadKind::probabilistic) {
      a.aleatoric = aleatoric_uncertainty(dist);
      a.u2 = covariance_frobenius_norm(dist);
    }
    return a;
  }
  UncertaintyKind default_uncertainty() const { return UncertaintyKind::aleatoric; }

  bool same_architecture(const UrmModel& other) const {
    return schema_ == other.schema_ && head_kind_ == other.head_kind_ && trunk_.same_architecture(other.trunk_) &&
           head_.same_architecture(other.head_) && gating_.has_value() == other.gating_.has_value() &&
           (!gating_ || gating_->net().same_architecture(other.gating_->net()));
  }

  /// All trainable parameters plus fixed weights, in a fixed order.
  std::vector<double> flat_parameters() const {
    std::vector<double> out;
    auto append = [&](std::span<const double> s) { out.insert(out.end(), s.begin(), s.end()); };
    append(trunk_.params());
    append(head_.params());
    if (gating_) append(gating_->net().params());
    append(fixed_weights_);
    return out;
  }

  bool operator==(const UrmModel& other) const {
    return same_architecture(other) && flat_parameters() == other.flat_parameters() && metadata_ == other.metadata_;
  }

 private:
  void validate() const {
    if (schema_.attribute_names.size() != schema_.attribute_count) {
      throw ConfigError("schema attribute names do not match attribute count");
    }
    if (trunk_.input_dim() != schema_.feature_dim) throw ConfigError("trunk input does not match feature dimension");
    if (head_.input_dim() != trunk_.output_dim()) throw ConfigError("head input does not match trunk output");
    const std::size_t expected =
        head_kind_ == HeadKind::probabilistic ? 2 * schema_.attribute_count : schema_.attribute_count;
    if (head_.output_dim() != expected) {
      throw ConfigError("head output dimension " + std::to_string(head_.output_dim()) + " does not match " +
                        std::to_string(expected) + " for a " + to_string(head_kind_) + " head");
    }
    if (fixed_weights_.size() != schema_.attribute_count) {
      throw ConfigError("fixed weights length does not match attribute count");
    }
  }

  void check_features(std::span<const double> features) const {
    if (features.size() != schema_.feature_dim) {
      throw ConfigError("record has " + std::to_string(features.size()) + " features, model expects " +
                        std::to_string(schema_.feature_dim));
    }
  }

  Schema schema_;
  DenseNet trunk_;
  DenseNet head_;
  HeadKind head_kind_ = HeadKind::probabilistic;
  std::vector<double> fixed_weights_;
  std::optional<GatingNet> gating_;
  TrainingMetadata metadata_;
};

}  // namespace urm
