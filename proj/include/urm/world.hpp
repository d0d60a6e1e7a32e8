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

// Synthetic ground-truth world: heteroscedastic attribute labels over a
// Gaussian-mixture feature space, with a mean-shifted out-of-distribution
// region.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "urm/dense.hpp"
#include "urm/error.hpp"
#include "urm/random.hpp"
#include "urm/record.hpp"

namespace urm {

struct WorldConfig {
  std::size_t feature_dim = 16;
  std::size_t attribute_count = 5;
  double ood_shift = 6.0;  // distance between ID and OOD component means
  double flip_temperature = 1.0;
  std::size_t components = 4;
  double component_spread = 0.5;  // std of component means around the origin
  double prompt_spread = 0.5;     // std of prompt centres around their component
  double response_spread = 0.5;   // std of responses around their prompt
  std::size_t hidden_width = 8;
  double nonlinearity = 3.0;  // gain on the ground-truth nets' hidden layers
  double mean_scale = 2.0;
  double std_min = 0.2;
  double std_max = 1.5;
  // Label noise grows with distance from the ID centroid: the std logit
  // gains radial_gain * (|x - centroid| / typical_radius - 1).
  double radial_gain = 3.0;
  bool label_noise = true;
  std::optional<std::vector<double>> true_weights;
};

class GroundTruthWorld {
 public:
  GroundTruthWorld(WorldConfig config, DenseNet mean_net, DenseNet std_net, std::vector<double> weights,
                   std::vector<std::vector<double>> id_means, std::vector<std::vector<double>> ood_means)
      : config_(std::move(config)),
        mean_net_(std::move(mean_net)),
        std_net_(std::move(std_net)),
        weights_(std::move(weights)),
        id_means_(std::move(id_means)),
        ood_means_(std::move(ood_means)) {}

  const WorldConfig& config() const { return config_; }
  Schema schema() const { return Schema::make(config_.feature_dim, config_.attribute_count); }
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<std::vector<double>>& id_means() const { return id_means_; }
  const std::vector<std::vector<double>>& ood_means() const { return ood_means_; }
  const DenseNet& mean_net() const { return mean_net_; }
  const DenseNet& std_net() const { return std_net_; }

  std::vector<double> true_mean(std::span<const double> x) const { return mean_net_.forward(x); }

  std::vector<double> true_std(std::span<const double> x) const {
    auto raw = std_net_.forward(x);
    const double radial = config_.radial_gain * (distance_to_centroid(x) / typical_radius() - 1.0);
    for (double& v : raw) {
      v = config_.std_min + (config_.std_max - config_.std_min) / (1.0 + std::exp(-(v + radial)));
    }
    return raw;
  }

  std::vector<double> centroid() const {
    std::vector<double> c(config_.feature_dim, 0.0);
    for (const auto& m : id_means_) {
      for (std::size_t i = 0; i < c.size(); ++i) c[i] += m[i] / static_cast<double>(id_means_.size());
    }
    return c;
  }

  double distance_to_centroid(std::span<const double> x) const {
    const auto c = centroid();
    double total = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) total += (x[i] - c[i]) * (x[i] - c[i]);
    return std::sqrt(total);
  }

  // Expected distance of an ID response from the centroid.
  double typical_radius() const {
    const double per_coord = config_.component_spread * config_.component_spread +
                             config_.prompt_spread * config_.prompt_spread +
                             config_.response_spread * config_.response_spread;
    return std::sqrt(per_coord * static_cast<double>(config_.feature_dim));
  }

  double utility(const std::vector<double>& mean) const { return dot(weights_, mean); }

  // One draw of attribute labels at x.
  std::vector<double> sample_labels(std::span<const double> x, Rng& rng) const {
    auto labels = true_mean(x);
    if (config_.label_noise) {
      const auto sd = true_std(x);
      for (std::size_t i = 0; i < labels.size(); ++i) labels[i] += sd[i] * rng.normal();
    }
    return labels;
  }

  // A prompt centre drawn from the ID or OOD mixture.
  std::vector<double> sample_prompt(bool ood, Rng& rng) const {
    const auto& means = ood ? ood_means_ : id_means_;
    const auto& centre = means[rng.index(means.size())];
    std::vector<double> x(centre);
    for (double& v : x) v += config_.prompt_spread * rng.normal();
    return x;
  }

  std::vector<double> sample_response(const std::vector<double>& prompt, Rng& rng) const {
    std::vector<double> x(prompt);
    for (double& v : x) v += config_.response_spread * rng.normal();
    return x;
  }

  Record make_record(std::uint64_t id, std::vector<double> features, bool ood, std::uint64_t group, Rng& rng) const {
    Record r;
    r.id = id;
    r.labels = sample_labels(features, rng);
    r.true_mean = true_mean(features);
    r.true_std = true_std(features);
    r.features = std::move(features);
    r.is_ood = ood;
    r.prompt_group = group;
    return r;
  }

 private:
  WorldConfig config_;
  DenseNet mean_net_;
  DenseNet std_net_;
  std::vector<double> weights_;
  std::vector<std::vector<double>> id_means_;
  std::vector<std::vector<double>> ood_means_;
};

/// Builds a world whose every random parameter is a function of `seed`.
inline GroundTruthWorld gen_world(const WorldConfig& config, std::uint64_t seed) {
  if (config.feature_dim < 2) throw ConfigError("feature_dim must be at least 2");
  if (config.attribute_count < 1) throw ConfigError("attribute_count must be at least 1");
  if (!(config.ood_shift > 0.0)) throw ConfigError("ood_shift must be positive (OOD would coincide with ID)");
  if (config.components < 1) throw ConfigError("components must be at least 1");
  if (!(config.std_min >= 0.05 && config.std_max <= 2.0 && config.std_min < config.std_max)) {
    throw ConfigError("label std range must lie within [0.05, 2.0]");
  }
  if (!(config.flip_temperature > 0.0)) throw ConfigError("flip_temperature must be positive");
  const std::size_t d = config.feature_dim;
  const std::size_t n = config.attribute_count;
  Rng rng(derive_seed(seed, 0));

  auto mean_net = DenseNet::random(d, {config.hidden_width, n}, {Activation::tanh, Activation::identity}, rng);
  // Stretch the hidden layer into its nonlinear range and scale the outputs.
  for (std::size_t o = 0; o < config.hidden_width; ++o) {
    for (std::size_t i = 0; i < d; ++i) mean_net.weight(0, o, i) *= config.nonlinearity;
    mean_net.bias(0, o) = rng.uniform(-0.5, 0.5);
  }
  for (std::size_t o = 0; o < n; ++o) {
    for (std::size_t i = 0; i < config.hidden_width; ++i) mean_net.weight(1, o, i) *= config.mean_scale;
  }

  auto std_net = DenseNet::random(d, {config.hidden_width, n}, {Activation::tanh, Activation::identity}, rng);
  for (std::size_t o = 0; o < config.hidden_width; ++o) {
    for (std::size_t i = 0; i < d; ++i) std_net.weight(0, o, i) *= config.nonlinearity;
  }
  for (std::size_t o = 0; o < n; ++o) {
    for (std::size_t i = 0; i < config.hidden_width; ++i) std_net.weight(1, o, i) *= 3.0;
  }

  std::vector<double> weights;
  if (config.true_weights) {
    if (config.true_weights->size() != n) throw ConfigError("true_weights length does not match attribute_count");
    weights = *config.true_weights;
  } else {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      weights.push_back(-std::log(1.0 - rng.uniform()));
      total += weights.back();
    }
    for (double& w : weights) w /= total;
  }

  std::vector<std::vector<double>> id_means(config.components, std::vector<double>(d));
  for (auto& m : id_means) {
    for (double& v : m) v = config.component_spread * rng.normal();
  }
  // Each component moves by ood_shift along its own random direction; a
  // direction is redrawn if it lands within ood_shift of any ID mean.
  auto ood_means = id_means;
  std::vector<double> direction(d);
  for (auto& m : ood_means) {
    const auto origin = m;
    for (int attempt = 0;; ++attempt) {
      double norm = 0.0;
      for (double& v : direction) {
        v = rng.normal();
        norm += v * v;
      }
      norm = std::sqrt(norm);
      if (norm < 1e-12) continue;
      for (std::size_t i = 0; i < d; ++i) m[i] = origin[i] + config.ood_shift * direction[i] / norm;
      bool separated = true;
      for (const auto& other : id_means) {
        double dist = 0.0;
        for (std::size_t i = 0; i < d; ++i) dist += (m[i] - other[i]) * (m[i] - other[i]);
        separated = separated && std::sqrt(dist) >= config.ood_shift;
      }
      if (separated) break;
      if (attempt > 1000) throw ConfigError("could not place OOD components at the requested separation");
    }
  }
  return GroundTruthWorld(config, std::move(mean_net), std::move(std_net), std::move(weights), std::move(id_means),
                          std::move(ood_means));
}

struct SampleOptions {
  std::size_t group_size = 4;  // responses per prompt
  std::uint64_t first_id = 0;
  std::uint64_t first_group = 0;
};

/// Draws `count` records, of which floor(count * ood_fraction) come from the
/// OOD mixture. Records are grouped by prompt; a group never mixes ID and OOD
/// records and never has fewer than two members unless its segment has one
/// record in total.
inline std::vector<Record> sample_records(const GroundTruthWorld& world, std::size_t count, double ood_fraction,
                                          std::uint64_t seed, const SampleOptions& options = {}) {
  if (count == 0) throw InputError("sample_records: count must be positive");
  if (!(ood_fraction >= 0.0 && ood_fraction <= 1.0)) throw ConfigError("ood_fraction must lie in [0, 1]");
  if (options.group_size < 2) throw ConfigError("group_size must be at least 2");
  const auto ood_count = static_cast<std::size_t>(std::floor(static_cast<double>(count) * ood_fraction));
  const std::size_t id_count = count - ood_count;
  Rng rng(derive_seed(seed, 1));
  std::vector<Record> records;
  records.reserve(count);
  std::uint64_t next_id = options.first_id;
  std::uint64_t next_group = options.first_group;

  auto emit_segment = [&](std::size_t total, bool ood) {
    std::size_t remaining = total;
    while (remaining > 0) {
      std::size_t size = std::min(options.group_size, remaining);
      // Fold a trailing singleton into this group.
      if (remaining - size == 1) size += 1;
      const auto prompt = world.sample_prompt(ood, rng);
      for (std::size_t k = 0; k < size; ++k) {
        records.push_back(world.make_record(next_id++, world.sample_response(prompt, rng), ood, next_group, rng));
      }
      ++next_group;
      remaining -= size;
    }
  };
  emit_segment(id_count, false);
  emit_segment(ood_count, true);
  return records;
}

/// Samples pairs within prompt groups; the response with the higher true
/// utility is chosen (lower id on ties).
inline std::vector<PreferencePair> make_pairs(const std::vector<Record>& records, const GroundTruthWorld& world,
                                              std::size_t pairs, std::uint64_t seed) {
  std::map<std::uint64_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!records[i].has_truth()) throw InputError("make_pairs: record " + std::to_string(records[i].id) + " lacks true_mean");
    groups[records[i].prompt_group].push_back(i);
  }
  if (groups.empty()) throw InputError("make_pairs: no records");
  std::vector<const std::vector<std::size_t>*> eligible;
  for (const auto& [group, members] : groups) {
    if (members.size() < 2) {
      throw InputError("make_pairs: prompt group " + std::to_string(group) + " has fewer than two records");
    }
    eligible.push_back(&members);
  }
  Rng rng(derive_seed(seed, 2));
  std::vector<PreferencePair> out;
  out.reserve(pairs);
  for (std::size_t p = 0; p < pairs; ++p) {
    const auto& members = *eligible[rng.index(eligible.size())];
    const std::size_t a = rng.index(members.size());
    std::size_t b = rng.index(members.size() - 1);
    if (b >= a) ++b;
    const Record* first = &records[members[a]];
    const Record* second = &records[members[b]];
    const double ua = world.utility(first->true_mean);
    const double ub = world.utility(second->true_mean);
    if (ub > ua || (ub == ua && second->id < first->id)) std::swap(first, second);
    out.push_back({*first, *second, std::abs(ua - ub)});
  }
  return out;
}

/// Swaps each pair with probability flip_rate * exp(-margin / temperature).
/// Flipped pairs carry a negated true margin.
inline std::vector<PreferencePair> label_noise(const std::vector<PreferencePair>& pairs, double flip_rate,
                                               double temperature, std::uint64_t seed) {
  if (!(flip_rate >= 0.0 && flip_rate < 0.5)) throw ConfigError("flip_rate must lie in [0, 0.5)");
  if (!(temperature > 0.0)) throw ConfigError("flip temperature must be positive");
  Rng rng(derive_seed(seed, 3));
  std::vector<PreferencePair> out = pairs;
  if (flip_rate == 0.0) return out;
  for (auto& pair : out) {
    const double margin = pair.true_margin.value_or(0.0);
    const double p = flip_rate * std::exp(-std::max(margin, 0.0) / temperature);
    if (rng.uniform() < p) {
      std::swap(pair.chosen, pair.rejected);
      if (pair.true_margin) pair.true_margin = -*pair.true_margin;
    }
  }
  return out;
}

}  // namespace urm
