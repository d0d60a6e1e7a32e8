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

// Consumers of rewards and uncertainties: best-of-n selection, uncertainty
// filtering, penalized rewards, accuracy-vs-threshold curves and OOD
// detection reports.

#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "urm/error.hpp"
#include "urm/parallel.hpp"
#include "urm/random.hpp"
#include "urm/record.hpp"
#include "urm/scoring.hpp"

namespace urm {

struct ScoredCandidate {
  Record record;
  double reward = 0.0;
  double uncertainty = 0.0;
  UncertaintyKind kind = UncertaintyKind::aleatoric;
};

/// A preference pair with both rewards; its uncertainty is the larger of the
/// two responses' uncertainties.
struct ScoredPair {
  PreferencePair pair;
  std::uint64_t id = 0;
  double chosen_reward = 0.0;
  double rejected_reward = 0.0;
  double uncertainty = 0.0;
  UncertaintyKind kind = UncertaintyKind::aleatoric;

  bool correct() const { return chosen_reward > rejected_reward; }
};

inline std::uint64_t item_id(const ScoredCandidate& c) { return c.record.id; }
inline std::uint64_t item_id(const ScoredPair& p) { return p.id; }

template <typename T>
concept UncertainItem = requires(const T& item) {
  { item.uncertainty } -> std::convertible_to<double>;
  { item_id(item) } -> std::convertible_to<std::uint64_t>;
};

template <RewardScorer Scorer>
std::vector<ScoredCandidate> score_candidates(const Scorer& scorer, const std::vector<Record>& records,
                                              UncertaintyKind kind) {
  std::vector<ScoredCandidate> out(records.size());
  parallel_for(records.size(), [&](std::size_t i) {
    const auto a = scorer.assess(records[i]);
    out[i] = {records[i], a.reward, a.uncertainty(kind), kind};
  });
  return out;
}

template <RewardScorer Scorer>
std::vector<ScoredCandidate> score_candidates(const Scorer& scorer, const std::vector<Record>& records) {
  return score_candidates(scorer, records, scorer.default_uncertainty());
}

template <RewardScorer Scorer>
std::vector<ScoredPair> score_pairs(const Scorer& scorer, const std::vector<PreferencePair>& pairs,
                                    UncertaintyKind kind) {
  std::vector<ScoredPair> out(pairs.size());
  parallel_for(pairs.size(), [&](std::size_t i) {
    const auto c = scorer.assess(pairs[i].chosen);
    const auto r = scorer.assess(pairs[i].rejected);
    out[i] = {pairs[i], static_cast<std::uint64_t>(i), c.reward, r.reward,
              std::max(c.uncertainty(kind), r.uncertainty(kind)), kind};
  });
  return out;
}

template <RewardScorer Scorer>
std::vector<ScoredPair> score_pairs(const Scorer& scorer, const std::vector<PreferencePair>& pairs) {
  return score_pairs(scorer, pairs, scorer.default_uncertainty());
}

inline double pair_accuracy(std::span<const ScoredPair> pairs) {
  if (pairs.empty()) throw InputError("pair_accuracy: no pairs");
  std::size_t correct = 0;
  for (const auto& p : pairs) correct += p.correct() ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(pairs.size());
}

/// Draws min(n, |candidates|) candidates without replacement and returns the
/// highest-reward one (lower record id on ties).
inline ScoredCandidate bon_select(const std::vector<ScoredCandidate>& candidates, std::size_t n, std::uint64_t seed) {
  if (candidates.empty()) throw InputError("bon_select: no candidates");
  if (n == 0) throw ConfigError("bon_select: n must be at least 1");
  std::vector<std::size_t> index(candidates.size());
  for (std::size_t i = 0; i < index.size(); ++i) index[i] = i;
  Rng rng(derive_seed(seed, 30));
  const std::size_t take = std::min(n, candidates.size());
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < take; ++i) {
    std::swap(index[i], index[i + rng.index(index.size() - i)]);
  }
  const ScoredCandidate* best = &candidates[index[0]];
  for (std::size_t i = 1; i < take; ++i) {
    const auto& c = candidates[index[i]];
    if (c.reward > best->reward || (c.reward == best->reward && c.record.id < best->record.id)) best = &c;
  }
  return *best;
}

struct FilterMode {
  enum class Kind { keep_fraction, threshold };
  Kind kind = Kind::keep_fraction;
  double value = 1.0;

  static FilterMode keep_fraction(double f) { return {Kind::keep_fraction, f}; }
  static FilterMode threshold(double t) { return {Kind::threshold, t}; }
};

/// keep_fraction f: the ceil(f * N) least uncertain items, in ascending
/// uncertainty (ties by id). threshold t: items with uncertainty <= t, in
/// input order.
template <UncertainItem Item>
std::vector<Item> filter_by_uncertainty(const std::vector<Item>& items, FilterMode mode) {
  if (mode.kind == FilterMode::Kind::keep_fraction) {
    if (!(mode.value > 0.0 && mode.value <= 1.0)) throw ConfigError("keep_fraction must lie in (0, 1]");
    std::vector<std::size_t> order(items.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const double ua = items[a].uncertainty;
      const double ub = items[b].uncertainty;
      if (ua != ub) return ua < ub;
      return item_id(items[a]) < item_id(items[b]);
    });
    const auto keep = static_cast<std::size_t>(std::ceil(mode.value * static_cast<double>(items.size())));
    std::vector<Item> out;
    out.reserve(keep);
    for (std::size_t i = 0; i < std::min(keep, order.size()); ++i) out.push_back(items[order[i]]);
    return out;
  }
  if (!(mode.value >= 0.0)) throw ConfigError("uncertainty threshold must be nonnegative");
  std::vector<Item> out;
  for (const auto& item : items) {
    if (item.uncertainty <= mode.value) out.push_back(item);
  }
  return out;
}

/// Hard step penalty: r when u <= t, r - penalty otherwise.
inline double penalized_reward(double reward, double uncertainty, double threshold, double penalty) {
  if (penalty < 0.0) throw ConfigError("penalty must be nonnegative");
  if (threshold < 0.0) throw ConfigError("threshold must be nonnegative");
  return uncertainty <= threshold ? reward : reward - penalty;
}

// Linear-interpolated quantile of an unsorted sample, q in [0, 1].
inline double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw InputError("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

/// Default step penalty: twice the interquartile range of the rewards.
inline double default_penalty(const std::vector<double>& rewards) {
  return 2.0 * (quantile(rewards, 0.75) - quantile(rewards, 0.25));
}

struct ThresholdCurve {
  std::vector<double> thresholds;
  std::vector<std::optional<double>> accuracy;  // empty where every pair was filtered
  std::vector<double> retained_fraction;
  UncertaintyKind kind = UncertaintyKind::aleatoric;
};

inline ThresholdCurve accuracy_vs_threshold(const std::vector<ScoredPair>& pairs, const std::vector<double>& thresholds) {
  if (pairs.empty()) throw InputError("accuracy_vs_threshold: no pairs");
  if (!std::is_sorted(thresholds.begin(), thresholds.end())) throw ConfigError("thresholds must be sorted ascending");
  ThresholdCurve curve;
  curve.kind = pairs.front().kind;
  for (double t : thresholds) {
    if (std::isnan(t) || t < 0.0) throw ConfigError("thresholds must be nonnegative");
    std::size_t kept = 0;
    std::size_t correct = 0;
    for (const auto& p : pairs) {
      if (p.uncertainty <= t) {
        ++kept;
        correct += p.correct() ? 1 : 0;
      }
    }
    curve.thresholds.push_back(t);
    curve.retained_fraction.push_back(static_cast<double>(kept) / static_cast<double>(pairs.size()));
    if (kept == 0) {
      curve.accuracy.push_back(std::nullopt);
    } else {
      curve.accuracy.push_back(static_cast<double>(correct) / static_cast<double>(kept));
    }
  }
  return curve;
}

/// Single models filter on aleatoric uncertainty, ensembles on reward gap,
/// unless `kind` overrides.
template <RewardScorer Scorer>
ThresholdCurve accuracy_vs_threshold(const Scorer& scorer, const std::vector<PreferencePair>& pairs,
                                     const std::vector<double>& thresholds,
                                     std::optional<UncertaintyKind> kind = std::nullopt) {
  if (pairs.empty()) throw InputError("accuracy_vs_threshold: no pairs");
  return accuracy_vs_threshold(score_pairs(scorer, pairs, kind.value_or(scorer.default_uncertainty())), thresholds);
}

/// Area under the ROC curve with `positives` as the positive class; ties
/// count one half (Mann-Whitney statistic).
inline double auroc(std::span<const double> negatives, std::span<const double> positives) {
  if (negatives.empty() || positives.empty()) throw InputError("auroc needs both classes");
  struct Tagged {
    double value;
    bool positive;
  };
  std::vector<Tagged> all;
  all.reserve(negatives.size() + positives.size());
  for (double v : negatives) all.push_back({v, false});
  for (double v : positives) all.push_back({v, true});
  std::sort(all.begin(), all.end(), [](const Tagged& a, const Tagged& b) { return a.value < b.value; });
  // Sum of midranks of the positives.
  double rank_sum = 0.0;
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    while (j < all.size() && all[j].value == all[i].value) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (all[k].positive) rank_sum += midrank;
    }
    i = j;
  }
  const auto np = static_cast<double>(positives.size());
  const auto nn = static_cast<double>(negatives.size());
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

struct Histogram {
  std::vector<double> edges;
  std::vector<std::size_t> counts;
};

/// Counts `values` into the bins delimited by `edges` (last bin closed).
inline Histogram histogram(std::span<const double> values, const std::vector<double>& edges) {
  Histogram h{edges, std::vector<std::size_t>(edges.size() - 1, 0)};
  for (double v : values) {
    if (v < edges.front() || v > edges.back()) continue;
    auto it = std::upper_bound(edges.begin(), edges.end(), v);
    std::size_t bin = static_cast<std::size_t>(it - edges.begin());
    bin = bin == 0 ? 0 : bin - 1;
    if (bin >= h.counts.size()) bin = h.counts.size() - 1;
    ++h.counts[bin];
  }
  return h;
}

inline std::vector<double> linear_edges(double lo, double hi, std::size_t bins) {
  if (bins == 0) throw ConfigError("histogram needs at least one bin");
  if (!(hi > lo)) hi = lo + 1.0;
  std::vector<double> edges(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i) {
    edges[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins);
  }
  edges.back() = hi;
  return edges;
}

struct SetSummary {
  double mean = 0.0;
  double median = 0.0;
  Histogram histogram;
};

struct OodKindReport {
  UncertaintyKind kind = UncertaintyKind::aleatoric;
  SetSummary id;
  SetSummary ood;
  double auroc = 0.5;
};

struct OodReport {
  std::size_t id_count = 0;
  std::size_t ood_count = 0;
  std::vector<OodKindReport> kinds;

  const OodKindReport& get(UncertaintyKind kind) const {
    for (const auto& k : kinds) {
      if (k.kind == kind) return k;
    }
    throw ConfigError("report lacks uncertainty kind " + to_string(kind));
  }
};

inline SetSummary summarize(const std::vector<double>& values, const std::vector<double>& edges) {
  double total = 0.0;
  for (double v : values) total += v;
  return {total / static_cast<double>(values.size()), quantile(values, 0.5), histogram(values, edges)};
}

/// Uncertainty distributions on ID and OOD sets, and how well each kind
/// separates them (OOD is the positive class).
template <RewardScorer Scorer>
OodReport ood_report(const Scorer& scorer, const std::vector<Record>& id_set, const std::vector<Record>& ood_set,
                     std::size_t bins = 20) {
  if (id_set.empty() || ood_set.empty()) throw InputError("ood_report needs nonempty ID and OOD sets");
  std::vector<Assessment> id_scores(id_set.size());
  std::vector<Assessment> ood_scores(ood_set.size());
  parallel_for(id_set.size(), [&](std::size_t i) { id_scores[i] = scorer.assess(id_set[i]); });
  parallel_for(ood_set.size(), [&](std::size_t i) { ood_scores[i] = scorer.assess(ood_set[i]); });
  OodReport report;
  report.id_count = id_set.size();
  report.ood_count = ood_set.size();
  for (auto kind : {UncertaintyKind::aleatoric, UncertaintyKind::u1, UncertaintyKind::u2}) {
    std::vector<double> id_values;
    std::vector<double> ood_values;
    for (const auto& a : id_scores) id_values.push_back(a.uncertainty(kind));
    for (const auto& a : ood_scores) ood_values.push_back(a.uncertainty(kind));
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto* set : {&id_values, &ood_values}) {
      for (double v : *set) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
    const auto edges = linear_edges(lo, hi, bins);
    report.kinds.push_back({kind, summarize(id_values, edges), summarize(ood_values, edges), auroc(id_values, ood_values)});
  }
  return report;
}

}  // namespace urm
