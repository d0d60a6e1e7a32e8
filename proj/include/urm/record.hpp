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

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "urm/error.hpp"

namespace urm {

/// Shape shared by datasets and models: feature dimension, attribute count
/// and attribute names.
struct Schema {
  std::size_t feature_dim = 0;
  std::size_t attribute_count = 0;
  std::vector<std::string> attribute_names;

  bool operator==(const Schema&) const = default;

  static Schema make(std::size_t d, std::size_t n) {
    static const char* kNames[] = {"helpfulness", "correctness", "coherence", "complexity", "verbosity"};
    Schema s{d, n, {}};
    for (std::size_t i = 0; i < n; ++i) {
      s.attribute_names.push_back(i < 5 ? kNames[i] : "attribute_" + std::to_string(i));
    }
    return s;
  }
};

/// One prompt-response instance reduced to a feature vector.
struct Record {
  std::uint64_t id = 0;
  std::vector<double> features;
  std::vector<double> labels;     // empty when unlabeled
  std::vector<double> true_mean;  // empty when ground truth is unknown
  std::vector<double> true_std;
  bool is_ood = false;
  std::uint64_t prompt_group = 0;

  bool has_labels() const { return !labels.empty(); }
  bool has_truth() const { return !true_mean.empty(); }
  bool operator==(const Record&) const = default;
};

struct PreferencePair {
  Record chosen;
  Record rejected;
  std::optional<double> true_margin;

  bool operator==(const PreferencePair&) const = default;
};

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ConfigError("vector length mismatch in dot product");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace urm
