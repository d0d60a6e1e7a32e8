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

#include <concepts>
#include <string>
#include <vector>

#include "urm/error.hpp"
#include "urm/record.hpp"

namespace urm {

enum class UncertaintyKind { aleatoric, u1, u2 };

inline std::string to_string(UncertaintyKind kind) {
  switch (kind) {
    case UncertaintyKind::aleatoric:
      return "aleatoric";
    case UncertaintyKind::u1:
      return "u1";
    case UncertaintyKind::u2:
      return "u2";
  }
  return "aleatoric";
}

inline UncertaintyKind uncertainty_kind_from_string(const std::string& name) {
  if (name == "aleatoric") return UncertaintyKind::aleatoric;
  if (name == "u1") return UncertaintyKind::u1;
  if (name == "u2") return UncertaintyKind::u2;
  throw ConfigError("unknown uncertainty kind '" + name + "'");
}

/// Scalar reward of one record together with every uncertainty estimate the
/// scorer can provide. Single models report u1 = 0.
struct Assessment {
  double reward = 0.0;
  double aleatoric = 0.0;
  double u1 = 0.0;
  double u2 = 0.0;

  double uncertainty(UncertaintyKind kind) const {
    switch (kind) {
      case UncertaintyKind::aleatoric:
        return aleatoric;
      case UncertaintyKind::u1:
        return u1;
      case UncertaintyKind::u2:
        return u2;
    }
    return aleatoric;
  }
};

/// Anything that turns a record into a reward plus uncertainties: a single
/// model, an ensemble, or the ground-truth oracle.
template <typename T>
concept RewardScorer = requires(const T& scorer, const Record& record) {
  { scorer.assess(record) } -> std::same_as<Assessment>;
  { scorer.default_uncertainty() } -> std::same_as<UncertaintyKind>;
};

/// Scores records by the ground-truth utility weights . true_mean.
class OracleScorer {
 public:
  explicit OracleScorer(std::vector<double> weights) : weights_(std::move(weights)) {}

  Assessment assess(const Record& record) const {
    if (!record.has_truth()) throw InputError("oracle scorer needs true_mean on record " + std::to_string(record.id));
    return {dot(weights_, record.true_mean), 0.0, 0.0, 0.0};
  }
  UncertaintyKind default_uncertainty() const { return UncertaintyKind::aleatoric; }
  const std::vector<double>& weights() const { return weights_; }

 private:
  std::vector<double> weights_;
};

}  // namespace urm
