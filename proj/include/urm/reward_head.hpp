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

// Probabilistic value head: per-attribute Gaussians N(mu, exp(2 * log_std))
// over a hidden-state vector, the two training losses, and the
// deterministic (point-estimate) ablation.

#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "urm/dense.hpp"
#include "urm/error.hpp"

namespace urm {

inline constexpr double kLogStdMin = -6.0;
inline constexpr double kLogStdMax = 3.0;
inline const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

enum class HeadKind { probabilistic, deterministic };

inline std::string to_string(HeadKind kind) {
  return kind == HeadKind::probabilistic ? "probabilistic" : "deterministic";
}

inline HeadKind head_kind_from_string(const std::string& name) {
  if (name == "probabilistic") return HeadKind::probabilistic;
  if (name == "deterministic") return HeadKind::deterministic;
  throw ConfigError("unknown head kind '" + name + "'");
}

struct AttributeDistribution {
  std::vector<double> mu;
  std::vector<double> log_std;

  std::size_t size() const { return mu.size(); }
  double variance(std::size_t i) const { return std::exp(2.0 * log_std[i]); }
};

struct RewardSample {
  std::vector<double> scores;
  std::vector<double> alpha_used;
};

/// Loss value plus gradient w.r.t. the head outputs. For probabilistic heads
/// the gradient is laid out as [d/dmu (n), d/dlog_std (n)].
struct LossAndGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

inline double clamp_log_std(double raw) { return std::clamp(raw, kLogStdMin, kLogStdMax); }

// Derivative of the clamp; zero outside the admissible band.
inline double clamp_log_std_slope(double raw) { return raw < kLogStdMin || raw > kLogStdMax ? 0.0 : 1.0; }

/// Splits raw head outputs (length 2n) into mu and clamped log_std.
inline AttributeDistribution split_head_output(std::span<const double> raw) {
  if (raw.size() % 2 != 0 || raw.empty()) {
    throw ConfigError("probabilistic head output must have even, nonzero length");
  }
  const std::size_t n = raw.size() / 2;
  AttributeDistribution dist;
  dist.mu.assign(raw.begin(), raw.begin() + static_cast<std::ptrdiff_t>(n));
  dist.log_std.resize(n);
  for (std::size_t i = 0; i < n; ++i) dist.log_std[i] = clamp_log_std(raw[n + i]);
  return dist;
}

inline AttributeDistribution head_forward(const DenseNet& head, std::span<const double> h) {
  if (h.size() != head.input_dim()) {
    throw ConfigError("hidden state has dimension " + std::to_string(h.size()) + ", head expects " +
                      std::to_string(head.input_dim()));
  }
  const auto raw = head.forward(h);
  return split_head_output(raw);
}

inline std::vector<double> deterministic_forward(const DenseNet& head, std::span<const double> h) {
  if (h.size() != head.input_dim()) {
    throw ConfigError("hidden state has dimension " + std::to_string(h.size()) + ", head expects " +
                      std::to_string(head.input_dim()));
  }
  return head.forward(h);
}

/// Reparameterized draw: scores[i] = mu[i] + alpha[i] * exp(log_std[i]).
inline RewardSample sample_rewards(const AttributeDistribution& dist, std::span<const double> alpha) {
  if (alpha.size() != dist.size()) throw ConfigError("alpha length does not match attribute count");
  RewardSample sample;
  sample.alpha_used.assign(alpha.begin(), alpha.end());
  sample.scores.resize(dist.size());
  for (std::size_t i = 0; i < dist.size(); ++i) {
    sample.scores[i] = dist.mu[i] + alpha[i] * std::exp(dist.log_std[i]);
  }
  return sample;
}

/// Gaussian negative log-likelihood summed over attributes.
inline LossAndGrad mle_loss(const AttributeDistribution& dist, std::span<const double> labels) {
  const std::size_t n = dist.size();
  if (labels.size() != n) throw ConfigError("label length does not match attribute count");
  LossAndGrad out;
  out.grad.assign(2 * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double inv_var = std::exp(-2.0 * dist.log_std[i]);
    const double diff = labels[i] - dist.mu[i];
    out.loss += kHalfLog2Pi + dist.log_std[i] + 0.5 * diff * diff * inv_var;
    out.grad[i] = -diff * inv_var;
    out.grad[n + i] = 1.0 - diff * diff * inv_var;
  }
  return out;
}

/// Squared error of a reparameterized sample against the labels.
inline LossAndGrad regression_loss(const AttributeDistribution& dist, std::span<const double> labels,
                                   std::span<const double> alpha) {
  const std::size_t n = dist.size();
  if (labels.size() != n || alpha.size() != n) throw ConfigError("label/alpha length does not match attribute count");
  LossAndGrad out;
  out.grad.assign(2 * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double spread = alpha[i] * std::exp(dist.log_std[i]);
    const double resid = dist.mu[i] + spread - labels[i];
    out.loss += resid * resid;
    out.grad[i] = 2.0 * resid;
    out.grad[n + i] = 2.0 * resid * spread;
  }
  return out;
}

/// Plain squared error for the deterministic head.
inline LossAndGrad mse_loss(std::span<const double> scores, std::span<const double> labels) {
  if (labels.size() != scores.size()) throw ConfigError("label length does not match attribute count");
  LossAndGrad out;
  out.grad.assign(scores.size(), 0.0);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double resid = scores[i] - labels[i];
    out.loss += resid * resid;
    out.grad[i] = 2.0 * resid;
  }
  return out;
}

/// Sum of per-attribute variances.
inline double aleatoric_uncertainty(const AttributeDistribution& dist) {
  double total = 0.0;
  for (std::size_t i = 0; i < dist.size(); ++i) total += dist.variance(i);
  return total;
}

/// Frobenius norm of the diagonal covariance diag(exp(2 * log_std)).
inline double covariance_frobenius_norm(const AttributeDistribution& dist) {
  double total = 0.0;
  for (double s : dist.log_std) total += std::exp(4.0 * s);
  return std::sqrt(total);
}

}  // namespace urm
