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

// Dense feed-forward networks with hand-written backpropagation.

#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "urm/error.hpp"
#include "urm/random.hpp"

namespace urm {

enum class Activation { identity, selu, tanh };

inline constexpr double kSeluScale = 1.0507009873554805;
inline constexpr double kSeluAlpha = 1.6732632423543772;

inline double selu(double x) {
  return x > 0.0 ? kSeluScale * x : kSeluScale * kSeluAlpha * std::expm1(x);
}

inline double activate(Activation act, double x) {
  switch (act) {
    case Activation::identity:
      return x;
    case Activation::selu:
      return selu(x);
    case Activation::tanh:
      return std::tanh(x);
  }
  return x;
}

// Derivative expressed through the pre-activation z and output y.
inline double activation_slope(Activation act, double z, double y) {
  switch (act) {
    case Activation::identity:
      return 1.0;
    case Activation::selu:
      return z > 0.0 ? kSeluScale : kSeluScale * kSeluAlpha * std::exp(z);
    case Activation::tanh:
      return 1.0 - y * y;
  }
  return 1.0;
}

inline std::string to_string(Activation act) {
  switch (act) {
    case Activation::identity:
      return "identity";
    case Activation::selu:
      return "selu";
    case Activation::tanh:
      return "tanh";
  }
  return "identity";
}

inline Activation activation_from_string(const std::string& name) {
  if (name == "identity") return Activation::identity;
  if (name == "selu") return Activation::selu;
  if (name == "tanh") return Activation::tanh;
  throw ConfigError("unknown activation '" + name + "'");
}

struct LayerShape {
  std::size_t in = 0;
  std::size_t out = 0;
  Activation activation = Activation::identity;

  std::size_t parameter_count() const { return out * in + out; }
  bool operator==(const LayerShape&) const = default;
};

/// Per-call intermediate values kept for the backward pass.
struct ForwardTrace {
  std::vector<double> input;
  std::vector<std::vector<double>> pre;   // per layer, before activation
  std::vector<std::vector<double>> post;  // per layer, after activation

  std::span<const double> output() const {
    return post.empty() ? std::span<const double>(input) : std::span<const double>(post.back());
  }
};

/// A chain of affine layers, each followed by an elementwise activation.
///
/// All parameters live in one flat vector: for each layer the row-major
/// weight matrix (out x in) followed by the bias. A net with no layers is the
/// identity map on its input dimension.
class DenseNet {
 public:
  DenseNet() = default;

  static DenseNet identity(std::size_t dim) {
    DenseNet net;
    net.input_dim_ = dim;
    return net;
  }

  DenseNet(std::size_t input_dim, std::vector<LayerShape> shapes) : input_dim_(input_dim), shapes_(std::move(shapes)) {
    std::size_t width = input_dim_;
    std::size_t total = 0;
    for (const auto& shape : shapes_) {
      if (shape.in != width || shape.out == 0) {
        throw ConfigError("dense layer dimensions do not chain");
      }
      width = shape.out;
      total += shape.parameter_count();
    }
    params_.assign(total, 0.0);
  }

  DenseNet(std::size_t input_dim, std::vector<LayerShape> shapes, std::vector<double> params)
      : DenseNet(input_dim, std::move(shapes)) {
    if (params.size() != params_.size()) {
      throw ConfigError("parameter vector length " + std::to_string(params.size()) + " does not match architecture (" +
                        std::to_string(params_.size()) + ")");
    }
    params_ = std::move(params);
  }

  // Builds a net with the given layer widths; the last width is the output.
  // Weights are drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases are zero.
  static DenseNet random(std::size_t input_dim, const std::vector<std::size_t>& widths,
                         const std::vector<Activation>& activations, Rng& rng) {
    if (widths.size() != activations.size()) {
      throw ConfigError("layer widths and activations differ in length");
    }
    std::vector<LayerShape> shapes;
    std::size_t in = input_dim;
    for (std::size_t i = 0; i < widths.size(); ++i) {
      shapes.push_back({in, widths[i], activations[i]});
      in = widths[i];
    }
    DenseNet net(input_dim, std::move(shapes));
    std::size_t offset = 0;
    for (const auto& shape : net.shapes_) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(shape.in));
      for (std::size_t k = 0; k < shape.out * shape.in; ++k) {
        net.params_[offset + k] = rng.uniform(-bound, bound);
      }
      offset += shape.parameter_count();
    }
    return net;
  }

  std::size_t input_dim() const { return input_dim_; }
  std::size_t output_dim() const { return shapes_.empty() ? input_dim_ : shapes_.back().out; }
  std::size_t parameter_count() const { return params_.size(); }
  const std::vector<LayerShape>& shapes() const { return shapes_; }
  bool empty() const { return shapes_.empty(); }

  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }

  bool same_architecture(const DenseNet& other) const {
    return input_dim_ == other.input_dim_ && shapes_ == other.shapes_;
  }

  double& weight(std::size_t layer, std::size_t row, std::size_t col) {
    return params_[offset_of(layer) + row * shapes_[layer].in + col];
  }
  double& bias(std::size_t layer, std::size_t row) {
    return params_[offset_of(layer) + shapes_[layer].out * shapes_[layer].in + row];
  }

  std::vector<double> forward(std::span<const double> x) const {
    ForwardTrace trace;
    forward(x, trace);
    const auto out = trace.output();
    return {out.begin(), out.end()};
  }

  // Forward pass recording intermediates into `trace` (reused across calls).
  void forward(std::span<const double> x, ForwardTrace& trace) const {
    if (x.size() != input_dim_) {
      throw InputError("input has dimension " + std::to_string(x.size()) + ", network expects " +
                       std::to_string(input_dim_));
    }
    trace.input.assign(x.begin(), x.end());
    trace.pre.resize(shapes_.size());
    trace.post.resize(shapes_.size());
    const double* in = trace.input.data();
    std::size_t offset = 0;
    for (std::size_t l = 0; l < shapes_.size(); ++l) {
      const auto& shape = shapes_[l];
      const double* w = params_.data() + offset;
      const double* b = w + shape.out * shape.in;
      auto& pre = trace.pre[l];
      auto& post = trace.post[l];
      pre.resize(shape.out);
      post.resize(shape.out);
      for (std::size_t o = 0; o < shape.out; ++o) {
        double acc = b[o];
        const double* row = w + o * shape.in;
        for (std::size_t i = 0; i < shape.in; ++i) acc += row[i] * in[i];
        pre[o] = acc;
        post[o] = activate(shape.activation, acc);
      }
      in = post.data();
      offset += shape.parameter_count();
    }
  }

  // Accumulates d(loss)/d(params) into `grad_params` given d(loss)/d(output).
  // When `grad_input` is non-null it receives d(loss)/d(input).
  void backward(const ForwardTrace& trace, std::span<const double> grad_output, std::span<double> grad_params,
                std::vector<double>* grad_input = nullptr) const {
    if (grad_params.size() != params_.size()) {
      throw ConfigError("gradient buffer does not match parameter count");
    }
    std::vector<double> delta(grad_output.begin(), grad_output.end());
    std::vector<double> next;
    std::size_t offset = params_.size();
    for (std::size_t l = shapes_.size(); l-- > 0;) {
      const auto& shape = shapes_[l];
      offset -= shape.parameter_count();
      const auto& pre = trace.pre[l];
      const auto& post = trace.post[l];
      for (std::size_t o = 0; o < shape.out; ++o) {
        delta[o] *= activation_slope(shape.activation, pre[o], post[o]);
      }
      const double* in = l == 0 ? trace.input.data() : trace.post[l - 1].data();
      const double* w = params_.data() + offset;
      double* gw = grad_params.data() + offset;
      double* gb = gw + shape.out * shape.in;
      const bool need_input_grad = l > 0 || grad_input != nullptr;
      if (need_input_grad) next.assign(shape.in, 0.0);
      for (std::size_t o = 0; o < shape.out; ++o) {
        const double d = delta[o];
        if (d == 0.0) continue;
        gb[o] += d;
        double* grow = gw + o * shape.in;
        const double* wrow = w + o * shape.in;
        for (std::size_t i = 0; i < shape.in; ++i) {
          grow[i] += d * in[i];
          if (need_input_grad) next[i] += d * wrow[i];
        }
      }
      if (need_input_grad) delta.swap(next);
    }
    if (grad_input != nullptr) {
      *grad_input = std::move(delta);
    }
  }

 private:
  std::size_t offset_of(std::size_t layer) const {
    std::size_t offset = 0;
    for (std::size_t l = 0; l < layer; ++l) offset += shapes_[l].parameter_count();
    return offset;
  }

  std::size_t input_dim_ = 0;
  std::vector<LayerShape> shapes_;
  std::vector<double> params_;
};

}  // namespace urm
