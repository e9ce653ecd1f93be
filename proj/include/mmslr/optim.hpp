// Copyright 2026 The mmslr Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "mmslr/random.hpp"
#include "mmslr/tensor.hpp"

namespace mmslr {

struct NamedParameter {
  std::string name;
  Tensor tensor;
  bool trainable = true;
};

/// Ordered list of named leaf tensors. Order is the checkpoint order and the
/// gradient reduction order.
class ParameterSet {
 public:
  Tensor& add(std::string name, Tensor t, bool trainable = true) {
    for (const auto& p : params_) {
      if (p.name == name) throw Error("parameter '" + name + "' registered twice");
    }
    params_.push_back({std::move(name), std::move(t), trainable});
    return params_.back().tensor;
  }

  void append(const ParameterSet& other, const std::string& prefix) {
    for (const auto& p : other.params_) add(prefix + p.name, p.tensor, p.trainable);
  }

  std::vector<NamedParameter>& items() { return params_; }
  const std::vector<NamedParameter>& items() const { return params_; }

  const NamedParameter* find(const std::string& name) const {
    for (const auto& p : params_)
      if (p.name == name) return &p;
    return nullptr;
  }

  void set_trainable(const std::string& prefix, bool trainable) {
    for (auto& p : params_)
      if (p.name.rfind(prefix, 0) == 0) p.trainable = trainable;
  }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.tensor.numel();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

 private:
  std::vector<NamedParameter> params_;
};

/// Xavier/Glorot uniform initialization for a [fan_in x fan_out] matrix.
inline Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> v(fan_in * fan_out);
  for (auto& e : v) e = rng.uniform(-limit, limit);
  return Tensor({fan_in, fan_out}, std::move(v), true);
}

/// Scales all trainable gradients so their joint L2 norm is at most max_norm.
/// Returns the norm before clipping.
inline double clip_grad_norm(ParameterSet& params, double max_norm) {
  double sq = 0.0;
  for (auto& p : params.items()) {
    if (!p.trainable || !p.tensor.has_grad()) continue;
    for (double g : p.tensor.node()->grad) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double c = max_norm / (norm + 1e-12);
    for (auto& p : params.items()) {
      if (!p.trainable || !p.tensor.has_grad()) continue;
      for (double& g : p.tensor.node()->grad) g *= c;
    }
  }
  return norm;
}

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(ParameterSet& params, AdamOptions opts) : params_(params), opts_(opts) {
    for (const auto& p : params_.items()) {
      m_.emplace_back(p.tensor.numel(), 0.0);
      v_.emplace_back(p.tensor.numel(), 0.0);
    }
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
    auto& items = params_.items();
    for (std::size_t k = 0; k < items.size(); ++k) {
      auto& p = items[k];
      if (!p.trainable || !p.tensor.has_grad()) continue;
      auto& w = p.tensor.mutable_values();
      const auto& g = p.tensor.node()->grad;
      for (std::size_t i = 0; i < w.size(); ++i) {
        m_[k][i] = opts_.beta1 * m_[k][i] + (1.0 - opts_.beta1) * g[i];
        v_[k][i] = opts_.beta2 * v_[k][i] + (1.0 - opts_.beta2) * g[i] * g[i];
        w[i] -= opts_.lr * (m_[k][i] / bc1) / (std::sqrt(v_[k][i] / bc2) + opts_.eps);
      }
    }
  }

  long steps() const { return t_; }

 private:
  ParameterSet& params_;
  AdamOptions opts_;
  std::vector<std::vector<double>> m_, v_;
  long t_ = 0;
};

}  // namespace mmslr
