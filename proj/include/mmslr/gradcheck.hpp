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

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "mmslr/tensor.hpp"

namespace mmslr {

/// Compares reverse-mode gradients of a scalar function against central
/// differences, perturbing every element of every tensor in `wrt` in place.
/// Returns max |analytic - numeric| / max(1, |analytic|).
inline double grad_check(const std::function<Tensor()>& f, std::vector<Tensor> wrt, double h = 1e-5) {
  if (!(h > 0.0)) throw DomainError("grad_check: step must be positive");
  for (auto& t : wrt) t.zero_grad();
  Tensor out = f();
  if (out.numel() != 1) throw ShapeError("grad_check: function output " + shape_str(out.shape()) + " is not a scalar");
  backward(out);

  double worst = 0.0;
  for (auto& t : wrt) {
    const std::vector<double> analytic = t.grad();
    auto& v = t.mutable_values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double saved = v[i];
      v[i] = saved + h;
      const double up = f().item();
      v[i] = saved - h;
      const double down = f().item();
      v[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
      worst = std::max(worst, err);
    }
  }
  for (auto& t : wrt) t.zero_grad();
  return worst;
}

/// Single-input form: f is applied to a fresh leaf built from `x`.
inline double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h = 1e-5) {
  Tensor leaf(x.shape(), x.values(), true);
  return grad_check([&] { return f(leaf); }, {leaf}, h);
}

}  // namespace mmslr
