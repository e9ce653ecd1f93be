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

// Primitive differentiable operations. Broadcasting is limited to the
// explicit forms below (scalar-tensor, row bias); everything else requires
// identical shapes.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "mmslr/random.hpp"
#include "mmslr/tensor.hpp"

namespace mmslr {

namespace detail {

inline void require_same(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

inline void require_rank(const char* op, const Tensor& a, std::size_t r) {
  if (a.rank() != r) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(r) + ", got " +
                     shape_str(a.shape()));
  }
}

struct AxisSplit {
  std::size_t outer, len, inner;
};

inline AxisSplit split_axis(const char* op, const Shape& s, std::size_t axis) {
  if (axis >= s.size()) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " invalid for " +
                     shape_str(s));
  }
  AxisSplit r{1, s[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

inline Node* in(Node& n, std::size_t i) { return n.inputs[i].get(); }

template <typename F>
Tensor unary(const char* op, const Tensor& a, F&& f, std::function<void(Node&)> bw) {
  std::vector<double> v(a.numel());
  const auto& x = a.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = f(x[i]);
  return Tensor::from_op(op, a.shape(), std::move(v), {a}, std::move(bw));
}

}  // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_rank("matmul", a, 2);
  detail::require_rank("matmul", b, 2);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner dimensions differ " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  std::vector<double> c(m * n, 0.0);
  const double* A = a.values().data();
  const double* B = b.values().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      if (aip == 0.0) continue;
      const double* bp = B + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
  return Tensor::from_op("matmul", {m, n}, std::move(c), {a, b}, [m, k, n](detail::Node& o) {
    auto* na = detail::in(o, 0);
    auto* nb = detail::in(o, 1);
    const double* G = o.grad.data();
    if (na->requires_grad) {
      auto& ga = na->ensure_grad();
      const double* B = nb->value.data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          const double* gi = G + i * n;
          const double* bp = B + p * n;
          for (std::size_t j = 0; j < n; ++j) s += gi[j] * bp[j];
          ga[i * k + p] += s;
        }
    }
    if (nb->requires_grad) {
      auto& gb = nb->ensure_grad();
      const double* A = na->value.data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = A[i * k + p];
          if (aip == 0.0) continue;
          const double* gi = G + i * n;
          double* gbp = gb.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) gbp[j] += aip * gi[j];
        }
    }
  });
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same("add", a, b);
  std::vector<double> v(a.values());
  const auto& y = b.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += y[i];
  return Tensor::from_op("add", a.shape(), std::move(v), {a, b}, [](detail::Node& o) {
    for (std::size_t k = 0; k < 2; ++k) {
      auto* x = detail::in(o, k);
      if (!x->requires_grad) continue;
      auto& g = x->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    }
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same("sub", a, b);
  std::vector<double> v(a.values());
  const auto& y = b.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] -= y[i];
  return Tensor::from_op("sub", a.shape(), std::move(v), {a, b}, [](detail::Node& o) {
    for (std::size_t k = 0; k < 2; ++k) {
      auto* x = detail::in(o, k);
      if (!x->requires_grad) continue;
      auto& g = x->ensure_grad();
      const double sign = k == 0 ? 1.0 : -1.0;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += sign * o.grad[i];
    }
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same("mul", a, b);
  std::vector<double> v(a.values());
  const auto& y = b.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] *= y[i];
  return Tensor::from_op("mul", a.shape(), std::move(v), {a, b}, [](detail::Node& o) {
    auto* na = detail::in(o, 0);
    auto* nb = detail::in(o, 1);
    if (na->requires_grad) {
      auto& g = na->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * nb->value[i];
    }
    if (nb->requires_grad) {
      auto& g = nb->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * na->value[i];
    }
  });
}

/// Multiplies every element of `x` by a one-element tensor `s`.
inline Tensor mul_scalar(const Tensor& s, const Tensor& x) {
  if (s.numel() != 1) throw ShapeError("mul_scalar: scalar operand has shape " + shape_str(s.shape()));
  const double c = s.item();
  std::vector<double> v(x.values());
  for (auto& e : v) e *= c;
  return Tensor::from_op("mul_scalar", x.shape(), std::move(v), {s, x}, [](detail::Node& o) {
    auto* ns = detail::in(o, 0);
    auto* nx = detail::in(o, 1);
    if (ns->requires_grad) {
      double acc = 0.0;
      for (std::size_t i = 0; i < o.grad.size(); ++i) acc += o.grad[i] * nx->value[i];
      ns->ensure_grad()[0] += acc;
    }
    if (nx->requires_grad) {
      auto& g = nx->ensure_grad();
      const double c = ns->value[0];
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += c * o.grad[i];
    }
  });
}

inline Tensor scale(const Tensor& x, double c) {
  return detail::unary("scale", x, [c](double v) { return c * v; }, [c](detail::Node& o) {
    auto& g = detail::in(o, 0)->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += c * o.grad[i];
  });
}

/// x[n x m] + b[m] on every row.
inline Tensor add_bias(const Tensor& x, const Tensor& b) {
  detail::require_rank("add_bias", x, 2);
  if (b.numel() != x.dim(1)) {
    throw ShapeError("add_bias: bias " + shape_str(b.shape()) + " does not match rows of " +
                     shape_str(x.shape()));
  }
  const std::size_t n = x.dim(0), m = x.dim(1);
  std::vector<double> v(x.values());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) v[i * m + j] += b.values()[j];
  return Tensor::from_op("add_bias", x.shape(), std::move(v), {x, b}, [n, m](detail::Node& o) {
    auto* nx = detail::in(o, 0);
    auto* nb = detail::in(o, 1);
    if (nx->requires_grad) {
      auto& g = nx->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    }
    if (nb->requires_grad) {
      auto& g = nb->ensure_grad();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) g[j] += o.grad[i * m + j];
    }
  });
}

inline Tensor transpose(const Tensor& a) {
  detail::require_rank("transpose", a, 2);
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> v(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) v[j * m + i] = a.values()[i * n + j];
  return Tensor::from_op("transpose", {n, m}, std::move(v), {a}, [m, n](detail::Node& o) {
    auto& g = detail::in(o, 0)->ensure_grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += o.grad[j * m + i];
  });
}

inline Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  return Tensor::from_op("reshape", std::move(shape), a.values(), {a}, [](detail::Node& o) {
    auto& g = detail::in(o, 0)->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
  });
}

inline Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Shape out = parts.front().shape();
  auto ref = detail::split_axis("concat", out, axis);
  std::size_t total = 0;
  std::vector<std::size_t> lens;
  for (const auto& p : parts) {
    Shape s = p.shape();
    if (s.size() != out.size()) throw ShapeError("concat: rank mismatch " + shape_str(s));
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis && s[i] != out[i]) {
        throw ShapeError("concat: shape mismatch " + shape_str(out) + " vs " + shape_str(s));
      }
    }
    lens.push_back(s[axis]);
    total += s[axis];
  }
  out[axis] = total;
  const std::size_t outer = ref.outer, inner = ref.inner;
  std::vector<double> v(shape_numel(out));
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& src = parts[k].values();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(o * lens[k] * inner), lens[k] * inner,
                  v.begin() + static_cast<std::ptrdiff_t>((o * total + offset) * inner));
    offset += lens[k];
  }
  return Tensor::from_op("concat", out, std::move(v), parts, [outer, inner, total, lens](detail::Node& o) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < lens.size(); ++k) {
      auto* x = detail::in(o, k);
      if (x->requires_grad) {
        auto& g = x->ensure_grad();
        for (std::size_t b = 0; b < outer; ++b)
          for (std::size_t i = 0; i < lens[k] * inner; ++i)
            g[b * lens[k] * inner + i] += o.grad[(b * total + offset) * inner + i];
      }
      offset += lens[k];
    }
  });
}

/// Elements [begin, end) along `axis`.
inline Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end) {
  auto sp = detail::split_axis("slice", a.shape(), axis);
  if (begin >= end || end > sp.len) {
    throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") invalid for axis of length " + std::to_string(sp.len));
  }
  Shape out = a.shape();
  out[axis] = end - begin;
  const std::size_t w = end - begin;
  std::vector<double> v(shape_numel(out));
  for (std::size_t o = 0; o < sp.outer; ++o)
    std::copy_n(a.values().begin() + static_cast<std::ptrdiff_t>((o * sp.len + begin) * sp.inner),
                w * sp.inner, v.begin() + static_cast<std::ptrdiff_t>(o * w * sp.inner));
  return Tensor::from_op("slice", std::move(out), std::move(v), {a}, [sp, begin, w](detail::Node& o) {
    auto& g = detail::in(o, 0)->ensure_grad();
    for (std::size_t b = 0; b < sp.outer; ++b)
      for (std::size_t i = 0; i < w * sp.inner; ++i)
        g[(b * sp.len + begin) * sp.inner + i] += o.grad[b * w * sp.inner + i];
  });
}

/// Row gather (embedding lookup): out[i] = table[ids[i]].
inline Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids) {
  detail::require_rank("gather_rows", table, 2);
  if (ids.empty()) throw ShapeError("gather_rows: empty id list");
  const std::size_t rows = table.dim(0), d = table.dim(1);
  std::vector<double> v(ids.size() * d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= rows) {
      throw DomainError("gather_rows: id " + std::to_string(ids[i]) + " out of range for " +
                        std::to_string(rows) + " rows");
    }
    std::copy_n(table.values().begin() + static_cast<std::ptrdiff_t>(ids[i] * d), d,
                v.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  std::vector<std::size_t> idv(ids.begin(), ids.end());
  return Tensor::from_op("gather_rows", {ids.size(), d}, std::move(v), {table},
                         [idv = std::move(idv), d](detail::Node& o) {
                           auto& g = detail::in(o, 0)->ensure_grad();
                           for (std::size_t i = 0; i < idv.size(); ++i)
                             for (std::size_t j = 0; j < d; ++j) g[idv[i] * d + j] += o.grad[i * d + j];
                         });
}

/// out[i] = a[i, ids[i]].
inline Tensor pick(const Tensor& a, std::span<const std::size_t> ids) {
  detail::require_rank("pick", a, 2);
  if (ids.size() != a.dim(0)) throw ShapeError("pick: need one id per row of " + shape_str(a.shape()));
  const std::size_t m = a.dim(1);
  std::vector<double> v(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= m) throw DomainError("pick: id " + std::to_string(ids[i]) + " out of range");
    v[i] = a.values()[i * m + ids[i]];
  }
  std::vector<std::size_t> idv(ids.begin(), ids.end());
  return Tensor::from_op("pick", {ids.size()}, std::move(v), {a}, [idv = std::move(idv), m](detail::Node& o) {
    auto& g = detail::in(o, 0)->ensure_grad();
    for (std::size_t i = 0; i < idv.size(); ++i) g[i * m + idv[i]] += o.grad[i];
  });
}

inline Tensor softmax(const Tensor& a, std::size_t axis) {
  auto sp = detail::split_axis("softmax", a.shape(), axis);
  std::vector<double> v(a.numel());
  const auto& x = a.values();
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t in = 0; in < sp.inner; ++in) {
      const std::size_t base = o * sp.len * sp.inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t l = 0; l < sp.len; ++l) mx = std::max(mx, x[base + l * sp.inner]);
      double z = 0.0;
      for (std::size_t l = 0; l < sp.len; ++l) {
        const double e = std::exp(x[base + l * sp.inner] - mx);
        v[base + l * sp.inner] = e;
        z += e;
      }
      for (std::size_t l = 0; l < sp.len; ++l) v[base + l * sp.inner] /= z;
    }
  return Tensor::from_op("softmax", a.shape(), std::move(v), {a}, [sp](detail::Node& o) {
    auto& g = detail::in(o, 0)->ensure_grad();
    for (std::size_t b = 0; b < sp.outer; ++b)
      for (std::size_t in = 0; in < sp.inner; ++in) {
        const std::size_t base = b * sp.len * sp.inner + in;
        double dot = 0.0;
        for (std::size_t l = 0; l < sp.len; ++l) {
          const std::size_t i = base + l * sp.inner;
          dot += o.grad[i] * o.value[i];
        }
        for (std::size_t l = 0; l < sp.len; ++l) {
          const std::size_t i = base + l * sp.inner;
          g[i] += o.value[i] * (o.grad[i] - dot);
        }
      }
  });
}

inline Tensor log_softmax(const Tensor& a, std::size_t axis) {
  auto sp = detail::split_axis("log_softmax", a.shape(), axis);
  std::vector<double> v(a.numel());
  const auto& x = a.values();
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t in = 0; in < sp.inner; ++in) {
      const std::size_t base = o * sp.len * sp.inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t l = 0; l < sp.len; ++l) mx = std::max(mx, x[base + l * sp.inner]);
      double z = 0.0;
      for (std::size_t l = 0; l < sp.len; ++l) z += std::exp(x[base + l * sp.inner] - mx);
      const double lz = mx + std::log(z);
      for (std::size_t l = 0; l < sp.len; ++l) v[base + l * sp.inner] = x[base + l * sp.inner] - lz;
    }
  return Tensor::from_op("log_softmax", a.shape(), std::move(v), {a}, [sp](detail::Node& o) {
    auto& g = detail::in(o, 0)->ensure_grad();
    for (std::size_t b = 0; b < sp.outer; ++b)
      for (std::size_t in = 0; in < sp.inner; ++in) {
        const std::size_t base = b * sp.len * sp.inner + in;
        double gs = 0.0;
        for (std::size_t l = 0; l < sp.len; ++l) gs += o.grad[base + l * sp.inner];
        for (std::size_t l = 0; l < sp.len; ++l) {
          const std::size_t i = base + l * sp.inner;
          g[i] += o.grad[i] - std::exp(o.value[i]) * gs;
        }
      }
  });
}

inline Tensor tanh(const Tensor& a) {
  return detail::unary("tanh", a, [](double v) { return std::tanh(v); }, [](detail::Node& o) {
    auto& g = detail::in(o, 0)->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * (1.0 - o.value[i] * o.value[i]);
  });
}

inline Tensor sigmoid(const Tensor& a) {
  return detail::unary(
      "sigmoid", a,
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](detail::Node& o) {
        auto& g = detail::in(o, 0)->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * o.value[i] * (1.0 - o.value[i]);
      });
}

inline Tensor relu(const Tensor& a) {
  return detail::unary("relu", a, [](double v) { return v > 0.0 ? v : 0.0; }, [](detail::Node& o) {
    auto* x = detail::in(o, 0);
    auto& g = x->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (x->value[i] > 0.0) g[i] += o.grad[i];
  });
}

inline Tensor exp(const Tensor& a) {
  return detail::unary("exp", a, [](double v) { return std::exp(v); }, [](detail::Node& o) {
    auto& g = detail::in(o, 0)->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * o.value[i];
  });
}

inline Tensor log(const Tensor& a) {
  for (double v : a.values()) {
    if (!(v > 0.0)) throw DomainError("log: non-positive input " + std::to_string(v));
  }
  return detail::unary("log", a, [](double v) { return std::log(v); }, [](detail::Node& o) {
    auto* x = detail::in(o, 0);
    auto& g = x->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] / x->value[i];
  });
}

/// Sum of all elements, as a one-element tensor.
inline Tensor reduce_sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  return Tensor::from_op("reduce_sum", {1}, {s}, {a}, [](detail::Node& o) {
    auto& g = detail::in(o, 0)->ensure_grad();
    for (auto& e : g) e += o.grad[0];
  });
}

inline Shape drop_axis(const Shape& s, std::size_t axis) {
  Shape out;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (i != axis) out.push_back(s[i]);
  if (out.empty()) out.push_back(1);
  return out;
}

inline Tensor reduce_sum(const Tensor& a, std::size_t axis) {
  auto sp = detail::split_axis("reduce_sum", a.shape(), axis);
  std::vector<double> v(sp.outer * sp.inner, 0.0);
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t l = 0; l < sp.len; ++l)
      for (std::size_t in = 0; in < sp.inner; ++in)
        v[o * sp.inner + in] += a.values()[(o * sp.len + l) * sp.inner + in];
  return Tensor::from_op("reduce_sum_axis", drop_axis(a.shape(), axis), std::move(v), {a}, [sp](detail::Node& o) {
    auto& g = detail::in(o, 0)->ensure_grad();
    for (std::size_t b = 0; b < sp.outer; ++b)
      for (std::size_t l = 0; l < sp.len; ++l)
        for (std::size_t in = 0; in < sp.inner; ++in)
          g[(b * sp.len + l) * sp.inner + in] += o.grad[b * sp.inner + in];
  });
}

/// Maximum along `axis`; the adjoint goes to the first maximizing element.
inline Tensor reduce_max(const Tensor& a, std::size_t axis) {
  auto sp = detail::split_axis("reduce_max", a.shape(), axis);
  std::vector<double> v(sp.outer * sp.inner);
  std::vector<std::size_t> arg(sp.outer * sp.inner);
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t in = 0; in < sp.inner; ++in) {
      std::size_t best = (o * sp.len) * sp.inner + in;
      for (std::size_t l = 1; l < sp.len; ++l) {
        const std::size_t i = (o * sp.len + l) * sp.inner + in;
        if (a.values()[i] > a.values()[best]) best = i;
      }
      v[o * sp.inner + in] = a.values()[best];
      arg[o * sp.inner + in] = best;
    }
  return Tensor::from_op("reduce_max", drop_axis(a.shape(), axis), std::move(v), {a},
                         [arg = std::move(arg)](detail::Node& o) {
                           auto& g = detail::in(o, 0)->ensure_grad();
                           for (std::size_t i = 0; i < arg.size(); ++i) g[arg[i]] += o.grad[i];
                         });
}

inline std::size_t pooled_length(std::size_t n, std::size_t width, std::size_t stride) {
  if (n <= width) return 1;
  return (n - width + stride - 1) / stride + 1;
}

/// Max pooling over rows of an [n x d] sequence. Trailing partial windows
/// are kept (ceil mode), so n rows become ceil(n/2) for width = stride = 2.
inline Tensor max_pool_rows(const Tensor& x, std::size_t width, std::size_t stride) {
  detail::require_rank("max_pool_rows", x, 2);
  if (width == 0 || stride == 0) throw ShapeError("max_pool_rows: width and stride must be positive");
  const std::size_t n = x.dim(0), d = x.dim(1);
  const std::size_t out_n = pooled_length(n, width, stride);
  std::vector<double> v(out_n * d);
  std::vector<std::size_t> arg(out_n * d);
  for (std::size_t t = 0; t < out_n; ++t) {
    const std::size_t lo = t * stride, hi = std::min(n, lo + width);
    for (std::size_t j = 0; j < d; ++j) {
      std::size_t best = lo * d + j;
      for (std::size_t r = lo + 1; r < hi; ++r)
        if (x.values()[r * d + j] > x.values()[best]) best = r * d + j;
      v[t * d + j] = x.values()[best];
      arg[t * d + j] = best;
    }
  }
  return Tensor::from_op("max_pool_rows", {out_n, d}, std::move(v), {x}, [arg = std::move(arg)](detail::Node& o) {
    auto& g = detail::in(o, 0)->ensure_grad();
    for (std::size_t i = 0; i < arg.size(); ++i) g[arg[i]] += o.grad[i];
  });
}

/// Normalizes each row of x[n x m], then applies gain and bias of length m.
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5) {
  detail::require_rank("layer_norm", x, 2);
  const std::size_t n = x.dim(0), m = x.dim(1);
  if (gain.numel() != m || bias.numel() != m) {
    throw ShapeError("layer_norm: gain/bias must have " + std::to_string(m) + " elements");
  }
  std::vector<double> v(n * m), xhat(n * m), inv_std(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* r = x.values().data() + i * m;
    double mu = 0.0;
    for (std::size_t j = 0; j < m; ++j) mu += r[j];
    mu /= static_cast<double>(m);
    double var = 0.0;
    for (std::size_t j = 0; j < m; ++j) var += (r[j] - mu) * (r[j] - mu);
    var /= static_cast<double>(m);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < m; ++j) {
      xhat[i * m + j] = (r[j] - mu) * inv_std[i];
      v[i * m + j] = gain.values()[j] * xhat[i * m + j] + bias.values()[j];
    }
  }
  return Tensor::from_op(
      "layer_norm", x.shape(), std::move(v), {x, gain, bias},
      [n, m, xhat = std::move(xhat), inv_std = std::move(inv_std)](detail::Node& o) {
        auto* nx = detail::in(o, 0);
        auto* ng = detail::in(o, 1);
        auto* nb = detail::in(o, 2);
        if (ng->requires_grad) {
          auto& g = ng->ensure_grad();
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) g[j] += o.grad[i * m + j] * xhat[i * m + j];
        }
        if (nb->requires_grad) {
          auto& g = nb->ensure_grad();
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) g[j] += o.grad[i * m + j];
        }
        if (nx->requires_grad) {
          auto& g = nx->ensure_grad();
          const double fm = static_cast<double>(m);
          for (std::size_t i = 0; i < n; ++i) {
            double mean_d = 0.0, mean_dx = 0.0;
            for (std::size_t j = 0; j < m; ++j) {
              const double dxh = o.grad[i * m + j] * ng->value[j];
              mean_d += dxh;
              mean_dx += dxh * xhat[i * m + j];
            }
            mean_d /= fm;
            mean_dx /= fm;
            for (std::size_t j = 0; j < m; ++j) {
              const double dxh = o.grad[i * m + j] * ng->value[j];
              g[i * m + j] += inv_std[i] * (dxh - mean_d - xhat[i * m + j] * mean_dx);
            }
          }
        }
      });
}

/// Inverted dropout; identity when p == 0.
inline Tensor dropout(const Tensor& x, double p, Rng& rng) {
  if (p <= 0.0) return x;
  if (p >= 1.0) throw DomainError("dropout: p must be < 1");
  std::vector<double> mask(x.numel());
  for (auto& m : mask) m = rng.uniform() < p ? 0.0 : 1.0 / (1.0 - p);
  std::vector<double> v(x.values());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] *= mask[i];
  return Tensor::from_op("dropout", x.shape(), std::move(v), {x}, [mask = std::move(mask)](detail::Node& o) {
    auto& g = detail::in(o, 0)->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * mask[i];
  });
}

/// Same value, cut from the graph.
inline Tensor detach(const Tensor& x) { return Tensor(x.shape(), x.values(), false); }

inline Tensor mean(const Tensor& a) { return scale(reduce_sum(a), 1.0 / static_cast<double>(a.numel())); }

}  // namespace mmslr
