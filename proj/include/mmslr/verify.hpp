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

// Self-checks shipped with the library: a finite-difference sweep over every
// differentiable composite, and an exhaustive comparison of the CTC
// recursion against explicit path enumeration.

#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "mmslr/fusion.hpp"
#include "mmslr/gradcheck.hpp"
#include "mmslr/losses.hpp"
#include "mmslr/seqnet.hpp"

namespace mmslr {

// ---------------------------------------------------------------------------
// CTC by enumeration

/// -log of the summed probability of every length-T path (over C classes,
/// blank 0) that collapses to `target`. Cost C^T; meant for T <= 8.
inline double ctc_bruteforce_nll(const std::vector<double>& logits, std::size_t T, std::size_t C,
                                 const std::vector<std::size_t>& target) {
  std::vector<double> lp(T * C);
  for (std::size_t t = 0; t < T; ++t) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < C; ++c) mx = std::max(mx, logits[t * C + c]);
    double z = 0;
    for (std::size_t c = 0; c < C; ++c) z += std::exp(logits[t * C + c] - mx);
    for (std::size_t c = 0; c < C; ++c) lp[t * C + c] = logits[t * C + c] - mx - std::log(z);
  }
  std::vector<std::size_t> path(T, 0);
  double acc = -std::numeric_limits<double>::infinity();
  while (true) {
    std::vector<std::size_t> collapsed;
    std::size_t prev = kBlank;
    for (auto c : path) {
      if (c != kBlank && c != prev) collapsed.push_back(c);
      prev = c;
    }
    if (collapsed == target) {
      double s = 0;
      for (std::size_t t = 0; t < T; ++t) s += lp[t * C + path[t]];
      acc = log_add(acc, s);
    }
    std::size_t k = 0;
    while (k < T && ++path[k] == C) path[k++] = 0;
    if (k == T) break;
  }
  return -acc;
}

struct CtcOracleReport {
  std::size_t cases = 0;
  std::size_t failures = 0;
  double max_abs_diff = 0.0;
};

/// Every T <= max_T, gloss vocabulary <= max_vocab, |target| <= max_len
/// feasible combination, with random logits per case.
inline CtcOracleReport ctc_oracle_sweep(std::size_t max_T = 6, std::size_t max_vocab = 3, std::size_t max_len = 3,
                                        double tol = 1e-9, std::uint64_t seed = 7) {
  CtcOracleReport rep;
  Rng rng(seed);
  for (std::size_t V = 1; V <= max_vocab; ++V) {
    const std::size_t C = V + 1;
    for (std::size_t T = 1; T <= max_T; ++T)
      for (std::size_t L = 0; L <= max_len; ++L) {
        std::vector<std::size_t> target(L, 1);
        while (true) {
          if (ctc_feasible(target, T)) {
            std::vector<double> logits(T * C);
            for (auto& v : logits) v = rng.uniform(-3.0, 3.0);
            const double dp = ctc_neg_log_likelihood(log_softmax(Tensor({T, C}, logits), 1), target).item();
            const double bf = ctc_bruteforce_nll(logits, T, C, target);
            const double diff = std::abs(dp - bf);
            rep.max_abs_diff = std::max(rep.max_abs_diff, diff);
            ++rep.cases;
            if (!(diff <= tol)) ++rep.failures;
          }
          std::size_t k = 0;
          while (k < L && ++target[k] == C) target[k++] = 1;
          if (k == L) break;
        }
      }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Gradient checks over composites

struct GradCheckResult {
  std::string name;
  double max_error = 0.0;
  std::size_t seeds = 0;
  bool passed = false;
};

namespace detail {

inline Tensor random_tensor(Shape s, Rng& rng, double scale = 1.0) {
  std::vector<double> v(shape_numel(s));
  for (auto& e : v) e = scale * rng.uniform(-1.0, 1.0);
  return Tensor(std::move(s), std::move(v), true);
}

inline std::vector<Tensor> tensors_of(const ParameterSet& ps) {
  std::vector<Tensor> out;
  for (const auto& p : ps.items()) out.push_back(p.tensor);
  return out;
}

/// Weighted sum with fixed random weights, so every output element gets a
/// distinct adjoint.
inline Tensor probe(const Tensor& y, std::uint64_t seed) {
  Rng r(seed);
  std::vector<double> w(y.numel());
  for (auto& e : w) e = r.uniform(-1.0, 1.0);
  return reduce_sum(mul(y, Tensor(y.shape(), std::move(w))));
}

}  // namespace detail

/// Runs each composite on `seeds` random draws; passes when the worst
/// relative error is <= tol.
inline std::vector<GradCheckResult> gradcheck_suite(std::size_t seeds = 10, double tol = 1e-4, double h = 1e-5) {
  using F = std::function<double(std::uint64_t)>;
  std::vector<std::pair<std::string, F>> cases;

  cases.emplace_back("primitives", [h](std::uint64_t s) {
    Rng rng(s);
    Tensor a = detail::random_tensor({3, 4}, rng), b = detail::random_tensor({4, 2}, rng);
    Tensor c = detail::random_tensor({3, 2}, rng), bias = detail::random_tensor({2}, rng);
    Tensor sc = detail::random_tensor({1}, rng);
    Tensor pos = Tensor({3, 2}, {0.5, 1.5, 2.0, 0.7, 1.1, 0.9}, true);
    auto f = [&] {
      Tensor m = add_bias(matmul(a, b), bias);
      Tensor x = add(sub(mul(m, c), scale(c, 0.3)), mul_scalar(sc, m));
      Tensor y = concat({tanh(x), sigmoid(x), exp(scale(x, 0.2)), log(pos)}, 1);
      Tensor z = add(softmax(y, 1), transpose(log_softmax(transpose(y), 0)));
      Tensor w = slice(z, 1, 1, 7);
      return add(detail::probe(w, 1), add(reduce_sum(reduce_max(w, 1)), reduce_sum(reduce_sum(w, 0))));
    };
    return grad_check(f, {a, b, c, bias, sc, pos}, h);
  });

  cases.emplace_back("cross_modal_fusion", [h](std::uint64_t s) {
    Rng rng(s);
    const std::size_t n = 3, d = 4;
    Tensor r = detail::random_tensor({n, d}, rng), f = detail::random_tensor({n, d}, rng);
    FusionParams p = FusionParams::init(d, rng);
    auto fn = [&] {
      return detail::probe(fuse_cma(FeatureSequence(Modality::rgb, r), FeatureSequence(Modality::flow, f), p).frames, s);
    };
    auto wrt = detail::tensors_of(p.parameters());
    wrt.push_back(r);
    wrt.push_back(f);
    return grad_check(fn, wrt, h);
  });

  cases.emplace_back("temporal_reduction", [h](std::uint64_t s) {
    Rng rng(s);
    const std::size_t n = 9, d = 3;
    Tensor x = detail::random_tensor({n, d}, rng);
    TemporalReducer p = TemporalReducer::init(d, rng);
    auto fn = [&] { return detail::probe(temporal_reduce(FeatureSequence(Modality::rgb, x), p).frames(), s); };
    auto wrt = detail::tensors_of(p.parameters());
    wrt.push_back(x);
    return grad_check(fn, wrt, h);
  });

  cases.emplace_back("bilstm", [h](std::uint64_t s) {
    Rng rng(s);
    Tensor x = detail::random_tensor({3, 4}, rng);
    BiLstmParams p = BiLstmParams::init(4, rng);
    auto fn = [&] { return detail::probe(bilstm_forward(FeatureSequence(Modality::rgb, x), p).frames(), s); };
    auto wrt = detail::tensors_of(p.parameters());
    wrt.push_back(x);
    return grad_check(fn, wrt, h);
  });

  cases.emplace_back("classifier", [h](std::uint64_t s) {
    Rng rng(s);
    Tensor x = detail::random_tensor({3, 4}, rng);
    ClassifierHead head = ClassifierHead::init(4, 5, rng);
    auto fn = [&] { return detail::probe(classify(FeatureSequence(Modality::rgb, x), head, Branch::fused).scores, s); };
    auto wrt = detail::tensors_of(head.parameters());
    wrt.push_back(x);
    return grad_check(fn, wrt, h);
  });

  cases.emplace_back("ctc", [h](std::uint64_t s) {
    Rng rng(s);
    Tensor logits = detail::random_tensor({6, 4}, rng, 2.0);
    std::vector<std::size_t> target{1, 2, 2};
    return grad_check([&] { return ctc_loss({logits, Branch::fused}, target); }, {logits}, h);
  });

  cases.emplace_back("kl_distill", [h](std::uint64_t s) {
    Rng rng(s);
    Tensor a = detail::random_tensor({4, 5}, rng, 2.0), b = detail::random_tensor({4, 5}, rng, 2.0);
    return grad_check([&] { return kl_distill({a, Branch::rgb}, {b, Branch::fused}); }, {a}, h);
  });

  cases.emplace_back("cross_entropy", [h](std::uint64_t s) {
    Rng rng(s);
    Tensor logits = detail::random_tensor({4, 5}, rng, 2.0);
    std::vector<std::size_t> gt{3, 1, 4, kPad};
    return grad_check([&] { return cross_entropy(logits, gt, 0.1); }, {logits}, h);
  });

  cases.emplace_back("layer_norm", [h](std::uint64_t s) {
    Rng rng(s);
    Tensor x = detail::random_tensor({3, 5}, rng), g = detail::random_tensor({5}, rng), b = detail::random_tensor({5}, rng);
    return grad_check([&] { return detail::probe(layer_norm(x, g, b), s); }, {x, g, b}, h);
  });

  cases.emplace_back("transformer_layer", [h](std::uint64_t s) {
    Rng rng(s);
    TransformerConfig c;
    c.input_dim = 3;
    c.model_dim = 4;
    c.heads = 2;
    c.ff_dim = 6;
    c.encoder_layers = 1;
    c.decoder_layers = 1;
    c.vocab = 6;
    c.dropout = 0.0;
    TransformerStack st = TransformerStack::init(c, rng);
    Tensor src = detail::random_tensor({3, 3}, rng);
    std::vector<std::size_t> prefix{kBos, 4, 5};
    auto fn = [&] { return detail::probe(transformer_translate({src, FusionKind::cma}, prefix, st), s); };
    auto wrt = detail::tensors_of(st.parameters());
    wrt.push_back(src);
    return grad_check(fn, wrt, h);
  });

  std::vector<GradCheckResult> out;
  for (const auto& [name, fn] : cases) {
    GradCheckResult r{name, 0.0, seeds, false};
    for (std::size_t k = 0; k < seeds; ++k) r.max_error = std::max(r.max_error, fn(1000 + 17 * k));
    r.passed = r.max_error <= tol;
    out.push_back(r);
  }
  return out;
}

}  // namespace mmslr
