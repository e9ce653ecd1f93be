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
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "mmslr/ops.hpp"
#include "mmslr/types.hpp"

namespace mmslr {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  return a > b ? a + std::log1p(std::exp(b - a)) : b + std::log1p(std::exp(a - b));
}

/// Minimum number of frames CTC needs to emit `target`: one per label plus a
/// separating blank between equal neighbours.
inline std::size_t ctc_min_frames(std::span<const std::size_t> target) {
  std::size_t n = target.size();
  for (std::size_t i = 1; i < target.size(); ++i)
    if (target[i] == target[i - 1]) ++n;
  return n;
}

inline bool ctc_feasible(std::span<const std::size_t> target, std::size_t frames) {
  return ctc_min_frames(target) <= frames;
}

/// -log P(target | log_probs) by the log-space forward recursion over the
/// blank-augmented label sequence. The adjoint uses the matching backward
/// recursion. An empty target scores the all-blank path.
inline Tensor ctc_neg_log_likelihood(const Tensor& log_probs, std::span<const std::size_t> target) {
  if (log_probs.rank() != 2) throw ShapeError("ctc: log_probs must be T x C, got " + shape_str(log_probs.shape()));
  const std::size_t T = log_probs.dim(0), C = log_probs.dim(1);
  for (auto id : target) {
    if (id == kBlank || id >= C) {
      throw DomainError("ctc: target id " + std::to_string(id) + " outside [1, " + std::to_string(C) + ")");
    }
  }
  if (!ctc_feasible(target, T)) {
    throw DomainError("ctc: target needs " + std::to_string(ctc_min_frames(target)) + " frames, only " +
                      std::to_string(T) + " available");
  }
  const std::size_t S = 2 * target.size() + 1;
  std::vector<std::size_t> ext(S, kBlank);
  for (std::size_t i = 0; i < target.size(); ++i) ext[2 * i + 1] = target[i];
  const auto& lp = log_probs.values();
  auto emit = [&](std::size_t t, std::size_t s) { return lp[t * C + ext[s]]; };
  auto can_skip = [&](std::size_t s) { return s >= 2 && ext[s] != kBlank && ext[s] != ext[s - 2]; };

  std::vector<double> alpha(T * S, kNegInf);
  alpha[0] = emit(0, 0);
  if (S > 1) alpha[1] = emit(0, 1);
  for (std::size_t t = 1; t < T; ++t)
    for (std::size_t s = 0; s < S; ++s) {
      double a = alpha[(t - 1) * S + s];
      if (s >= 1) a = log_add(a, alpha[(t - 1) * S + s - 1]);
      if (can_skip(s)) a = log_add(a, alpha[(t - 1) * S + s - 2]);
      if (a != kNegInf) alpha[t * S + s] = a + emit(t, s);
    }
  double log_p = alpha[(T - 1) * S + S - 1];
  if (S > 1) log_p = log_add(log_p, alpha[(T - 1) * S + S - 2]);

  std::vector<std::size_t> ext_copy = ext;
  auto bw = [T, C, S, ext = std::move(ext_copy), alpha = std::move(alpha), log_p](detail::Node& o) {
    auto* in = detail::in(o, 0);
    const auto& lp = in->value;
    auto emit = [&](std::size_t t, std::size_t s) { return lp[t * C + ext[s]]; };
    auto can_skip = [&](std::size_t s) { return s >= 2 && ext[s] != kBlank && ext[s] != ext[s - 2]; };
    std::vector<double> beta(T * S, kNegInf);
    beta[(T - 1) * S + S - 1] = emit(T - 1, S - 1);
    if (S > 1) beta[(T - 1) * S + S - 2] = emit(T - 1, S - 2);
    for (std::size_t t = T - 1; t-- > 0;)
      for (std::size_t s = 0; s < S; ++s) {
        double b = beta[(t + 1) * S + s];
        if (s + 1 < S) b = log_add(b, beta[(t + 1) * S + s + 1]);
        if (s + 2 < S && can_skip(s + 2)) b = log_add(b, beta[(t + 1) * S + s + 2]);
        if (b != kNegInf) beta[t * S + s] = b + emit(t, s);
      }
    auto& g = in->ensure_grad();
    const double up = o.grad[0];
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t s = 0; s < S; ++s) {
        const double ab = alpha[t * S + s] + beta[t * S + s];
        if (ab == kNegInf) continue;
        g[t * C + ext[s]] -= up * std::exp(ab - emit(t, s) - log_p);
      }
  };
  return Tensor::from_op("ctc", {1}, {-log_p}, {log_probs}, std::move(bw));
}

inline Tensor ctc_loss(const GlossLogits& logits, std::span<const std::size_t> target) {
  return ctc_neg_log_likelihood(log_softmax(logits.scores, 1), target);
}

/// Mean over timesteps of KL(softmax(student_t) || softmax(teacher_t)). The
/// teacher is detached: no gradient reaches it.
inline Tensor kl_distill(const GlossLogits& student, const GlossLogits& teacher) {
  if (student.scores.shape() != teacher.scores.shape()) {
    throw ShapeError("kl_distill: student " + shape_str(student.scores.shape()) + " vs teacher " +
                     shape_str(teacher.scores.shape()));
  }
  Tensor logp = log_softmax(student.scores, 1);
  Tensor logq = log_softmax(detach(teacher.scores), 1);
  Tensor kl = reduce_sum(mul(exp(logp), sub(logp, logq)));
  return scale(kl, 1.0 / static_cast<double>(student.steps()));
}

struct LossBreakdown {
  double l_ctc = 0, l1 = 0, l2 = 0, l3 = 0, l4 = 0;
  double alpha = 1, beta = 1;
  double total = 0;
};

/// Combined recognition loss: l_ctc + l1 + l2 + alpha*l3 + beta*l4, summed in
/// that order (the training graph uses the same order).
inline LossBreakdown slr_total(double l_ctc, double l1, double l2, double l3, double l4, double alpha, double beta) {
  LossBreakdown b{l_ctc, l1, l2, l3, l4, alpha, beta, 0.0};
  b.total = l_ctc + l1 + l2 + alpha * l3 + beta * l4;
  return b;
}

/// Sum of per-position token losses over non-pad positions, and the number
/// of such positions. Label smoothing spreads `smoothing` mass uniformly.
struct TokenLoss {
  Tensor sum;
  std::size_t count = 0;
};

inline TokenLoss cross_entropy_sum(const Tensor& logits, std::span<const std::size_t> gt, double smoothing = 0.0,
                                   std::size_t pad_id = kPad) {
  if (logits.rank() != 2 || logits.dim(0) != gt.size()) {
    throw ShapeError("cross_entropy: logits " + shape_str(logits.shape()) + " vs " + std::to_string(gt.size()) +
                     " target positions");
  }
  std::vector<std::size_t> rows, ids;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i] == pad_id) continue;
    rows.push_back(i);
    ids.push_back(gt[i]);
  }
  if (rows.empty()) throw DomainError("cross_entropy: every target position is padding");
  Tensor lp = gather_rows(log_softmax(logits, 1), rows);
  Tensor nll = scale(reduce_sum(pick(lp, ids)), -1.0);
  if (smoothing > 0.0) {
    const double v = static_cast<double>(logits.dim(1));
    Tensor uniform = scale(reduce_sum(lp), -1.0 / v);
    nll = add(scale(nll, 1.0 - smoothing), scale(uniform, smoothing));
  }
  return {nll, rows.size()};
}

/// Mean token loss over non-pad positions.
inline Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> gt, double smoothing = 0.0,
                            std::size_t pad_id = kPad) {
  auto r = cross_entropy_sum(logits, gt, smoothing, pad_id);
  return scale(r.sum, 1.0 / static_cast<double>(r.count));
}

}  // namespace mmslr
