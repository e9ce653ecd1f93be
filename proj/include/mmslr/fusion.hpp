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

// Cross-modal attention fusion of RGB and optical-flow feature streams, and
// the two baselines it is measured against (feature summation and logit
// ensembling).
//
// Frames are rows. For a direction where modality A queries modality B:
//
//   Q = A W_Q,  K = B W_K,  V = B W_V            (n x d each)
//   attn = softmax(Q K^T / sqrt(d_k), axis = 1)  (row i: query frame i)
//   out  = (attn V) W_out
//
// The fused stream keeps raw flow out of the sum:
//
//   mm = w1 * r + w2 * fr + w3 * rf
//
// where fr uses flow queries over RGB keys/values and rf the reverse.

#pragma once

#include <array>
#include <cmath>
#include <string>

#include "mmslr/ops.hpp"
#include "mmslr/optim.hpp"
#include "mmslr/random.hpp"
#include "mmslr/types.hpp"

namespace mmslr {

/// Projections for one attention direction.
struct AttentionDirection {
  Tensor query;     // applied to the query-side modality
  Tensor key;       // applied to the key/value-side modality
  Tensor value;
  Tensor out_proj;
};

struct FusionParams {
  AttentionDirection flow_to_rgb;  // produces fr
  AttentionDirection rgb_to_flow;  // produces rf
  Tensor w1, w2, w3;
  std::size_t d_k = 0;

  std::size_t dim() const { return d_k; }

  /// Xavier-uniform projections, mixing weights (1, 0.1, 0.1).
  static FusionParams init(std::size_t d, Rng& rng) {
    FusionParams p;
    p.d_k = d;
    for (auto* dir : {&p.flow_to_rgb, &p.rgb_to_flow}) {
      dir->query = xavier_uniform(d, d, rng);
      dir->key = xavier_uniform(d, d, rng);
      dir->value = xavier_uniform(d, d, rng);
      dir->out_proj = xavier_uniform(d, d, rng);
    }
    p.w1 = Tensor::scalar(1.0, true);
    p.w2 = Tensor::scalar(0.1, true);
    p.w3 = Tensor::scalar(0.1, true);
    return p;
  }

  /// All eight projections set to the identity.
  static FusionParams identity(std::size_t d, std::array<double, 3> w = {1.0, 0.1, 0.1}) {
    std::vector<double> eye(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i) eye[i * d + i] = 1.0;
    FusionParams p;
    p.d_k = d;
    for (auto* dir : {&p.flow_to_rgb, &p.rgb_to_flow}) {
      dir->query = Tensor({d, d}, eye, true);
      dir->key = Tensor({d, d}, eye, true);
      dir->value = Tensor({d, d}, eye, true);
      dir->out_proj = Tensor({d, d}, eye, true);
    }
    p.w1 = Tensor::scalar(w[0], true);
    p.w2 = Tensor::scalar(w[1], true);
    p.w3 = Tensor::scalar(w[2], true);
    return p;
  }

  void set_weights(std::array<double, 3> w) {
    w1.mutable_values()[0] = w[0];
    w2.mutable_values()[0] = w[1];
    w3.mutable_values()[0] = w[2];
  }

  ParameterSet parameters() const {
    ParameterSet ps;
    ps.add("W_fQ", flow_to_rgb.query);
    ps.add("W_rK", flow_to_rgb.key);
    ps.add("W_rV", flow_to_rgb.value);
    ps.add("out_proj_fr", flow_to_rgb.out_proj);
    ps.add("W_rQ", rgb_to_flow.query);
    ps.add("W_fK", rgb_to_flow.key);
    ps.add("W_fV", rgb_to_flow.value);
    ps.add("out_proj_rf", rgb_to_flow.out_proj);
    ps.add("w1", w1);
    ps.add("w2", w2);
    ps.add("w3", w3);
    return ps;
  }
};

struct CrossAttention {
  FeatureSequence output;
  Tensor attention;  // n_query x n_key, rows sum to 1
};

inline CrossAttention cross_attend_detailed(const FeatureSequence& query_src, const FeatureSequence& kv_src,
                                            const AttentionDirection& dir) {
  if (query_src.n() != kv_src.n() || query_src.d() != kv_src.d()) {
    throw ShapeError("cross_attend: query " + shape_str(query_src.frames().shape()) + " vs key/value " +
                     shape_str(kv_src.frames().shape()));
  }
  const std::size_t d = query_src.d();
  for (const Tensor* w : {&dir.query, &dir.key, &dir.value, &dir.out_proj}) {
    if (w->shape() != Shape{d, d}) {
      throw ShapeError("cross_attend: projection " + shape_str(w->shape()) + " is not " + std::to_string(d) +
                       "x" + std::to_string(d));
    }
  }
  Tensor q = matmul(query_src.frames(), dir.query);
  Tensor k = matmul(kv_src.frames(), dir.key);
  Tensor v = matmul(kv_src.frames(), dir.value);
  Tensor scores = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(d)));
  Tensor attn = softmax(scores, 1);
  Tensor out = matmul(matmul(attn, v), dir.out_proj);
  return {FeatureSequence(kv_src.modality(), out), attn};
}

inline FeatureSequence cross_attend(const FeatureSequence& query_src, const FeatureSequence& kv_src,
                                    const AttentionDirection& dir) {
  return cross_attend_detailed(query_src, kv_src, dir).output;
}

inline void require_paired(const char* op, const FeatureSequence& r, const FeatureSequence& f) {
  if (r.n() != f.n() || r.d() != f.d()) {
    throw ShapeError(std::string(op) + ": rgb " + shape_str(r.frames().shape()) + " and flow " +
                     shape_str(f.frames().shape()) + " are not paired");
  }
}

inline FusedSequence fuse_cma(const FeatureSequence& r, const FeatureSequence& f, const FusionParams& params) {
  require_paired("fuse_cma", r, f);
  if (params.d_k != r.d()) {
    throw ShapeError("fuse_cma: params built for d=" + std::to_string(params.d_k) + ", features have d=" +
                     std::to_string(r.d()));
  }
  FeatureSequence fr = cross_attend(f, r, params.flow_to_rgb);
  FeatureSequence rf = cross_attend(r, f, params.rgb_to_flow);
  Tensor mm = add(add(mul_scalar(params.w1, r.frames()), mul_scalar(params.w2, fr.frames())),
                  mul_scalar(params.w3, rf.frames()));
  return {mm, FusionKind::cma};
}

inline FusedSequence fuse_sum(const FeatureSequence& r, const FeatureSequence& f) {
  require_paired("fuse_sum", r, f);
  return {add(r.frames(), f.frames()), FusionKind::sum};
}

/// Logit-level ensembling: mean of the two branches' per-step log-probabilities.
inline GlossLogits fuse_ensemble(const GlossLogits& rgb, const GlossLogits& flow) {
  if (rgb.scores.shape() != flow.scores.shape()) {
    throw ShapeError("fuse_ensemble: branch logits " + shape_str(rgb.scores.shape()) + " vs " +
                     shape_str(flow.scores.shape()));
  }
  Tensor avg = scale(add(log_softmax(rgb.scores, 1), log_softmax(flow.scores, 1)), 0.5);
  return {avg, Branch::fused};
}

}  // namespace mmslr
