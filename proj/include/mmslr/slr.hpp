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

// Continuous recognition: per-modality temporal reduction, fusion, BiLSTM,
// three classifier heads and the combined CTC + distillation objective.
//
//   r_red = reduce_r(r)          f_red = reduce_f(f)
//   mm    = fuse(r_red, f_red)
//   gloss      = cls_final(BiLSTM(mm))
//   gloss_rgb  = cls_rgb(r_red)  gloss_flow = cls_flow(f_red)
//   L = CTC(gloss) + CTC(gloss_rgb) + CTC(gloss_flow)
//       + alpha * KL(gloss_rgb, gloss) + beta * KL(gloss_flow, gloss)

#pragma once

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "mmslr/config.hpp"
#include "mmslr/data.hpp"
#include "mmslr/fusion.hpp"
#include "mmslr/losses.hpp"
#include "mmslr/metrics.hpp"
#include "mmslr/optim.hpp"
#include "mmslr/seqnet.hpp"

namespace mmslr {

struct SlrModel {
  FusionMode mode = FusionMode::cma;
  std::size_t dim = 0;
  std::size_t classes = 0;  // gloss vocabulary + blank
  std::optional<TemporalReducer> reduce_r, reduce_f;
  std::optional<FusionParams> fusion;
  std::optional<BiLstmParams> bilstm;
  std::optional<ClassifierHead> cls_final, cls_rgb, cls_flow;
  ParameterSet params;

  bool uses_rgb() const { return mode != FusionMode::flow_only; }
  bool uses_flow() const { return mode != FusionMode::rgb_only; }

  /// Each component draws from its own named seed stream, so components
  /// shared between fusion modes start identical for a given seed.
  static SlrModel init(std::size_t dim, std::size_t classes, FusionMode mode, std::uint64_t seed) {
    if (dim == 0 || classes < 2) throw DomainError("SlrModel: need dim > 0 and at least one gloss class");
    SlrModel m;
    m.mode = mode;
    m.dim = dim;
    m.classes = classes;
    auto stream = [&](const char* name) { return Rng(derive_seed(seed, name)); };
    if (m.uses_rgb()) {
      auto r = stream("reduce_r");
      m.reduce_r = TemporalReducer::init(dim, r);
      auto c = stream("cls_rgb");
      m.cls_rgb = ClassifierHead::init(dim, classes, c);
    }
    if (m.uses_flow()) {
      auto r = stream("reduce_f");
      m.reduce_f = TemporalReducer::init(dim, r);
      auto c = stream("cls_flow");
      m.cls_flow = ClassifierHead::init(dim, classes, c);
    }
    if (mode == FusionMode::cma) {
      auto r = stream("fusion");
      m.fusion = FusionParams::init(dim, r);
    }
    if (mode != FusionMode::ensemble) {
      auto r = stream("bilstm");
      m.bilstm = BiLstmParams::init(dim, r);
      auto c = stream("cls_final");
      m.cls_final = ClassifierHead::init(dim, classes, c);
    }
    m.rebuild_parameters();
    return m;
  }

  void rebuild_parameters() {
    params = ParameterSet();
    if (reduce_r) params.append(reduce_r->parameters(), "reduce_r.");
    if (reduce_f) params.append(reduce_f->parameters(), "reduce_f.");
    if (fusion) params.append(fusion->parameters(), "fusion.");
    if (bilstm) params.append(bilstm->parameters(), "bilstm.");
    if (cls_final) params.append(cls_final->parameters(), "cls_final.");
    if (cls_rgb) params.append(cls_rgb->parameters(), "cls_rgb.");
    if (cls_flow) params.append(cls_flow->parameters(), "cls_flow.");
  }

  void apply_config(const TrainConfig& c) {
    if (fusion) fusion->set_weights(c.fusion_init);
    params.set_trainable("reduce_f.", !c.freeze_flow_reduce);
    if (c.freeze_fusion_weights) {
      params.set_trainable("fusion.w1", false);
      params.set_trainable("fusion.w2", false);
      params.set_trainable("fusion.w3", false);
    }
  }
};

struct SlrOutputs {
  GlossLogits gloss;
  std::optional<GlossLogits> gloss_rgb, gloss_flow;
  std::optional<FusedSequence> fused;  // absent for ensemble mode
};

inline SlrOutputs slr_forward(const SlrModel& model, const FeatureSequence& rgb, const FeatureSequence& flow) {
  require_paired("slr_forward", rgb, flow);
  if (rgb.n() < 4) throw DomainError("slr_forward: need at least 4 frames, got " + std::to_string(rgb.n()));
  if (rgb.d() != model.dim) {
    throw ShapeError("slr_forward: model built for d=" + std::to_string(model.dim) + ", features have d=" +
                     std::to_string(rgb.d()));
  }
  SlrOutputs out;
  std::optional<FeatureSequence> r_red, f_red;
  if (model.uses_rgb()) {
    r_red = temporal_reduce(rgb, *model.reduce_r);
    out.gloss_rgb = classify(*r_red, *model.cls_rgb, Branch::rgb);
  }
  if (model.uses_flow()) {
    f_red = temporal_reduce(flow, *model.reduce_f);
    out.gloss_flow = classify(*f_red, *model.cls_flow, Branch::flow);
  }
  switch (model.mode) {
    case FusionMode::cma: out.fused = fuse_cma(*r_red, *f_red, *model.fusion); break;
    case FusionMode::sum: out.fused = fuse_sum(*r_red, *f_red); break;
    case FusionMode::rgb_only: out.fused = FusedSequence{r_red->frames(), FusionKind::rgb_only}; break;
    case FusionMode::flow_only: out.fused = FusedSequence{f_red->frames(), FusionKind::flow_only}; break;
    case FusionMode::ensemble: break;
  }
  if (out.fused) {
    FeatureSequence global = bilstm_forward(FeatureSequence(Modality::rgb, out.fused->frames), *model.bilstm);
    out.gloss = classify(global, *model.cls_final, Branch::fused);
  } else {
    out.gloss = fuse_ensemble(*out.gloss_rgb, *out.gloss_flow);
  }
  return out;
}

/// Per-sample loss parts as graph tensors (zero constants where a term does
/// not apply to the fusion mode).
struct SlrLossTerms {
  Tensor l_ctc, l1, l2, l3, l4;
};

inline SlrLossTerms slr_loss_terms(const SlrOutputs& out, const std::vector<std::size_t>& target,
                                   const TrainConfig& config, FusionMode mode) {
  SlrLossTerms t;
  const Tensor zero = Tensor::scalar(0.0);
  t.l_ctc = mode == FusionMode::ensemble ? zero : ctc_loss(out.gloss, target);
  t.l1 = out.gloss_rgb ? ctc_loss(*out.gloss_rgb, target) : zero;
  t.l2 = out.gloss_flow ? ctc_loss(*out.gloss_flow, target) : zero;
  auto kl = [&](const std::optional<GlossLogits>& branch) {
    if (!branch || mode == FusionMode::ensemble) return zero;
    return config.kl_teacher == KlTeacher::fused ? kl_distill(*branch, out.gloss) : kl_distill(out.gloss, *branch);
  };
  t.l3 = kl(out.gloss_rgb);
  t.l4 = kl(out.gloss_flow);
  return t;
}

struct StepResult {
  LossBreakdown loss;
  std::size_t used = 0;
  std::size_t skipped = 0;  // infeasible samples
  double grad_norm = 0.0;
};

/// Builds the batch-mean objective; parts are averaged first and then
/// combined, so slr_total over the returned parts reproduces `total`.
inline std::pair<Tensor, StepResult> slr_batch_objective(const SlrModel& model, const std::vector<const Sample*>& batch,
                                                         const TrainConfig& config) {
  StepResult res;
  std::vector<SlrLossTerms> terms;
  for (const Sample* s : batch) {
    if (s->gloss.empty() || !ctc_feasible(s->gloss, reduced_length(s->rgb.n()))) {
      ++res.skipped;
      continue;
    }
    terms.push_back(slr_loss_terms(slr_forward(model, s->rgb, s->flow), s->gloss, config, model.mode));
  }
  res.used = terms.size();
  if (terms.empty()) return {Tensor(), res};
  const double inv = 1.0 / static_cast<double>(terms.size());
  auto batch_mean = [&](Tensor SlrLossTerms::*part) {
    Tensor acc = terms.front().*part;
    for (std::size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i].*part);
    return scale(acc, inv);
  };
  Tensor l_ctc = batch_mean(&SlrLossTerms::l_ctc);
  Tensor l1 = batch_mean(&SlrLossTerms::l1);
  Tensor l2 = batch_mean(&SlrLossTerms::l2);
  Tensor l3 = batch_mean(&SlrLossTerms::l3);
  Tensor l4 = batch_mean(&SlrLossTerms::l4);
  Tensor total = add(add(add(add(l_ctc, l1), l2), scale(l3, config.alpha)), scale(l4, config.beta));
  res.loss = slr_total(l_ctc.item(), l1.item(), l2.item(), l3.item(), l4.item(), config.alpha, config.beta);
  return {total, res};
}

/// One optimizer update; returns the pre-update loss breakdown.
inline StepResult slr_train_step(SlrModel& model, Adam& optimizer, const std::vector<const Sample*>& batch,
                                 const TrainConfig& config) {
  auto [total, res] = slr_batch_objective(model, batch, config);
  if (res.used == 0) return res;
  model.params.zero_grad();
  backward(total);
  res.grad_norm = clip_grad_norm(model.params, config.clip_norm);
  optimizer.step();
  return res;
}

struct SlrEvalReport {
  MetricReport fused;
  std::optional<double> rgb_wer, flow_wer;
};

inline SlrEvalReport slr_evaluate(const SlrModel& model, const std::vector<Sample>& samples) {
  if (samples.empty()) throw DomainError("slr_evaluate: no samples");
  SlrEvalReport rep;
  EditCounts fused, rgb, flow;
  for (const auto& s : samples) {
    SlrOutputs out = slr_forward(model, s.rgb, s.flow);
    auto hyp = greedy_ctc_decode(out.gloss);
    auto c = edit_counts(hyp, s.gloss);
    if (c.errors() == 0) ++rep.fused.exact_matches;
    fused += c;
    if (out.gloss_rgb) rgb += edit_counts(greedy_ctc_decode(*out.gloss_rgb), s.gloss);
    if (out.gloss_flow) flow += edit_counts(greedy_ctc_decode(*out.gloss_flow), s.gloss);
  }
  rep.fused.counts = fused;
  rep.fused.wer = wer_from_counts(fused).wer;
  rep.fused.sentences = samples.size();
  if (model.uses_rgb()) rep.rgb_wer = wer_from_counts(rgb).wer;
  if (model.uses_flow()) rep.flow_wer = wer_from_counts(flow).wer;
  return rep;
}

/// Mean kl_distill(branch, fused) over samples, per branch.
inline std::pair<double, double> mean_branch_kl(const SlrModel& model, const std::vector<Sample>& samples) {
  double kr = 0, kf = 0;
  for (const auto& s : samples) {
    SlrOutputs out = slr_forward(model, s.rgb, s.flow);
    if (out.gloss_rgb) kr += kl_distill(*out.gloss_rgb, out.gloss).item();
    if (out.gloss_flow) kf += kl_distill(*out.gloss_flow, out.gloss).item();
  }
  const double n = static_cast<double>(samples.size());
  return {kr / n, kf / n};
}

struct EpochRecord {
  std::size_t epoch = 0;
  LossBreakdown loss;  // mean over the epoch's steps
  std::size_t skipped = 0;
  std::optional<double> train_wer;
  std::optional<double> dev_wer;
  std::optional<double> dev_bleu4;
};

inline std::vector<std::vector<const Sample*>> make_batches(const std::vector<Sample>& samples, std::size_t batch_size,
                                                            Rng& rng) {
  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  std::vector<std::vector<const Sample*>> out;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    std::vector<const Sample*> b;
    for (std::size_t j = i; j < std::min(order.size(), i + batch_size); ++j) b.push_back(&samples[order[j]]);
    out.push_back(std::move(b));
  }
  return out;
}

struct SlrTrainResult {
  std::vector<EpochRecord> epochs;
  std::optional<std::size_t> zero_wer_epoch;  // first epoch with 0% train WER
  std::size_t skipped_total = 0;
};

/// Trains `model` in place. Train WER is measured after every epoch; dev WER
/// too when `dev` is non-empty.
inline SlrTrainResult train_slr(SlrModel& model, const std::vector<Sample>& train, const std::vector<Sample>& dev,
                                const TrainConfig& config, bool track_train_wer = true) {
  config.validate();
  if (train.empty()) throw DomainError("train_slr: empty training split");
  Adam opt(model.params, {config.lr, config.adam_beta1, config.adam_beta2, config.adam_eps});
  Rng rng(derive_seed(config.seed, "batches"));
  SlrTrainResult result;
  for (std::size_t e = 1; e <= config.epochs; ++e) {
    EpochRecord rec;
    rec.epoch = e;
    std::size_t steps = 0;
    LossBreakdown sum{0, 0, 0, 0, 0, config.alpha, config.beta, 0};
    for (const auto& batch : make_batches(train, config.batch_size, rng)) {
      StepResult r = slr_train_step(model, opt, batch, config);
      rec.skipped += r.skipped;
      if (r.used == 0) continue;
      ++steps;
      sum.l_ctc += r.loss.l_ctc;
      sum.l1 += r.loss.l1;
      sum.l2 += r.loss.l2;
      sum.l3 += r.loss.l3;
      sum.l4 += r.loss.l4;
      sum.total += r.loss.total;
    }
    if (steps > 0) {
      const double k = static_cast<double>(steps);
      rec.loss = slr_total(sum.l_ctc / k, sum.l1 / k, sum.l2 / k, sum.l3 / k, sum.l4 / k, config.alpha, config.beta);
    }
    if (rec.skipped > 0) {
      std::cerr << "warning: epoch " << e << " skipped " << rec.skipped << " infeasible sample(s)\n";
    }
    result.skipped_total += rec.skipped;
    if (track_train_wer) rec.train_wer = slr_evaluate(model, train).fused.wer;
    if (!dev.empty()) rec.dev_wer = slr_evaluate(model, dev).fused.wer;
    const bool zero = rec.train_wer && *rec.train_wer == 0.0;
    if (zero && !result.zero_wer_epoch) result.zero_wer_epoch = e;
    result.epochs.push_back(rec);
    if (zero && config.stop_at_zero_train_wer) break;
  }
  return result;
}

}  // namespace mmslr
