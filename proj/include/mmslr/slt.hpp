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

// Translation: pre-extracted features -> fusion -> transformer -> tokens.

#pragma once

#include <optional>
#include <vector>

#include "mmslr/config.hpp"
#include "mmslr/data.hpp"
#include "mmslr/fusion.hpp"
#include "mmslr/losses.hpp"
#include "mmslr/metrics.hpp"
#include "mmslr/optim.hpp"
#include "mmslr/seqnet.hpp"
#include "mmslr/slr.hpp"

namespace mmslr {

struct SltModel {
  FusionMode mode = FusionMode::cma;
  std::size_t dim = 0;
  std::optional<FusionParams> fusion;
  TransformerStack transformer;
  ParameterSet params;

  static TransformerConfig transformer_config(const TrainConfig& c, std::size_t dim, std::size_t vocab) {
    TransformerConfig t;
    t.input_dim = dim;
    t.model_dim = c.model_dim;
    t.heads = c.heads;
    t.ff_dim = c.ff_dim;
    t.encoder_layers = c.encoder_layers;
    t.decoder_layers = c.decoder_layers;
    t.vocab = vocab;
    t.dropout = c.dropout;
    return t;
  }

  static SltModel init(std::size_t dim, std::size_t vocab, const TrainConfig& c) {
    if (c.fusion == FusionMode::ensemble) throw DomainError("SltModel: ensemble fusion is not supported");
    SltModel m;
    m.mode = c.fusion;
    m.dim = dim;
    if (c.fusion == FusionMode::cma) {
      Rng r(derive_seed(c.seed, "fusion"));
      m.fusion = FusionParams::init(dim, r);
    }
    Rng r(derive_seed(c.seed, "transformer"));
    m.transformer = TransformerStack::init(transformer_config(c, dim, vocab), r);
    m.rebuild_parameters();
    return m;
  }

  void rebuild_parameters() {
    params = ParameterSet();
    if (fusion) params.append(fusion->parameters(), "fusion.");
    params.append(transformer.parameters(), "transformer.");
  }

  void apply_config(const TrainConfig& c) {
    if (fusion) fusion->set_weights(c.fusion_init);
    transformer.config.dropout = c.dropout;
    if (c.freeze_fusion_weights) {
      params.set_trainable("fusion.w1", false);
      params.set_trainable("fusion.w2", false);
      params.set_trainable("fusion.w3", false);
    }
  }
};

inline FusedSequence slt_fuse(const SltModel& model, const FeatureSequence& rgb, const FeatureSequence& flow) {
  require_paired("slt_forward", rgb, flow);
  switch (model.mode) {
    case FusionMode::cma: return fuse_cma(rgb, flow, *model.fusion);
    case FusionMode::sum: return fuse_sum(rgb, flow);
    case FusionMode::rgb_only: return {rgb.frames(), FusionKind::rgb_only};
    case FusionMode::flow_only: return {flow.frames(), FusionKind::flow_only};
    case FusionMode::ensemble: break;
  }
  throw DomainError("slt: unsupported fusion mode");
}

/// Logits over the target vocabulary for every prefix position.
inline Tensor slt_forward(const SltModel& model, const FeatureSequence& rgb, const FeatureSequence& flow,
                          const std::vector<std::size_t>& target_prefix, Rng* dropout_rng = nullptr) {
  return transformer_translate(slt_fuse(model, rgb, flow), target_prefix, model.transformer, dropout_rng);
}

/// Teacher-forcing pair for a sentence: decoder input [BOS y...] and
/// expected output [y... EOS].
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> teacher_forcing(
    const std::vector<std::size_t>& sentence) {
  std::vector<std::size_t> in{kBos}, out;
  in.insert(in.end(), sentence.begin(), sentence.end());
  out.insert(out.end(), sentence.begin(), sentence.end());
  out.push_back(kEos);
  return {in, out};
}

/// Token-mean cross-entropy over a batch (pad positions excluded).
inline Tensor slt_batch_loss(const SltModel& model, const std::vector<const Sample*>& batch, double smoothing,
                             Rng* dropout_rng) {
  Tensor total;
  std::size_t count = 0;
  for (const Sample* s : batch) {
    auto [in, out] = teacher_forcing(s->translation);
    Tensor logits = slt_forward(model, s->rgb, s->flow, in, dropout_rng);
    TokenLoss tl = cross_entropy_sum(logits, out, smoothing);
    total = total.defined() ? add(total, tl.sum) : tl.sum;
    count += tl.count;
  }
  if (!total.defined()) throw DomainError("slt: empty batch");
  return scale(total, 1.0 / static_cast<double>(count));
}

/// One optimizer update; returns the pre-update loss.
inline double slt_train_step(SltModel& model, Adam& optimizer, const std::vector<const Sample*>& batch,
                             const TrainConfig& config, Rng& dropout_rng) {
  Tensor loss = slt_batch_loss(model, batch, config.label_smoothing, config.dropout > 0 ? &dropout_rng : nullptr);
  model.params.zero_grad();
  backward(loss);
  clip_grad_norm(model.params, config.clip_norm);
  optimizer.step();
  return loss.item();
}

/// Greedy decode from BOS until EOS or `max_len` tokens.
inline std::vector<std::size_t> slt_translate(const SltModel& model, const FeatureSequence& rgb,
                                              const FeatureSequence& flow, std::size_t max_len) {
  Tensor memory = model.transformer.encode(slt_fuse(model, rgb, flow).frames, nullptr);
  std::vector<std::size_t> prefix{kBos};
  std::vector<std::size_t> out;
  const std::size_t V = model.transformer.config.vocab;
  while (out.size() < max_len) {
    Tensor logits = model.transformer.decode(memory, prefix, nullptr);
    const double* last = logits.values().data() + (prefix.size() - 1) * V;
    const auto next = static_cast<std::size_t>(std::max_element(last, last + V) - last);
    if (next == kEos) break;
    out.push_back(next);
    prefix.push_back(next);
  }
  return out;
}

inline MetricReport slt_evaluate(const SltModel& model, const std::vector<Sample>& samples, std::size_t max_len,
                                 bool smooth_bleu) {
  if (samples.empty()) throw DomainError("slt_evaluate: no samples");
  MetricReport rep;
  std::vector<std::vector<std::size_t>> hyps, refs;
  EditCounts counts;
  for (const auto& s : samples) {
    auto hyp = slt_translate(model, s.rgb, s.flow, max_len);
    if (hyp == s.translation) ++rep.exact_matches;
    if (!s.translation.empty()) counts += edit_counts(hyp, s.translation);
    hyps.push_back(std::move(hyp));
    refs.push_back(s.translation);
  }
  rep.sentences = samples.size();
  rep.counts = counts;
  rep.wer = counts.reference_length ? wer_from_counts(counts).wer : 0.0;
  rep.bleu = bleu(hyps, refs, 4, smooth_bleu).bleu;
  rep.has_bleu = true;
  return rep;
}

struct SltTrainResult {
  std::vector<EpochRecord> epochs;
  std::vector<double> step_losses;
};

/// An "epoch" here is one pass over the training split.
inline SltTrainResult train_slt(SltModel& model, const std::vector<Sample>& train, const std::vector<Sample>& dev,
                                const TrainConfig& config, std::size_t eval_every = 0) {
  config.validate();
  if (train.empty()) throw DomainError("train_slt: empty training split");
  Adam opt(model.params, {config.lr, config.adam_beta1, config.adam_beta2, config.adam_eps});
  Rng batch_rng(derive_seed(config.seed, "batches"));
  Rng dropout_rng(derive_seed(config.seed, "dropout"));
  SltTrainResult result;
  for (std::size_t e = 1; e <= config.epochs; ++e) {
    EpochRecord rec;
    rec.epoch = e;
    double sum = 0;
    std::size_t steps = 0;
    for (const auto& batch : make_batches(train, config.batch_size, batch_rng)) {
      const double l = slt_train_step(model, opt, batch, config, dropout_rng);
      result.step_losses.push_back(l);
      sum += l;
      ++steps;
    }
    rec.loss.total = sum / static_cast<double>(steps);
    const bool last = e == config.epochs;
    if (eval_every > 0 && (e % eval_every == 0 || last) && !dev.empty()) {
      auto rep = slt_evaluate(model, dev, config.max_decode_len, config.bleu_smoothing);
      rec.dev_wer = rep.wer;
      rec.dev_bleu4 = rep.bleu[3];
    }
    result.epochs.push_back(rec);
  }
  return result;
}

}  // namespace mmslr
