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

#include <gtest/gtest.h>

#include <bit>
#include <cstring>
#include <string>
#include <vector>

#include "mmslr/slr.hpp"
#include "fixtures.hpp"

using namespace mmslr;

namespace {

SyntheticTaskSpec small_spec() {
  SyntheticTaskSpec s;
  s.seed = 2;
  s.num_train = 6;
  s.glosses = 4;
  s.dim = 6;
  return s;
}

Tensor random_frames(std::size_t n, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n * d);
  for (auto& e : v) e = rng.normal();
  return Tensor({n, d}, v);
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.values().data(), b.values().data(), a.numel() * sizeof(double)) == 0;
}

bool has_prefix(const ParameterSet& ps, const std::string& prefix) {
  for (const auto& p : ps.items())
    if (p.name.rfind(prefix, 0) == 0) return true;
  return false;
}

}  // namespace

TEST(SlrModel, ComponentsPerMode) {
  struct Want {
    FusionMode mode;
    bool rgb, flow, fusion, bilstm;
  };
  for (auto w : {Want{FusionMode::cma, true, true, true, true}, Want{FusionMode::sum, true, true, false, true},
                 Want{FusionMode::ensemble, true, true, false, false},
                 Want{FusionMode::rgb_only, true, false, false, true},
                 Want{FusionMode::flow_only, false, true, false, true}}) {
    SlrModel m = SlrModel::init(6, 5, w.mode, 1);
    EXPECT_EQ(has_prefix(m.params, "reduce_r."), w.rgb) << to_string(w.mode);
    EXPECT_EQ(has_prefix(m.params, "cls_rgb."), w.rgb);
    EXPECT_EQ(has_prefix(m.params, "reduce_f."), w.flow);
    EXPECT_EQ(has_prefix(m.params, "cls_flow."), w.flow);
    EXPECT_EQ(has_prefix(m.params, "fusion."), w.fusion);
    EXPECT_EQ(has_prefix(m.params, "bilstm."), w.bilstm);
    EXPECT_EQ(has_prefix(m.params, "cls_final."), w.bilstm);
  }
  EXPECT_THROW(SlrModel::init(6, 1, FusionMode::cma, 1), DomainError);
}

TEST(SlrModel, SharedComponentsStartIdenticalAcrossModes) {
  SlrModel a = SlrModel::init(6, 5, FusionMode::cma, 9), b = SlrModel::init(6, 5, FusionMode::sum, 9);
  for (const auto& p : b.params.items()) {
    const NamedParameter* q = a.params.find(p.name);
    ASSERT_NE(q, nullptr) << p.name;
    EXPECT_EQ(q->tensor.values(), p.tensor.values()) << p.name;
  }
}

TEST(SlrForward, OutputShapes) {
  SlrModel m = SlrModel::init(6, 5, FusionMode::cma, 1);
  auto [r, f] = align_streams(random_frames(17, 6, 1), random_frames(16, 6, 2));
  SlrOutputs out = slr_forward(m, r, f);
  const std::size_t T = reduced_length(r.n());
  EXPECT_EQ(out.gloss.scores.shape(), (Shape{T, 5}));
  EXPECT_EQ(out.gloss.branch, Branch::fused);
  EXPECT_EQ(out.gloss_rgb->scores.shape(), (Shape{T, 5}));
  EXPECT_EQ(out.gloss_flow->branch, Branch::flow);
  EXPECT_EQ(out.fused->n(), T);
}

TEST(SlrForward, InputErrors) {
  SlrModel m = SlrModel::init(6, 5, FusionMode::cma, 1);
  auto [r, f] = align_streams(random_frames(8, 6, 1), random_frames(8, 6, 2));
  EXPECT_THROW(slr_forward(m, r, FeatureSequence(Modality::flow, random_frames(4, 6, 3))), ShapeError);
  auto [r7, f7] = align_streams(random_frames(8, 7, 1), random_frames(8, 7, 2));
  EXPECT_THROW(slr_forward(m, r7, f7), ShapeError);
  FeatureSequence r2(Modality::rgb, random_frames(2, 6, 1)), f2(Modality::flow, random_frames(2, 6, 2));
  EXPECT_THROW(slr_forward(m, r2, f2), DomainError);
}

TEST(SlrForward, EnsembleOutputIsProbabilityProduct) {
  SlrModel m = SlrModel::init(6, 5, FusionMode::ensemble, 1);
  auto [r, f] = align_streams(random_frames(12, 6, 1), random_frames(12, 6, 2));
  SlrOutputs out = slr_forward(m, r, f);
  EXPECT_FALSE(out.fused.has_value());
  Tensor want = fuse_ensemble(*out.gloss_rgb, *out.gloss_flow).scores;
  EXPECT_EQ(out.gloss.scores.values(), want.values());
}

TEST(SlrForward, FusedOutputIgnoresFlowWhenOnlyRgbWeightIsSet) {
  SlrModel m = SlrModel::init(6, 5, FusionMode::cma, 4);
  TrainConfig c;
  c.fusion_init = {1.0, 0.0, 0.0};
  c.freeze_fusion_weights = true;
  m.apply_config(c);
  auto [r, f1] = align_streams(random_frames(20, 6, 1), random_frames(20, 6, 2));
  auto [r_, f2] = align_streams(random_frames(20, 6, 1), random_frames(20, 6, 3));
  SlrOutputs a = slr_forward(m, r, f1), b = slr_forward(m, r, f2);
  EXPECT_TRUE(bit_equal(a.gloss.scores, b.gloss.scores));
  EXPECT_FALSE(bit_equal(a.gloss_flow->scores, b.gloss_flow->scores));
}

TEST(SlrForward, FlowIndependenceSurvivesTraining) {
  auto train = mmslr::testing::synthetic_samples(small_spec());
  SlrModel m = SlrModel::init(6, 5, FusionMode::cma, 4);
  TrainConfig c;
  c.epochs = 3;
  c.fusion_init = {1.0, 0.0, 0.0};
  c.freeze_fusion_weights = true;
  m.apply_config(c);
  train_slr(m, train, {}, c, false);
  EXPECT_EQ(m.fusion->w1.item(), 1.0);
  EXPECT_EQ(m.fusion->w2.item(), 0.0);
  EXPECT_EQ(m.fusion->w3.item(), 0.0);
  auto [r, f1] = align_streams(random_frames(20, 6, 1), random_frames(20, 6, 2));
  FeatureSequence f2(Modality::flow, random_frames(20, 6, 5));
  EXPECT_TRUE(bit_equal(slr_forward(m, r, f1).gloss.scores, slr_forward(m, r, f2).gloss.scores));
}

TEST(SlrLoss, BatchTotalMatchesParts) {
  auto train = mmslr::testing::synthetic_samples(small_spec());
  SlrModel m = SlrModel::init(6, 5, FusionMode::cma, 1);
  std::vector<const Sample*> batch{&train[0], &train[1], &train[2]};
  TrainConfig c;
  c.alpha = 0.3;
  c.beta = 2.0;
  auto [total, res] = slr_batch_objective(m, batch, c);
  EXPECT_EQ(res.used, 3u);
  EXPECT_EQ(total.item(), res.loss.total);
  EXPECT_NEAR(res.loss.total, res.loss.l_ctc + res.loss.l1 + res.loss.l2 + 0.3 * res.loss.l3 + 2.0 * res.loss.l4, 1e-12);
  EXPECT_GT(res.loss.l3, 0.0);
  EXPECT_GT(res.loss.l4, 0.0);

  // Per-sample oracle for the fused CTC part.
  double l_ctc = 0;
  for (const Sample* s : batch) l_ctc += ctc_loss(slr_forward(m, s->rgb, s->flow).gloss, s->gloss).item();
  EXPECT_NEAR(res.loss.l_ctc, l_ctc / 3, 1e-12);
}

TEST(SlrLoss, ZeroWeightsExcludeDistillationExactly) {
  auto train = mmslr::testing::synthetic_samples(small_spec());
  SlrModel m = SlrModel::init(6, 5, FusionMode::cma, 1);
  std::vector<const Sample*> batch{&train[0], &train[1]};
  TrainConfig c;
  c.alpha = 0.0;
  c.beta = 0.0;
  auto [total, res] = slr_batch_objective(m, batch, c);
  EXPECT_EQ(res.loss.total, res.loss.l_ctc + res.loss.l1 + res.loss.l2);
  EXPECT_GT(res.loss.l3, 0.0);
}

TEST(SlrLoss, EnsembleTrainsBranchesOnly) {
  auto train = mmslr::testing::synthetic_samples(small_spec());
  SlrModel m = SlrModel::init(6, 5, FusionMode::ensemble, 1);
  auto [total, res] = slr_batch_objective(m, {&train[0]}, TrainConfig{});
  EXPECT_EQ(res.loss.l_ctc, 0.0);
  EXPECT_EQ(res.loss.l3, 0.0);
  EXPECT_EQ(res.loss.l4, 0.0);
  EXPECT_EQ(res.loss.total, res.loss.l1 + res.loss.l2);
}

TEST(SlrLoss, InfeasibleSamplesAreSkipped) {
  auto train = mmslr::testing::synthetic_samples(small_spec());
  Sample bad = train[0];
  bad.gloss.assign(40, 1);
  SlrModel m = SlrModel::init(6, 5, FusionMode::cma, 1);
  auto [total, res] = slr_batch_objective(m, {&bad, &train[1]}, TrainConfig{});
  EXPECT_EQ(res.used, 1u);
  EXPECT_EQ(res.skipped, 1u);
}

TEST(SlrTrain, DeterministicForSeed) {
  auto train = mmslr::testing::synthetic_samples(small_spec());
  TrainConfig c;
  c.epochs = 3;
  c.seed = 5;
  auto run = [&] {
    SlrModel m = SlrModel::init(6, 5, FusionMode::cma, c.seed);
    m.apply_config(c);
    auto r = train_slr(m, train, {}, c);
    return std::make_pair(m.params.items().front().tensor.values(), r.epochs.back().loss.total);
  };
  auto a = run(), b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

TEST(SlrTrain, LossDecreases) {
  auto train = mmslr::testing::synthetic_samples(small_spec());
  TrainConfig c;
  c.epochs = 15;
  c.lr = 3e-3;
  SlrModel m = SlrModel::init(6, 5, FusionMode::cma, 0);
  m.apply_config(c);
  auto r = train_slr(m, train, {}, c);
  EXPECT_LT(r.epochs.back().loss.total, r.epochs.front().loss.total);
  EXPECT_TRUE(r.epochs.back().train_wer.has_value());
}

TEST(SlrTrain, FrozenFlowReducerDoesNotMove) {
  auto train = mmslr::testing::synthetic_samples(small_spec());
  TrainConfig c;
  c.epochs = 2;
  c.freeze_flow_reduce = true;
  SlrModel m = SlrModel::init(6, 5, FusionMode::cma, 0);
  m.apply_config(c);
  std::vector<std::vector<double>> snap;
  for (const auto& p : m.params.items())
    if (p.name.rfind("reduce_f.", 0) == 0) snap.push_back(p.tensor.values());
  ASSERT_FALSE(snap.empty());
  train_slr(m, train, {}, c, false);
  std::size_t i = 0;
  for (const auto& p : m.params.items())
    if (p.name.rfind("reduce_f.", 0) == 0) EXPECT_EQ(p.tensor.values(), snap[i++]) << p.name;
}

TEST(SlrEval, ReportsBranchWers) {
  auto train = mmslr::testing::synthetic_samples(small_spec());
  SlrModel m = SlrModel::init(6, 5, FusionMode::rgb_only, 0);
  SlrEvalReport rep = slr_evaluate(m, train);
  EXPECT_TRUE(rep.rgb_wer.has_value());
  EXPECT_FALSE(rep.flow_wer.has_value());
  EXPECT_EQ(rep.fused.sentences, train.size());
  EXPECT_THROW(slr_evaluate(m, {}), DomainError);
}

TEST(SlrTrain, BranchKlIsNonNegative) {
  auto train = mmslr::testing::synthetic_samples(small_spec());
  SlrModel m = SlrModel::init(6, 5, FusionMode::cma, 0);
  auto [kr, kf] = mean_branch_kl(m, train);
  EXPECT_GE(kr, 0.0);
  EXPECT_GE(kf, 0.0);
}
