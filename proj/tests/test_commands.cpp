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

#include <algorithm>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "mmslr/commands.hpp"
#include "fixtures.hpp"

using namespace mmslr;
using mmslr::testing::TempDir;

namespace {

SyntheticTaskSpec small_spec(std::uint64_t seed = 1) {
  SyntheticTaskSpec s;
  s.seed = seed;
  s.num_train = 6;
  s.num_dev = 2;
  s.num_test = 2;
  s.glosses = 4;
  s.dim = 6;
  return s;
}

TrainConfig small_slr(std::size_t epochs = 2) {
  TrainConfig c;
  c.epochs = epochs;
  return c;
}

}  // namespace

TEST(Reports, TextAndJson) {
  MetricReport r;
  r.wer = 12.5;
  r.counts = {1, 2, 0, 24};
  r.sentences = 3;
  r.exact_matches = 1;
  const std::string t = to_text(r);
  EXPECT_NE(t.find("wer=12.5000\n"), std::string::npos);
  EXPECT_NE(t.find("deletions=2\n"), std::string::npos);
  EXPECT_EQ(t.find("bleu"), std::string::npos);
  EXPECT_FALSE(to_json(r).contains("bleu4"));
  r.has_bleu = true;
  r.bleu = {50, 40, 30, 20};
  EXPECT_NE(to_text(r).find("bleu4=20.0000\n"), std::string::npos);
  EXPECT_EQ(to_json(r)["bleu2"].get<double>(), 40.0);
}

TEST(Dataset, LoadsSplitsAndDim) {
  TempDir dir;
  Dataset ds = load_dataset(cmd_gen(small_spec(), dir.path()));
  EXPECT_EQ(ds.train.size(), 6u);
  EXPECT_EQ(ds.dev.size(), 2u);
  EXPECT_EQ(ds.split(Split::test).size(), 2u);
  EXPECT_EQ(ds.dim, 6u);
}

TEST(CmdTrain, RunRecordIsByteIdenticalAcrossRuns) {
  TempDir dir;
  const auto manifest = cmd_gen(small_spec(), dir.path());
  RunRecord a = cmd_train(small_slr(), manifest, "");
  RunRecord b = cmd_train(small_slr(), manifest, "");
  EXPECT_EQ(a.to_jsonl(), b.to_jsonl());
  EXPECT_EQ(a.epochs.size(), 2u);
  EXPECT_EQ(a.final_split, "dev");

  std::istringstream in(a.to_jsonl());
  std::string line;
  std::vector<std::string> kinds;
  while (std::getline(in, line)) kinds.push_back(nlohmann::json::parse(line).at("record"));
  EXPECT_EQ(kinds, (std::vector<std::string>{"config", "epoch", "epoch", "final"}));
  EXPECT_EQ(a.to_jsonl().find("wall"), std::string::npos);
  EXPECT_NE(a.to_text().find("wall_seconds="), std::string::npos);
}

TEST(CmdEval, ReproducesTrainingReport) {
  TempDir dir;
  const auto manifest = cmd_gen(small_spec(), dir.path());
  const auto ckpt = dir.path() / "model.ckpt";
  RunRecord rec = cmd_train(small_slr(3), manifest, ckpt);
  MetricReport dev = cmd_eval(ckpt, manifest, Split::dev);
  EXPECT_EQ(dev.wer, rec.final_report.wer);
  EXPECT_EQ(dev.counts.errors(), rec.final_report.counts.errors());
  EXPECT_NO_THROW(cmd_eval(ckpt, manifest, Split::test));
}

TEST(CmdEval, PerfectModelScoresZero) {
  TempDir dir;
  SyntheticTaskSpec s = small_spec(1);
  s.num_dev = 0;
  s.num_test = 0;
  s.num_train = 8;
  s.glosses = 4;
  s.dim = 8;
  const auto manifest = cmd_gen(s, dir.path());
  TrainConfig c;
  c.epochs = 300;
  c.stop_at_zero_train_wer = true;
  const auto ckpt = dir.path() / "m.ckpt";
  RunRecord rec = cmd_train(c, manifest, ckpt);
  ASSERT_EQ(rec.final_report.wer, 0.0) << "did not fit in " << rec.epochs.size() << " epochs";
  MetricReport r = cmd_eval(ckpt, manifest, Split::train);
  EXPECT_EQ(r.wer, 0.0);
  EXPECT_EQ(r.exact_matches, r.sentences);
}

TEST(CmdEval, ConfigMismatchUnlessForced) {
  TempDir dir;
  const auto m1 = cmd_gen(small_spec(1), dir.path() / "a");
  SyntheticTaskSpec other = small_spec(1);
  other.glosses = 5;
  other.num_train = 30;
  const auto m2 = cmd_gen(other, dir.path() / "b");
  const auto ckpt = dir.path() / "a.ckpt";
  cmd_train(small_slr(1), m1, ckpt);
  EXPECT_THROW(cmd_eval(ckpt, m2, Split::dev), ConfigMismatch);
  EXPECT_NO_THROW(cmd_eval(ckpt, m1, Split::dev));
  EXPECT_NO_THROW(cmd_eval(ckpt, m2, Split::dev, true));
}

TEST(CmdEval, EmptySplitIsAnError) {
  TempDir dir;
  SyntheticTaskSpec s = small_spec();
  s.num_test = 0;
  const auto manifest = cmd_gen(s, dir.path());
  const auto ckpt = dir.path() / "m.ckpt";
  cmd_train(small_slr(1), manifest, ckpt);
  EXPECT_THROW(cmd_eval(ckpt, manifest, Split::test), DomainError);
}

TEST(CmdTrain, TranslationCheckpointEvaluates) {
  TempDir dir;
  const auto manifest = cmd_gen(small_spec(), dir.path());
  TrainConfig c;
  c.task = Task::slt;
  c.epochs = 1;
  c.model_dim = 8;
  c.heads = 2;
  c.ff_dim = 8;
  c.encoder_layers = 1;
  c.decoder_layers = 1;
  const auto ckpt = dir.path() / "t.ckpt";
  RunRecord rec = cmd_train(c, manifest, ckpt);
  EXPECT_TRUE(rec.final_report.has_bleu);
  MetricReport r = cmd_eval(ckpt, manifest, Split::dev);
  EXPECT_EQ(r.bleu, rec.final_report.bleu);
}

TEST(CompareFusion, RowsAndSummary) {
  TempDir dir;
  Dataset ds = load_dataset(cmd_gen(small_spec(), dir.path()));
  auto rows = compare_fusion(ds, small_slr(1), 2, {FusionMode::sum, FusionMode::rgb_only});
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].mode, FusionMode::sum);
  EXPECT_EQ(rows[1].dev_wer.size(), 2u);
  const std::string t = comparison_text(rows);
  EXPECT_NE(t.find("rgb_only"), std::string::npos);
  const std::string j = comparison_jsonl(rows);
  EXPECT_EQ(std::count(j.begin(), j.end(), '\n'), 2);
}

TEST(CompareFusion, SummaryStatistics) {
  FusionComparisonRow r;
  r.dev_wer = {10, 20, 30};
  summarize(r);
  EXPECT_DOUBLE_EQ(r.mean, 20.0);
  EXPECT_DOUBLE_EQ(r.sd, 10.0);
  r.dev_wer = {7};
  summarize(r);
  EXPECT_EQ(r.sd, 0.0);
}

TEST(Config, JsonRoundTripAndUnknownKeys) {
  TrainConfig c;
  c.alpha = 0.25;
  c.fusion = FusionMode::flow_only;
  c.fusion_init = {1, 0, 0};
  TrainConfig back = TrainConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_THROW(TrainConfig::from_json({{"alhpa", 1}}), DomainError);
  EXPECT_THROW(TrainConfig::from_json({{"fusion", "late"}}), DomainError);
}

TEST(GradcheckReport, Rendering) {
  std::vector<GradCheckResult> r{{"a", 1e-9, 10, true}, {"b", 1e-2, 10, false}};
  const std::string t = gradcheck_text(r, 1e-4);
  EXPECT_EQ(t.find("PASS a"), 0u);
  EXPECT_NE(t.find("FAIL b"), std::string::npos);
  EXPECT_NE(gradcheck_jsonl(r).find("\"passed\":false"), std::string::npos);
}
