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
#include <cmath>
#include <string>
#include <vector>

#include "mmslr/metrics.hpp"
#include "mmslr/random.hpp"

using namespace mmslr;

namespace {

using Words = std::vector<std::string>;

GlossLogits path_logits(const std::vector<std::size_t>& path, std::size_t classes) {
  std::vector<double> v(path.size() * classes, 0.0);
  for (std::size_t t = 0; t < path.size(); ++t) v[t * classes + path[t]] = 5.0;
  return {Tensor({path.size(), classes}, v), Branch::fused};
}

std::vector<std::size_t> random_seq(Rng& rng, std::size_t max_len, std::size_t vocab) {
  std::vector<std::size_t> s(rng.index(max_len + 1));
  for (auto& e : s) e = 1 + rng.index(vocab);
  return s;
}

// Plain Levenshtein distance.
std::size_t distance(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace

TEST(GreedyDecode, CollapseThenDropBlanks) {
  EXPECT_EQ(greedy_ctc_decode(path_logits({0, 1, 1, 0, 2}, 3)), (GlossSequence{1, 2}));
  EXPECT_EQ(greedy_ctc_decode(path_logits({0, 0, 0}, 3)), GlossSequence{});
  EXPECT_EQ(greedy_ctc_decode(path_logits({1, 0, 1}, 3)), (GlossSequence{1, 1}));
}

TEST(GreedyDecode, NoBlanksOrRunDuplicates) {
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    std::vector<std::size_t> path(1 + rng.index(10));
    for (auto& p : path) p = rng.index(4);
    const GlossSequence out = greedy_ctc_decode(path_logits(path, 4));
    for (auto g : out) EXPECT_NE(g, kBlank);
    // Each run of equal non-blank labels in the path yields exactly one output.
    std::size_t runs = 0;
    for (std::size_t t = 0; t < path.size(); ++t)
      if (path[t] != kBlank && (t == 0 || path[t] != path[t - 1])) ++runs;
    EXPECT_EQ(out.size(), runs);
  }
}

TEST(Wer, Examples) {
  EXPECT_EQ(wer(GlossSequence{1, 2, 3}, GlossSequence{1, 2, 3}).wer, 0.0);
  WerResult r = wer(GlossSequence{1, 3}, GlossSequence{1, 2, 3});
  EXPECT_EQ(r.counts.deletions, 1u);
  EXPECT_EQ(r.counts.substitutions + r.counts.insertions, 0u);
  EXPECT_NEAR(r.wer, 100.0 / 3.0, 1e-12);
  EXPECT_EQ(wer(GlossSequence{}, GlossSequence{4, 5, 6}).wer, 100.0);
  EXPECT_THROW(wer(GlossSequence{1}, GlossSequence{}), DomainError);
}

TEST(Wer, InsertionsCanExceedHundred) {
  WerResult r = wer(GlossSequence{1, 2, 3, 4}, GlossSequence{9});
  EXPECT_EQ(r.wer, 400.0);
}

TEST(Wer, TiesPreferSubstitution) {
  // Both hyp {2} vs ref {1, 3} alignments cost 2; the backtrace takes S + D.
  WerResult r = wer(GlossSequence{1, 2}, GlossSequence{3, 4});
  EXPECT_EQ(r.counts.substitutions, 2u);
  EXPECT_EQ(r.counts.deletions + r.counts.insertions, 0u);
  EXPECT_EQ(edit_counts(GlossSequence{2}, GlossSequence{1, 3}).substitutions, 1u);
  EXPECT_EQ(edit_counts(GlossSequence{2}, GlossSequence{1, 3}).deletions, 1u);
}

TEST(Wer, CountsAgreeWithLevenshtein) {
  Rng rng(2);
  for (int i = 0; i < 500; ++i) {
    auto h = random_seq(rng, 6, 3), r = random_seq(rng, 6, 3);
    EXPECT_EQ(edit_counts(h, r).errors(), distance(h, r));
    EXPECT_EQ(edit_counts(h, r).reference_length, r.size());
  }
}

TEST(Wer, ZeroIffEqual) {
  Rng rng(3);
  for (int i = 0; i < 300; ++i) {
    auto h = random_seq(rng, 4, 2), r = random_seq(rng, 4, 2);
    if (r.empty()) continue;
    EXPECT_EQ(wer(h, r).wer == 0.0, h == r);
  }
}

TEST(Wer, InvariantUnderRelabeling) {
  Rng rng(4);
  std::vector<std::size_t> perm{0, 1, 2, 3, 4, 5};
  for (int i = 0; i < 200; ++i) {
    auto h = random_seq(rng, 6, 5), r = random_seq(rng, 6, 5);
    if (r.empty()) continue;
    std::vector<std::size_t> p(perm.begin() + 1, perm.end());
    rng.shuffle(p);
    auto relabel = [&](GlossSequence s) {
      for (auto& e : s) e = p[e - 1];
      return s;
    };
    const EditCounts a = edit_counts(h, r), b = edit_counts(relabel(h), relabel(r));
    EXPECT_EQ(a.substitutions, b.substitutions);
    EXPECT_EQ(a.deletions, b.deletions);
    EXPECT_EQ(a.insertions, b.insertions);
  }
}

TEST(Bleu, PerfectCorpusIsHundred) {
  std::vector<Words> c{{"a", "b", "c", "d", "e"}, {"x", "y", "z", "w"}};
  BleuScores s = bleu(c, c);
  for (double v : s.bleu) EXPECT_NEAR(v, 100.0, 1e-9);
  s = bleu(c, c, 4, true);
  EXPECT_NEAR(s.bleu[3], 100.0, 1e-9);
}

TEST(Bleu, ClippedUnigramPrecision) {
  BleuScores s = bleu(std::vector<Words>{{"the", "the", "the"}}, std::vector<Words>{{"the", "cat"}}, 1);
  EXPECT_NEAR(s.bleu[0], 100.0 / 3.0, 1e-9);
}

TEST(Bleu, NoOverlapIsZero) {
  BleuScores s = bleu(std::vector<Words>{{"a", "b"}}, std::vector<Words>{{"c", "d"}});
  for (double v : s.bleu) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(bleu(std::vector<Words>{}, std::vector<Words>{}), DomainError);
}

TEST(Bleu, BrevityPenaltyHandComputed) {
  // hyp "a b" vs ref "a b c d": p1 = p2 = 1, BP = exp(1 - 4/2).
  BleuScores s = bleu(std::vector<Words>{{"a", "b"}}, std::vector<Words>{{"a", "b", "c", "d"}}, 2);
  EXPECT_NEAR(s.bleu[0], 100.0 * std::exp(-1.0), 1e-9);
  EXPECT_NEAR(s.bleu[1], 100.0 * std::exp(-1.0), 1e-9);
  EXPECT_EQ(s.bleu[2], 0.0);
}

TEST(Bleu, SmoothingRescuesShortHypotheses) {
  // hyp "a b c" vs ref "a b d": p1 = 2/3, p2 = 1/2, p3 = 0/1, p4 has no 4-grams.
  const std::vector<Words> h{{"a", "b", "c"}}, r{{"a", "b", "d"}};
  EXPECT_EQ(bleu(h, r).bleu[3], 0.0);
  BleuScores s = bleu(h, r, 4, true);
  const double want = 100.0 * std::exp((std::log(2.0 / 3) + std::log(2.0 / 3) + std::log(1.0 / 2) + std::log(1.0)) / 4);
  EXPECT_NEAR(s.bleu[3], want, 1e-9);
}

TEST(Bleu, InvariantToSentenceOrder) {
  Rng rng(5);
  std::vector<GlossSequence> h, r;
  for (int i = 0; i < 12; ++i) {
    h.push_back(random_seq(rng, 7, 4));
    r.push_back(random_seq(rng, 7, 4));
  }
  const BleuScores a = bleu(h, r, 4, true);
  std::vector<std::size_t> idx(12);
  for (std::size_t i = 0; i < 12; ++i) idx[i] = i;
  rng.shuffle(idx);
  std::vector<GlossSequence> h2, r2;
  for (auto i : idx) {
    h2.push_back(h[i]);
    r2.push_back(r[i]);
  }
  const BleuScores b = bleu(h2, r2, 4, true);
  for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(a.bleu[k], b.bleu[k], 1e-9);
}

TEST(Bleu, ScoresStayInRange) {
  Rng rng(6);
  for (int i = 0; i < 100; ++i) {
    std::vector<GlossSequence> h{random_seq(rng, 8, 3)}, r{random_seq(rng, 8, 3)};
    for (double v : bleu(h, r, 4, i % 2 == 0).bleu) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 100.0 + 1e-9);
    }
  }
}
