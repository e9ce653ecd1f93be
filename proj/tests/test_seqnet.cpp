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

#include <cmath>
#include <vector>

#include "mmslr/gradcheck.hpp"
#include "mmslr/seqnet.hpp"

using namespace mmslr;

namespace {

using Mat = std::vector<std::vector<double>>;

Mat to_mat(const Tensor& t) {
  Mat m(t.dim(0), std::vector<double>(t.dim(1)));
  for (std::size_t i = 0; i < t.dim(0); ++i)
    for (std::size_t j = 0; j < t.dim(1); ++j) m[i][j] = t.at(i, j);
  return m;
}

std::vector<double> to_vec(const Tensor& t) { return t.values(); }

Mat mm(const Mat& a, const Mat& b) {
  Mat c(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b[0].size(); ++j)
      for (std::size_t p = 0; p < b.size(); ++p) c[i][j] += a[i][p] * b[p][j];
  return c;
}

Mat affine(const Mat& x, const Linear& l) {
  Mat y = mm(x, to_mat(l.w));
  const auto b = to_vec(l.b);
  for (auto& row : y)
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += b[j];
  return y;
}

Mat addm(Mat a, const Mat& b) {
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) a[i][j] += b[i][j];
  return a;
}

Mat norm(const Mat& x, const LayerNormParams& p) {
  const auto g = to_vec(p.gain), b = to_vec(p.bias);
  Mat y = x;
  for (auto& row : y) {
    double m = 0, v = 0;
    for (double e : row) m += e / row.size();
    for (double e : row) v += (e - m) * (e - m) / row.size();
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = (row[j] - m) / std::sqrt(v + 1e-5) * g[j] + b[j];
  }
  return y;
}

// Single-head attention with optional causal masking.
Mat attend(const Mat& xq, const Mat& xkv, const MultiHeadAttention& a, bool causal) {
  const Mat q = affine(xq, a.q), k = affine(xkv, a.k), v = affine(xkv, a.v);
  const double d = static_cast<double>(q[0].size());
  Mat ctx(q.size(), std::vector<double>(v[0].size(), 0.0));
  for (std::size_t i = 0; i < q.size(); ++i) {
    const std::size_t lim = causal ? i + 1 : k.size();
    std::vector<double> w(lim);
    double mx = -1e300, z = 0;
    for (std::size_t j = 0; j < lim; ++j) {
      w[j] = 0;
      for (std::size_t p = 0; p < q[i].size(); ++p) w[j] += q[i][p] * k[j][p];
      w[j] /= std::sqrt(d);
      mx = std::max(mx, w[j]);
    }
    for (auto& e : w) z += (e = std::exp(e - mx));
    for (std::size_t j = 0; j < lim; ++j)
      for (std::size_t p = 0; p < v[j].size(); ++p) ctx[i][p] += w[j] / z * v[j][p];
  }
  return affine(ctx, a.o);
}

Mat feed_forward(const Mat& x, const Linear& a, const Linear& b) {
  Mat h = affine(x, a);
  for (auto& row : h)
    for (double& e : row) e = std::max(0.0, e);
  return affine(h, b);
}

Mat positions(std::size_t n, std::size_t d) {
  Mat p(n, std::vector<double>(d));
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t i = 0; i < d; ++i) {
      const double a = t / std::pow(10000.0, (2.0 * (i / 2)) / d);
      p[t][i] = i % 2 == 0 ? std::sin(a) : std::cos(a);
    }
  return p;
}

FeatureSequence random_seq(std::size_t n, std::size_t d, Rng& rng) {
  std::vector<double> v(n * d);
  for (auto& e : v) e = rng.normal();
  return FeatureSequence(Modality::rgb, Tensor({n, d}, v, true));
}

}  // namespace

TEST(TemporalReduce, LengthFormulaExhaustive) {
  Rng rng(0);
  TemporalReducer p = TemporalReducer::init(3, rng);
  for (std::size_t n = 4; n <= 64; ++n) {
    const std::size_t want = ((n + 1) / 2 + 1) / 2;
    EXPECT_EQ(reduced_length(n), want);
    EXPECT_EQ(temporal_reduce(random_seq(n, 3, rng), p).n(), want) << n;
  }
  EXPECT_EQ(reduced_length(16), 4u);
  EXPECT_EQ(reduced_length(8), 2u);
}

TEST(TemporalReduce, IdentityConvPoolChainPicksLastFrame) {
  TemporalReducer p = TemporalReducer::identity(2);
  FeatureSequence x(Modality::rgb, Tensor::matrix({{1, 10}, {2, 20}, {3, 30}, {4, 40}}));
  FeatureSequence y = temporal_reduce(x, p);
  ASSERT_EQ(y.n(), 1u);
  EXPECT_EQ(y.frames().values(), (std::vector<double>{4, 40}));
}

TEST(TemporalReduce, ConvMatchesLoop) {
  Rng rng(1);
  FeatureSequence x = random_seq(6, 3, rng);
  Tensor w = xavier_uniform(5 * 3, 2, rng);
  Tensor b = Tensor::matrix({{0.5, -0.5}});
  b = reshape(b, {2});
  Tensor y = conv1d_same(x.frames(), w, b, 5);
  for (std::size_t t = 0; t < 6; ++t)
    for (std::size_t o = 0; o < 2; ++o) {
      double s = b.values()[o];
      for (std::size_t k = 0; k < 5; ++k) {
        const long src = static_cast<long>(t + k) - 2;
        if (src < 0 || src >= 6) continue;
        for (std::size_t i = 0; i < 3; ++i) s += x.frames().at(src, i) * w.at(k * 3 + i, o);
      }
      EXPECT_NEAR(y.at(t, o), s, 1e-12);
    }
}

TEST(BiLstm, ZeroWeightsGiveProjectionBias) {
  BiLstmParams p = BiLstmParams::zeros(4);
  p.proj_b.mutable_values() = {1, 2, 3, 4};
  Rng rng(2);
  FeatureSequence y = bilstm_forward(random_seq(3, 4, rng), p);
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(y.frames().at(t, j), static_cast<double>(j + 1));
}

TEST(BiLstm, EveryOutputDependsOnEveryInput) {
  Rng rng(3);
  BiLstmParams p = BiLstmParams::init(4, rng);
  FeatureSequence x = random_seq(5, 4, rng);
  const Tensor base = bilstm_forward(x, p).frames();
  for (std::size_t k = 0; k < 5; ++k) {
    std::vector<double> v = x.frames().values();
    v[k * 4] += 0.5;
    const Tensor y = bilstm_forward(FeatureSequence(Modality::rgb, Tensor({5, 4}, v)), p).frames();
    for (std::size_t t = 0; t < 5; ++t) {
      double diff = 0;
      for (std::size_t j = 0; j < 4; ++j) diff += std::abs(y.at(t, j) - base.at(t, j));
      EXPECT_GT(diff, 0.0) << "input " << k << " output " << t;
    }
  }
}

TEST(BiLstm, HiddenIsHalfWidth) {
  Rng rng(4);
  BiLstmParams p = BiLstmParams::init(6, rng);
  EXPECT_EQ(p.hidden, 3u);
  EXPECT_EQ(p.fwd.w_x.shape(), (Shape{6, 12}));
  EXPECT_EQ(p.proj_w.shape(), (Shape{6, 6}));
}

TEST(BiLstm, GradCheckOnThreeFrames) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    BiLstmParams p = BiLstmParams::init(4, rng);
    FeatureSequence x = random_seq(3, 4, rng);
    std::vector<Tensor> wrt{x.frames()};
    const ParameterSet ps = p.parameters();
    for (const auto& np : ps.items()) wrt.push_back(np.tensor);
    EXPECT_LE(grad_check([&] { return reduce_sum(bilstm_forward(x, p).frames()); }, wrt), 1e-4);
  }
}

TEST(Classify, ZeroWeightsEmitBias) {
  ClassifierHead h{Tensor::zeros({3, 4}, true), Tensor({4}, {1, -1, 2, 0}, true)};
  Rng rng(5);
  GlossLogits g = classify(random_seq(2, 3, rng), h, Branch::rgb);
  EXPECT_EQ(g.classes(), 4u);
  EXPECT_EQ(g.branch, Branch::rgb);
  for (std::size_t t = 0; t < 2; ++t)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(g.scores.at(t, j), h.bias.values()[j]);
}

TEST(Classify, IdentityPassthroughAndOracle) {
  std::vector<double> eye(9, 0.0);
  for (int i = 0; i < 3; ++i) eye[i * 4] = 1.0;
  ClassifierHead id{Tensor({3, 3}, eye), Tensor::zeros({3})};
  Rng rng(6);
  FeatureSequence x = random_seq(4, 3, rng);
  EXPECT_EQ(classify(x, id, Branch::fused).scores.values(), x.frames().values());

  ClassifierHead h = ClassifierHead::init(3, 5, rng);
  h.bias.mutable_values() = {0.1, 0.2, 0.3, 0.4, 0.5};
  const Tensor got = classify(x, h, Branch::fused).scores;
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t c = 0; c < 5; ++c) {
      double s = h.bias.values()[c];
      for (std::size_t i = 0; i < 3; ++i) s += x.frames().at(t, i) * h.weight.at(i, c);
      EXPECT_NEAR(got.at(t, c), s, 1e-12);
    }
  EXPECT_THROW(classify(random_seq(4, 2, rng), h, Branch::fused), ShapeError);
}

TEST(Transformer, SingleLayerSingleHeadMatchesOracle) {
  TransformerConfig c;
  c.input_dim = 3;
  c.model_dim = 4;
  c.heads = 1;
  c.ff_dim = 5;
  c.encoder_layers = 1;
  c.decoder_layers = 1;
  c.vocab = 6;
  Rng rng(7);
  TransformerStack st = TransformerStack::init(c, rng);
  FeatureSequence src = random_seq(2, 3, rng);
  const std::vector<std::size_t> prefix{kBos, 4, 5};
  const Tensor got = transformer_translate({src.frames(), FusionKind::cma}, prefix, st);

  const auto& e = st.encoder[0];
  Mat x = addm(affine(to_mat(src.frames()), st.adapter), positions(2, 4));
  Mat h = norm(x, e.ln1);
  x = addm(x, attend(h, h, e.self_attn, false));
  x = addm(x, feed_forward(norm(x, e.ln2), e.ff1, e.ff2));
  const Mat memory = norm(x, st.enc_norm);

  const auto& dl = st.decoder[0];
  const Mat emb = to_mat(st.embedding);
  Mat y(3);
  for (std::size_t t = 0; t < 3; ++t) {
    y[t] = emb[prefix[t]];
    for (auto& v : y[t]) v *= 2.0;  // sqrt(model_dim)
  }
  y = addm(y, positions(3, 4));
  h = norm(y, dl.ln1);
  y = addm(y, attend(h, h, dl.self_attn, true));
  y = addm(y, attend(norm(y, dl.ln2), memory, dl.cross_attn, false));
  y = addm(y, feed_forward(norm(y, dl.ln3), dl.ff1, dl.ff2));
  const Mat want = affine(norm(y, st.dec_norm), st.out);

  ASSERT_EQ(got.shape(), (Shape{3, 6}));
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t v = 0; v < 6; ++v) EXPECT_NEAR(got.at(t, v), want[t][v], 1e-8);
}

TEST(Transformer, DecoderIsCausal) {
  TransformerConfig c;
  c.input_dim = 4;
  c.model_dim = 8;
  c.heads = 2;
  c.ff_dim = 12;
  c.vocab = 9;
  Rng rng(8);
  TransformerStack st = TransformerStack::init(c, rng);
  for (int trial = 0; trial < 100; ++trial) {
    FeatureSequence src = random_seq(1 + rng.index(5), 4, rng);
    const std::size_t m = 2 + rng.index(5);
    std::vector<std::size_t> a{kBos}, b;
    for (std::size_t t = 1; t < m; ++t) a.push_back(rng.index(9));
    b = a;
    const std::size_t k = 1 + rng.index(m - 1);
    for (std::size_t t = k; t < m; ++t) b[t] = rng.index(9);
    const Tensor la = transformer_translate({src.frames(), FusionKind::cma}, a, st);
    const Tensor lb = transformer_translate({src.frames(), FusionKind::cma}, b, st);
    for (std::size_t t = 0; t < k; ++t)
      for (std::size_t v = 0; v < 9; ++v) ASSERT_EQ(la.at(t, v), lb.at(t, v)) << "trial " << trial;
  }
}

TEST(Transformer, RejectsBadPrefixAndTokens) {
  TransformerConfig c;
  c.input_dim = 4;
  c.model_dim = 8;
  c.heads = 2;
  c.vocab = 5;
  Rng rng(9);
  TransformerStack st = TransformerStack::init(c, rng);
  FeatureSequence src = random_seq(3, 4, rng);
  EXPECT_THROW(transformer_translate({src.frames(), FusionKind::cma}, {3, 4}, st), DomainError);
  EXPECT_THROW(transformer_translate({src.frames(), FusionKind::cma}, {kBos, 7}, st), DomainError);
  c.heads = 3;
  EXPECT_THROW(TransformerStack::init(c, rng), ShapeError);
}

TEST(Transformer, DropoutOnlyWithRng) {
  TransformerConfig c;
  c.input_dim = 4;
  c.model_dim = 8;
  c.heads = 2;
  c.vocab = 5;
  c.dropout = 0.5;
  Rng rng(10);
  TransformerStack st = TransformerStack::init(c, rng);
  FeatureSequence src = random_seq(3, 4, rng);
  const std::vector<std::size_t> prefix{kBos, 3};
  const auto a = transformer_translate({src.frames(), FusionKind::cma}, prefix, st).values();
  EXPECT_EQ(a, transformer_translate({src.frames(), FusionKind::cma}, prefix, st).values());
  Rng d(1);
  EXPECT_NE(a, transformer_translate({src.frames(), FusionKind::cma}, prefix, st, &d).values());
}

TEST(GradCheck, SeqnetComposites) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(100 + seed);
    TemporalReducer tr = TemporalReducer::init(3, rng);
    FeatureSequence x = random_seq(9, 3, rng);
    std::vector<Tensor> wrt{x.frames()};
    const ParameterSet ps = tr.parameters();
    for (const auto& np : ps.items()) wrt.push_back(np.tensor);
    EXPECT_LE(grad_check([&] { return reduce_sum(mul(temporal_reduce(x, tr).frames(), temporal_reduce(x, tr).frames())); },
                         wrt),
              1e-4);
  }
}
