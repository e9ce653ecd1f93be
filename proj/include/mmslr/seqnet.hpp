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

// Sequence networks around the fusion block: temporal reduction, a one-layer
// BiLSTM, per-timestep classifiers and a transformer encoder-decoder.

#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "mmslr/ops.hpp"
#include "mmslr/optim.hpp"
#include "mmslr/random.hpp"
#include "mmslr/types.hpp"

namespace mmslr {

// ---------------------------------------------------------------------------
// Temporal reduction: conv(k5) -> maxpool(2) -> conv(k5) -> maxpool(2)

inline std::size_t reduced_length(std::size_t n) { return pooled_length(pooled_length(n, 2, 2), 2, 2); }

/// Zero-padded "same" 1-D convolution over rows. `weight` is laid out as
/// [kernel * d_in x d_out]: rows [k*d_in, (k+1)*d_in) hold tap k, and tap
/// kernel/2 is aligned with the output frame.
inline Tensor conv1d_same(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t kernel) {
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (weight.rank() != 2 || weight.dim(0) != kernel * d) {
    throw ShapeError("conv1d_same: weight " + shape_str(weight.shape()) + " does not fit kernel " +
                     std::to_string(kernel) + " over d=" + std::to_string(d));
  }
  const std::size_t pad = kernel / 2;
  Tensor padded = x;
  if (pad > 0) {
    Tensor z = Tensor::zeros({pad, d});
    padded = concat({z, x, z}, 0);
  }
  std::vector<Tensor> taps;
  taps.reserve(kernel);
  for (std::size_t k = 0; k < kernel; ++k) taps.push_back(slice(padded, 0, k, k + n));
  return add_bias(matmul(concat(taps, 1), weight), bias);
}

struct TemporalReducer {
  static constexpr std::size_t kKernel = 5;
  Tensor conv1_w, conv1_b, conv2_w, conv2_b;

  static TemporalReducer init(std::size_t d, Rng& rng) {
    TemporalReducer r;
    r.conv1_w = xavier_uniform(kKernel * d, d, rng);
    r.conv1_b = Tensor::zeros({d}, true);
    r.conv2_w = xavier_uniform(kKernel * d, d, rng);
    r.conv2_b = Tensor::zeros({d}, true);
    return r;
  }

  /// Both convolutions pass the centre frame through unchanged.
  static TemporalReducer identity(std::size_t d) {
    std::vector<double> w(kKernel * d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i) w[((kKernel / 2) * d + i) * d + i] = 1.0;
    TemporalReducer r;
    r.conv1_w = Tensor({kKernel * d, d}, w, true);
    r.conv1_b = Tensor::zeros({d}, true);
    r.conv2_w = Tensor({kKernel * d, d}, w, true);
    r.conv2_b = Tensor::zeros({d}, true);
    return r;
  }

  ParameterSet parameters() const {
    ParameterSet ps;
    ps.add("conv1.w", conv1_w);
    ps.add("conv1.b", conv1_b);
    ps.add("conv2.w", conv2_w);
    ps.add("conv2.b", conv2_b);
    return ps;
  }
};

inline FeatureSequence temporal_reduce(const FeatureSequence& x, const TemporalReducer& p) {
  Tensor h = conv1d_same(x.frames(), p.conv1_w, p.conv1_b, TemporalReducer::kKernel);
  h = max_pool_rows(h, 2, 2);
  h = conv1d_same(h, p.conv2_w, p.conv2_b, TemporalReducer::kKernel);
  h = max_pool_rows(h, 2, 2);
  return FeatureSequence(x.modality(), h);
}

// ---------------------------------------------------------------------------
// BiLSTM

struct LstmDirection {
  Tensor w_x;   // d x 4h, gate order i, f, g, o
  Tensor w_h;   // h x 4h
  Tensor bias;  // 4h
};

struct BiLstmParams {
  LstmDirection fwd, bwd;
  Tensor proj_w;  // 2h x d
  Tensor proj_b;  // d
  std::size_t hidden = 0;

  static std::size_t hidden_for(std::size_t d) { return d / 2 > 0 ? d / 2 : 1; }

  static BiLstmParams init(std::size_t d, Rng& rng) {
    BiLstmParams p;
    p.hidden = hidden_for(d);
    const std::size_t h = p.hidden;
    for (auto* dir : {&p.fwd, &p.bwd}) {
      dir->w_x = xavier_uniform(d, 4 * h, rng);
      dir->w_h = xavier_uniform(h, 4 * h, rng);
      dir->bias = Tensor::zeros({4 * h}, true);
    }
    p.proj_w = xavier_uniform(2 * h, d, rng);
    p.proj_b = Tensor::zeros({d}, true);
    return p;
  }

  static BiLstmParams zeros(std::size_t d) {
    BiLstmParams p;
    p.hidden = hidden_for(d);
    const std::size_t h = p.hidden;
    for (auto* dir : {&p.fwd, &p.bwd}) {
      dir->w_x = Tensor::zeros({d, 4 * h}, true);
      dir->w_h = Tensor::zeros({h, 4 * h}, true);
      dir->bias = Tensor::zeros({4 * h}, true);
    }
    p.proj_w = Tensor::zeros({2 * h, d}, true);
    p.proj_b = Tensor::zeros({d}, true);
    return p;
  }

  ParameterSet parameters() const {
    ParameterSet ps;
    ps.add("fwd.w_x", fwd.w_x);
    ps.add("fwd.w_h", fwd.w_h);
    ps.add("fwd.b", fwd.bias);
    ps.add("bwd.w_x", bwd.w_x);
    ps.add("bwd.w_h", bwd.w_h);
    ps.add("bwd.b", bwd.bias);
    ps.add("proj.w", proj_w);
    ps.add("proj.b", proj_b);
    return ps;
  }
};

namespace detail {

/// Runs one LSTM direction and returns hidden states as rows in time order.
inline Tensor lstm_pass(const Tensor& x, const LstmDirection& p, std::size_t h, bool reverse) {
  const std::size_t n = x.dim(0);
  Tensor pre = add_bias(matmul(x, p.w_x), p.bias);
  Tensor hs = Tensor::zeros({1, h});
  Tensor cs = Tensor::zeros({1, h});
  std::vector<Tensor> outs(n);
  for (std::size_t s = 0; s < n; ++s) {
    const std::size_t t = reverse ? n - 1 - s : s;
    Tensor gates = add(slice(pre, 0, t, t + 1), matmul(hs, p.w_h));
    Tensor i = sigmoid(slice(gates, 1, 0, h));
    Tensor f = sigmoid(slice(gates, 1, h, 2 * h));
    Tensor g = tanh(slice(gates, 1, 2 * h, 3 * h));
    Tensor o = sigmoid(slice(gates, 1, 3 * h, 4 * h));
    cs = add(mul(f, cs), mul(i, g));
    hs = mul(o, tanh(cs));
    outs[t] = hs;
  }
  return concat(outs, 0);
}

}  // namespace detail

inline FeatureSequence bilstm_forward(const FeatureSequence& x, const BiLstmParams& p) {
  if (p.fwd.w_x.dim(0) != x.d()) {
    throw ShapeError("bilstm_forward: params expect d=" + std::to_string(p.fwd.w_x.dim(0)) + ", input " +
                     shape_str(x.frames().shape()));
  }
  Tensor fw = detail::lstm_pass(x.frames(), p.fwd, p.hidden, false);
  Tensor bw = detail::lstm_pass(x.frames(), p.bwd, p.hidden, true);
  Tensor out = add_bias(matmul(concat({fw, bw}, 1), p.proj_w), p.proj_b);
  return FeatureSequence(x.modality(), out);
}

// ---------------------------------------------------------------------------
// Classifier heads

struct ClassifierHead {
  Tensor weight;  // d x (V + 1)
  Tensor bias;    // V + 1

  static ClassifierHead init(std::size_t d, std::size_t classes, Rng& rng) {
    return {xavier_uniform(d, classes, rng), Tensor::zeros({classes}, true)};
  }

  std::size_t classes() const { return weight.dim(1); }

  ParameterSet parameters() const {
    ParameterSet ps;
    ps.add("w", weight);
    ps.add("b", bias);
    return ps;
  }
};

inline GlossLogits classify(const FeatureSequence& x, const ClassifierHead& head, Branch branch) {
  if (head.weight.dim(0) != x.d()) {
    throw ShapeError("classify: head expects d=" + std::to_string(head.weight.dim(0)) + ", input " +
                     shape_str(x.frames().shape()));
  }
  return {add_bias(matmul(x.frames(), head.weight), head.bias), branch};
}

// ---------------------------------------------------------------------------
// Transformer encoder-decoder (pre-norm)

struct TransformerConfig {
  std::size_t input_dim = 0;  // feature width entering the stack
  std::size_t model_dim = 128;
  std::size_t heads = 4;
  std::size_t ff_dim = 256;
  std::size_t encoder_layers = 2;
  std::size_t decoder_layers = 2;
  std::size_t vocab = 0;  // target vocabulary including reserved ids
  double dropout = 0.1;
};

struct Linear {
  Tensor w, b;

  static Linear init(std::size_t in, std::size_t out, Rng& rng) {
    return {xavier_uniform(in, out, rng), Tensor::zeros({out}, true)};
  }
  Tensor operator()(const Tensor& x) const { return add_bias(matmul(x, w), b); }
};

struct LayerNormParams {
  Tensor gain, bias;

  static LayerNormParams init(std::size_t d) { return {Tensor::full({d}, 1.0, true), Tensor::zeros({d}, true)}; }
  Tensor operator()(const Tensor& x) const { return layer_norm(x, gain, bias); }
};

struct MultiHeadAttention {
  Linear q, k, v, o;
  std::size_t heads = 1;

  static MultiHeadAttention init(std::size_t d, std::size_t heads, Rng& rng) {
    MultiHeadAttention m;
    m.q = Linear::init(d, d, rng);
    m.k = Linear::init(d, d, rng);
    m.v = Linear::init(d, d, rng);
    m.o = Linear::init(d, d, rng);
    m.heads = heads;
    return m;
  }

  /// `mask`, when given, is added to every head's scores (0 or a large
  /// negative number).
  Tensor operator()(const Tensor& xq, const Tensor& xkv, const Tensor* mask) const {
    const std::size_t d = xq.dim(1);
    const std::size_t dh = d / heads;
    Tensor qa = q(xq), ka = k(xkv), va = v(xkv);
    std::vector<Tensor> outs;
    outs.reserve(heads);
    const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
    for (std::size_t h = 0; h < heads; ++h) {
      Tensor qh = slice(qa, 1, h * dh, (h + 1) * dh);
      Tensor kh = slice(ka, 1, h * dh, (h + 1) * dh);
      Tensor vh = slice(va, 1, h * dh, (h + 1) * dh);
      Tensor s = scale(matmul(qh, transpose(kh)), inv);
      if (mask) s = add(s, *mask);
      outs.push_back(matmul(softmax(s, 1), vh));
    }
    return o(heads == 1 ? outs.front() : concat(outs, 1));
  }
};

struct EncoderLayer {
  LayerNormParams ln1, ln2;
  MultiHeadAttention self_attn;
  Linear ff1, ff2;
};

struct DecoderLayer {
  LayerNormParams ln1, ln2, ln3;
  MultiHeadAttention self_attn, cross_attn;
  Linear ff1, ff2;
};

inline Tensor sinusoidal_positions(std::size_t n, std::size_t d) {
  std::vector<double> v(n * d);
  for (std::size_t pos = 0; pos < n; ++pos)
    for (std::size_t i = 0; i < d; ++i) {
      const double rate = std::pow(10000.0, static_cast<double>(2 * (i / 2)) / static_cast<double>(d));
      const double a = static_cast<double>(pos) / rate;
      v[pos * d + i] = (i % 2 == 0) ? std::sin(a) : std::cos(a);
    }
  return Tensor({n, d}, std::move(v));
}

inline Tensor causal_mask(std::size_t n) {
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) v[i * n + j] = -1e9;
  return Tensor({n, n}, std::move(v));
}

struct TransformerStack {
  TransformerConfig config;
  bool has_adapter = false;
  Linear adapter;
  Tensor embedding;  // vocab x model_dim
  std::vector<EncoderLayer> encoder;
  std::vector<DecoderLayer> decoder;
  LayerNormParams enc_norm, dec_norm;
  Linear out;

  static TransformerStack init(const TransformerConfig& c, Rng& rng) {
    if (c.heads == 0 || c.model_dim % c.heads != 0) {
      throw ShapeError("transformer: model_dim " + std::to_string(c.model_dim) + " not divisible by heads " +
                       std::to_string(c.heads));
    }
    if (c.vocab == 0 || c.input_dim == 0) throw ShapeError("transformer: input_dim and vocab must be positive");
    TransformerStack s;
    s.config = c;
    const std::size_t d = c.model_dim;
    s.has_adapter = c.input_dim != d;
    if (s.has_adapter) s.adapter = Linear::init(c.input_dim, d, rng);
    s.embedding = xavier_uniform(c.vocab, d, rng);
    for (std::size_t l = 0; l < c.encoder_layers; ++l) {
      EncoderLayer e;
      e.ln1 = LayerNormParams::init(d);
      e.self_attn = MultiHeadAttention::init(d, c.heads, rng);
      e.ln2 = LayerNormParams::init(d);
      e.ff1 = Linear::init(d, c.ff_dim, rng);
      e.ff2 = Linear::init(c.ff_dim, d, rng);
      s.encoder.push_back(std::move(e));
    }
    for (std::size_t l = 0; l < c.decoder_layers; ++l) {
      DecoderLayer e;
      e.ln1 = LayerNormParams::init(d);
      e.self_attn = MultiHeadAttention::init(d, c.heads, rng);
      e.ln2 = LayerNormParams::init(d);
      e.cross_attn = MultiHeadAttention::init(d, c.heads, rng);
      e.ln3 = LayerNormParams::init(d);
      e.ff1 = Linear::init(d, c.ff_dim, rng);
      e.ff2 = Linear::init(c.ff_dim, d, rng);
      s.decoder.push_back(std::move(e));
    }
    s.enc_norm = LayerNormParams::init(d);
    s.dec_norm = LayerNormParams::init(d);
    s.out = Linear::init(d, c.vocab, rng);
    return s;
  }

  ParameterSet parameters() const {
    ParameterSet ps;
    auto lin = [&](const std::string& n, const Linear& l) {
      ps.add(n + ".w", l.w);
      ps.add(n + ".b", l.b);
    };
    auto ln = [&](const std::string& n, const LayerNormParams& l) {
      ps.add(n + ".g", l.gain);
      ps.add(n + ".b", l.bias);
    };
    auto mha = [&](const std::string& n, const MultiHeadAttention& m) {
      lin(n + ".q", m.q);
      lin(n + ".k", m.k);
      lin(n + ".v", m.v);
      lin(n + ".o", m.o);
    };
    if (has_adapter) lin("adapter", adapter);
    ps.add("embedding", embedding);
    for (std::size_t l = 0; l < encoder.size(); ++l) {
      const std::string p = "enc" + std::to_string(l);
      ln(p + ".ln1", encoder[l].ln1);
      mha(p + ".self", encoder[l].self_attn);
      ln(p + ".ln2", encoder[l].ln2);
      lin(p + ".ff1", encoder[l].ff1);
      lin(p + ".ff2", encoder[l].ff2);
    }
    for (std::size_t l = 0; l < decoder.size(); ++l) {
      const std::string p = "dec" + std::to_string(l);
      ln(p + ".ln1", decoder[l].ln1);
      mha(p + ".self", decoder[l].self_attn);
      ln(p + ".ln2", decoder[l].ln2);
      mha(p + ".cross", decoder[l].cross_attn);
      ln(p + ".ln3", decoder[l].ln3);
      lin(p + ".ff1", decoder[l].ff1);
      lin(p + ".ff2", decoder[l].ff2);
    }
    ln("enc_norm", enc_norm);
    ln("dec_norm", dec_norm);
    lin("out", out);
    return ps;
  }

  /// Encoder memory for a source sequence. Positions are added after the
  /// adapter. `rng` enables dropout (training); nullptr disables it.
  Tensor encode(const Tensor& source, Rng* rng) const {
    if (source.rank() != 2 || source.dim(1) != config.input_dim) {
      throw ShapeError("transformer: source " + shape_str(source.shape()) + " does not have width " +
                       std::to_string(config.input_dim));
    }
    const double p = rng ? config.dropout : 0.0;
    Tensor x = has_adapter ? adapter(source) : source;
    x = add(x, sinusoidal_positions(x.dim(0), config.model_dim));
    if (rng) x = dropout(x, p, *rng);
    for (const auto& l : encoder) {
      Tensor h = l.ln1(x);
      Tensor a = l.self_attn(h, h, nullptr);
      x = add(x, rng ? dropout(a, p, *rng) : a);
      h = l.ln2(x);
      Tensor f = l.ff2(relu(l.ff1(h)));
      x = add(x, rng ? dropout(f, p, *rng) : f);
    }
    return enc_norm(x);
  }

  /// Logits for every prefix position (teacher forcing).
  Tensor decode(const Tensor& memory, const std::vector<std::size_t>& prefix, Rng* rng) const {
    if (prefix.empty()) throw ShapeError("transformer: empty target prefix");
    for (auto id : prefix) {
      if (id >= config.vocab) {
        throw DomainError("transformer: unknown token id " + std::to_string(id) + " (vocab " +
                          std::to_string(config.vocab) + ")");
      }
    }
    const double p = rng ? config.dropout : 0.0;
    const std::size_t m = prefix.size();
    Tensor y = scale(gather_rows(embedding, prefix), std::sqrt(static_cast<double>(config.model_dim)));
    y = add(y, sinusoidal_positions(m, config.model_dim));
    if (rng) y = dropout(y, p, *rng);
    Tensor mask = causal_mask(m);
    for (const auto& l : decoder) {
      Tensor h = l.ln1(y);
      Tensor a = l.self_attn(h, h, &mask);
      y = add(y, rng ? dropout(a, p, *rng) : a);
      h = l.ln2(y);
      Tensor c = l.cross_attn(h, memory, nullptr);
      y = add(y, rng ? dropout(c, p, *rng) : c);
      h = l.ln3(y);
      Tensor f = l.ff2(relu(l.ff1(h)));
      y = add(y, rng ? dropout(f, p, *rng) : f);
    }
    return out(dec_norm(y));
  }
};

inline Tensor transformer_translate(const FusedSequence& mm, const std::vector<std::size_t>& target_prefix,
                                    const TransformerStack& stack, Rng* rng = nullptr) {
  if (target_prefix.empty() || target_prefix.front() != kBos) {
    throw DomainError("transformer_translate: target prefix must start with BOS");
  }
  return stack.decode(stack.encode(mm.frames, rng), target_prefix, rng);
}

}  // namespace mmslr
