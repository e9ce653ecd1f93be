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

// Checkpoint container (little-endian):
//
//   magic "MMCK" | u32 version (1) | u32 kind (1 = slr, 2 = slt)
//   u64 config hash
//   u32 config length | config JSON bytes
//   u32 tensor count
//   per tensor: u32 name length | name | u32 rank | u32 dims[rank] | f64 values
//
// The config hash is FNV-1a over the compact JSON of {kind, architecture,
// vocab}; it must match the hash recomputed from the stored config and, at
// evaluation, the one derived from the dataset being evaluated.

#pragma once

#include <bit>
#include <cstdint>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "mmslr/config.hpp"
#include "mmslr/data.hpp"
#include "mmslr/slr.hpp"
#include "mmslr/slt.hpp"

namespace mmslr {

class ConfigMismatch : public Error {
 public:
  using Error::Error;
};

inline constexpr char kCheckpointMagic[4] = {'M', 'M', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline nlohmann::json slr_architecture(std::size_t dim, std::size_t classes, FusionMode mode) {
  return {{"dim", dim}, {"classes", classes}, {"fusion", to_string(mode)}};
}

inline nlohmann::json slt_architecture(std::size_t dim, std::size_t vocab, const TrainConfig& c) {
  return {{"dim", dim},
          {"vocab", vocab},
          {"fusion", to_string(c.fusion)},
          {"model_dim", c.model_dim},
          {"heads", c.heads},
          {"ff_dim", c.ff_dim},
          {"encoder_layers", c.encoder_layers},
          {"decoder_layers", c.decoder_layers}};
}

inline std::uint64_t config_hash(Task kind, const nlohmann::json& architecture, const VocabularyMap& vocab) {
  nlohmann::json j{{"kind", to_string(kind)}, {"architecture", architecture}, {"vocab", vocab.to_json()}};
  return fnv1a64(j.dump());
}

struct Checkpoint {
  Task kind = Task::slr;
  std::uint64_t hash = 0;
  nlohmann::json config;  // {kind, architecture, vocab, train}
  std::vector<std::pair<std::string, Tensor>> tensors;

  VocabularyMap vocab() const { return VocabularyMap::from_json(config.at("vocab")); }
  TrainConfig train_config() const { return TrainConfig::from_json(config.at("train")); }
  const nlohmann::json& architecture() const { return config.at("architecture"); }
};

namespace detail {

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class ByteReader {
 public:
  ByteReader(const std::string& b, std::string origin) : bytes_(b), origin_(std::move(origin)) {}
  const unsigned char* take(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw FormatError(origin_ + ": truncated checkpoint");
    auto* p = reinterpret_cast<const unsigned char*>(bytes_.data()) + pos_;
    pos_ += n;
    return p;
  }
  std::uint32_t u32() { return get_u32(take(4)); }
  std::uint64_t u64() {
    const unsigned char* p = take(8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
  }
  std::string str(std::size_t n) {
    const unsigned char* p = take(n);
    return std::string(reinterpret_cast<const char*>(p), n);
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_checkpoint(const Checkpoint& ck) {
  std::string out(kCheckpointMagic, 4);
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u32(out, ck.kind == Task::slr ? 1 : 2);
  detail::put_u64(out, ck.hash);
  const std::string cfg = ck.config.dump();
  detail::put_u32(out, static_cast<std::uint32_t>(cfg.size()));
  out += cfg;
  detail::put_u32(out, static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto& [name, t] : ck.tensors) {
    detail::put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    detail::put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (auto e : t.shape()) detail::put_u32(out, static_cast<std::uint32_t>(e));
    for (double v : t.values()) detail::put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

inline Checkpoint decode_checkpoint(const std::string& bytes, const std::string& origin = "<memory>") {
  detail::ByteReader r(bytes, origin);
  const unsigned char* magic = r.take(4);
  if (!std::equal(kCheckpointMagic, kCheckpointMagic + 4, reinterpret_cast<const char*>(magic))) {
    throw FormatError(origin + ": bad magic");
  }
  if (auto v = r.u32(); v != kCheckpointVersion) throw FormatError(origin + ": unsupported version " + std::to_string(v));
  Checkpoint ck;
  const std::uint32_t kind = r.u32();
  if (kind != 1 && kind != 2) throw FormatError(origin + ": unknown model kind " + std::to_string(kind));
  ck.kind = kind == 1 ? Task::slr : Task::slt;
  ck.hash = r.u64();
  try {
    ck.config = nlohmann::json::parse(r.str(r.u32()));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(origin + ": bad config section: " + e.what());
  }
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str(r.u32());
    Shape shape(r.u32());
    for (auto& e : shape) e = r.u32();
    std::vector<double> v(shape_numel(shape));
    for (auto& e : v) e = std::bit_cast<double>(r.u64());
    ck.tensors.emplace_back(std::move(name), Tensor(shape, std::move(v), true));
  }
  if (!r.done()) throw FormatError(origin + ": trailing bytes");
  const std::uint64_t recomputed = config_hash(ck.kind, ck.architecture(), ck.vocab());
  if (recomputed != ck.hash) throw FormatError(origin + ": config hash does not match stored config");
  return ck;
}

inline void write_checkpoint(const Checkpoint& ck, const fs::path& path) { detail::write_file(path, encode_checkpoint(ck)); }

inline Checkpoint read_checkpoint(const fs::path& path) {
  return decode_checkpoint(detail::read_file(path), path.string());
}

inline Checkpoint make_checkpoint(Task kind, const nlohmann::json& architecture, const VocabularyMap& vocab,
                                  const TrainConfig& train, const ParameterSet& params) {
  Checkpoint ck;
  ck.kind = kind;
  ck.hash = config_hash(kind, architecture, vocab);
  ck.config = {{"kind", to_string(kind)}, {"architecture", architecture}, {"vocab", vocab.to_json()}, {"train", train.to_json()}};
  for (const auto& p : params.items()) ck.tensors.emplace_back(p.name, p.tensor);
  return ck;
}

inline Checkpoint make_checkpoint(const SlrModel& m, const VocabularyMap& vocab, const TrainConfig& train) {
  return make_checkpoint(Task::slr, slr_architecture(m.dim, m.classes, m.mode), vocab, train, m.params);
}

inline Checkpoint make_checkpoint(const SltModel& m, const VocabularyMap& vocab, const TrainConfig& train) {
  return make_checkpoint(Task::slt, slt_architecture(m.dim, m.transformer.config.vocab, train), vocab, train, m.params);
}

/// Copies stored values into `params`; names and shapes must match exactly.
inline void load_parameters(ParameterSet& params, const Checkpoint& ck) {
  std::map<std::string, const Tensor*> stored;
  for (const auto& [n, t] : ck.tensors) stored[n] = &t;
  if (stored.size() != params.items().size()) {
    throw ConfigMismatch("checkpoint holds " + std::to_string(stored.size()) + " tensors, model expects " +
                         std::to_string(params.items().size()));
  }
  for (auto& p : params.items()) {
    auto it = stored.find(p.name);
    if (it == stored.end()) throw ConfigMismatch("checkpoint lacks parameter '" + p.name + "'");
    if (it->second->shape() != p.tensor.shape()) {
      throw ConfigMismatch("parameter '" + p.name + "' has shape " + shape_str(it->second->shape()) + ", model expects " +
                           shape_str(p.tensor.shape()));
    }
    p.tensor.mutable_values() = it->second->values();
  }
}

inline SlrModel restore_slr(const Checkpoint& ck) {
  if (ck.kind != Task::slr) throw ConfigMismatch("checkpoint holds a translation model");
  const auto& a = ck.architecture();
  SlrModel m = SlrModel::init(a.at("dim").get<std::size_t>(), a.at("classes").get<std::size_t>(),
                              parse_fusion_mode(a.at("fusion").get<std::string>()), 0);
  load_parameters(m.params, ck);
  return m;
}

inline SltModel restore_slt(const Checkpoint& ck) {
  if (ck.kind != Task::slt) throw ConfigMismatch("checkpoint holds a recognition model");
  const auto& a = ck.architecture();
  TrainConfig c = ck.train_config();
  c.fusion = parse_fusion_mode(a.at("fusion").get<std::string>());
  c.model_dim = a.at("model_dim").get<std::size_t>();
  c.heads = a.at("heads").get<std::size_t>();
  c.ff_dim = a.at("ff_dim").get<std::size_t>();
  c.encoder_layers = a.at("encoder_layers").get<std::size_t>();
  c.decoder_layers = a.at("decoder_layers").get<std::size_t>();
  SltModel m = SltModel::init(a.at("dim").get<std::size_t>(), a.at("vocab").get<std::size_t>(), c);
  load_parameters(m.params, ck);
  return m;
}

}  // namespace mmslr
