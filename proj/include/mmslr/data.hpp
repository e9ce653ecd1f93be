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

// Feature files, manifests, vocabularies and the synthetic task generator.
//
// MMF1 feature file (little-endian):
//
//   offset  size      field
//   0       4         magic "MMF1"
//   4       4         u32 version (1)
//   8       4         u32 n (frames)
//   12      4         u32 d (feature width)
//   16      4*n*d     float32 values, row-major
//
// Manifest: one JSON object per line with fields id, rgb, flow, gloss
// (space-separated), translation (space-separated) and split. Feature paths
// are relative to the manifest's directory.

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "mmslr/losses.hpp"
#include "mmslr/random.hpp"
#include "mmslr/seqnet.hpp"
#include "mmslr/types.hpp"

namespace mmslr {

namespace fs = std::filesystem;

class FormatError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// MMF1

inline constexpr char kFeatureMagic[4] = {'M', 'M', 'F', '1'};
inline constexpr std::uint32_t kFeatureVersion = 1;

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed for " + path.string());
}

}  // namespace detail

/// Serializes an n x d matrix to MMF1 bytes. Values are narrowed to float32.
inline std::string encode_features(const Tensor& frames) {
  if (frames.rank() != 2) throw ShapeError("encode_features: expected n x d, got " + shape_str(frames.shape()));
  std::string out(kFeatureMagic, 4);
  detail::put_u32(out, kFeatureVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(frames.dim(0)));
  detail::put_u32(out, static_cast<std::uint32_t>(frames.dim(1)));
  out.reserve(16 + 4 * frames.numel());
  for (double v : frames.values()) {
    if (!std::isfinite(v)) throw FormatError("encode_features: non-finite value");
    detail::put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  return out;
}

inline Tensor decode_features(const std::string& bytes, const std::string& origin = "<memory>") {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 16) throw FormatError(origin + ": truncated header");
  if (!std::equal(kFeatureMagic, kFeatureMagic + 4, bytes.begin())) throw FormatError(origin + ": bad magic");
  const std::uint32_t version = detail::get_u32(p + 4);
  if (version != kFeatureVersion) throw FormatError(origin + ": unsupported version " + std::to_string(version));
  const std::uint64_t n = detail::get_u32(p + 8), d = detail::get_u32(p + 12);
  if (n == 0 || d == 0) throw FormatError(origin + ": empty matrix");
  const std::uint64_t need = 16 + 4 * n * d;
  if (bytes.size() < need) {
    throw FormatError(origin + ": truncated payload (" + std::to_string(bytes.size()) + " bytes, header needs " +
                      std::to_string(need) + ")");
  }
  if (bytes.size() > need) throw FormatError(origin + ": trailing bytes after payload");
  std::vector<double> v(n * d);
  for (std::size_t i = 0; i < v.size(); ++i) {
    const float f = std::bit_cast<float>(detail::get_u32(p + 16 + 4 * i));
    if (!std::isfinite(f)) throw FormatError(origin + ": non-finite value at index " + std::to_string(i));
    v[i] = f;
  }
  return Tensor({n, d}, std::move(v));
}

inline void write_feature_file(const FeatureSequence& seq, const fs::path& path) {
  detail::write_file(path, encode_features(seq.frames()));
}

inline FeatureSequence read_feature_file(const fs::path& path, Modality modality = Modality::rgb) {
  return FeatureSequence(modality, decode_features(detail::read_file(path), path.string()));
}

// ---------------------------------------------------------------------------
// Manifest

enum class Split { train, dev, test };

inline const char* to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::dev: return "dev";
    case Split::test: return "test";
  }
  return "?";
}

inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "dev") return Split::dev;
  if (s == "test") return Split::test;
  throw FormatError("unknown split '" + s + "'");
}

inline std::vector<std::string> split_words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

inline std::string join_words(const std::vector<std::string>& w) {
  std::string out;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (i) out += ' ';
    out += w[i];
  }
  return out;
}

struct SampleManifest {
  std::string id;
  fs::path rgb_path;   // absolute or relative to the manifest directory
  fs::path flow_path;
  std::vector<std::string> gloss;
  std::vector<std::string> translation;
  Split split = Split::train;
};

inline nlohmann::json to_json(const SampleManifest& m) {
  return nlohmann::json{{"id", m.id},
                        {"rgb", m.rgb_path.generic_string()},
                        {"flow", m.flow_path.generic_string()},
                        {"gloss", join_words(m.gloss)},
                        {"translation", join_words(m.translation)},
                        {"split", to_string(m.split)}};
}

inline std::string encode_manifest(const std::vector<SampleManifest>& records) {
  std::string out;
  for (const auto& r : records) out += to_json(r).dump() + "\n";
  return out;
}

/// Parses a manifest; relative feature paths are resolved against `base`.
inline std::vector<SampleManifest> parse_manifest(const std::string& text, const fs::path& base) {
  std::vector<SampleManifest> out;
  std::istringstream in(text);
  std::size_t lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      SampleManifest m;
      m.id = j.at("id").get<std::string>();
      m.rgb_path = j.at("rgb").get<std::string>();
      m.flow_path = j.at("flow").get<std::string>();
      if (m.rgb_path.is_relative()) m.rgb_path = base / m.rgb_path;
      if (m.flow_path.is_relative()) m.flow_path = base / m.flow_path;
      m.gloss = split_words(j.at("gloss").get<std::string>());
      m.translation = split_words(j.value("translation", std::string()));
      m.split = parse_split(j.value("split", std::string("train")));
      out.push_back(std::move(m));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("manifest line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline std::vector<SampleManifest> read_manifest(const fs::path& path) {
  return parse_manifest(detail::read_file(path), path.parent_path());
}

// ---------------------------------------------------------------------------
// Vocabulary

class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> reserved) : names_(std::move(reserved)) {
    for (std::size_t i = 0; i < names_.size(); ++i) ids_[names_[i]] = i;
  }

  std::size_t add(const std::string& name) {
    auto [it, inserted] = ids_.emplace(name, names_.size());
    if (inserted) names_.push_back(name);
    return it->second;
  }
  bool contains(const std::string& name) const { return ids_.count(name) > 0; }
  std::size_t id(const std::string& name) const {
    auto it = ids_.find(name);
    if (it == ids_.end()) throw DomainError("vocabulary: unknown entry '" + name + "'");
    return it->second;
  }
  const std::string& name(std::size_t id) const { return names_.at(id); }
  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  bool operator==(const Vocabulary& o) const { return names_ == o.names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::size_t> ids_;
};

/// Gloss ids start at 1 (0 is the CTC blank); translation ids reserve
/// pad/bos/eos/unk at 0..3.
struct VocabularyMap {
  Vocabulary gloss{{"<blank>"}};
  Vocabulary words{{"<pad>", "<bos>", "<eos>", "<unk>"}};

  std::vector<std::size_t> encode_gloss(const std::vector<std::string>& g) const {
    std::vector<std::size_t> out;
    for (const auto& s : g) {
      if (!gloss.contains(s)) throw DomainError("unknown gloss '" + s + "'");
      out.push_back(gloss.id(s));
    }
    return out;
  }
  std::vector<std::size_t> encode_words(const std::vector<std::string>& w) const {
    std::vector<std::size_t> out;
    for (const auto& s : w) out.push_back(words.contains(s) ? words.id(s) : kUnk);
    return out;
  }
  std::vector<std::string> decode_words(const std::vector<std::size_t>& ids) const {
    std::vector<std::string> out;
    for (auto id : ids) out.push_back(words.name(id));
    return out;
  }

  nlohmann::json to_json() const {
    return {{"gloss", gloss.names()}, {"words", words.names()}};
  }
  static VocabularyMap from_json(const nlohmann::json& j) {
    VocabularyMap v;
    v.gloss = Vocabulary(j.at("gloss").get<std::vector<std::string>>());
    v.words = Vocabulary(j.at("words").get<std::vector<std::string>>());
    return v;
  }
  bool operator==(const VocabularyMap& o) const { return gloss == o.gloss && words == o.words; }
};

namespace detail {

inline void add_by_frequency(Vocabulary& vocab, const std::map<std::string, std::size_t>& counts) {
  std::vector<std::pair<std::string, std::size_t>> items(counts.begin(), counts.end());
  std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  for (const auto& [name, c] : items) vocab.add(name);
}

}  // namespace detail

/// Ids by descending train-split frequency, ties broken lexicographically.
inline VocabularyMap build_vocab(const std::vector<SampleManifest>& records) {
  std::map<std::string, std::size_t> gloss_counts, word_counts;
  std::size_t train = 0;
  for (const auto& r : records) {
    if (r.split != Split::train) continue;
    ++train;
    for (const auto& g : r.gloss) ++gloss_counts[g];
    for (const auto& w : r.translation) ++word_counts[w];
  }
  if (train == 0 || gloss_counts.empty()) throw DomainError("build_vocab: empty training corpus");
  VocabularyMap v;
  detail::add_by_frequency(v.gloss, gloss_counts);
  detail::add_by_frequency(v.words, word_counts);
  return v;
}

// ---------------------------------------------------------------------------
// Samples

struct Sample {
  std::string id;
  FeatureSequence rgb, flow;
  std::vector<std::size_t> gloss;        // ids, no blanks
  std::vector<std::size_t> translation;  // ids, without BOS/EOS
  Split split = Split::train;
};

/// Pairs the two streams: a flow stream one frame short (consecutive-frame
/// flow) gets its final frame repeated; then both are right-padded by
/// repeating their final frame to a multiple of 4.
inline std::pair<FeatureSequence, FeatureSequence> align_streams(const Tensor& rgb, const Tensor& flow,
                                                                 const std::string& id = "") {
  if (rgb.dim(1) != flow.dim(1)) {
    throw ShapeError("sample " + id + ": rgb d=" + std::to_string(rgb.dim(1)) + " but flow d=" +
                     std::to_string(flow.dim(1)));
  }
  const std::size_t n = rgb.dim(0);
  auto extend = [](const Tensor& x, std::size_t rows) {
    const std::size_t have = x.dim(0), d = x.dim(1);
    if (have == rows) return x;
    std::vector<double> v(x.values());
    for (std::size_t r = have; r < rows; ++r) v.insert(v.end(), x.values().end() - static_cast<std::ptrdiff_t>(d), x.values().end());
    return Tensor({rows, d}, std::move(v));
  };
  Tensor f = flow;
  if (flow.dim(0) + 1 == n) {
    f = extend(flow, n);
  } else if (flow.dim(0) != n) {
    throw ShapeError("sample " + id + ": rgb has " + std::to_string(n) + " frames, flow has " +
                     std::to_string(flow.dim(0)));
  }
  const std::size_t padded = (n + 3) / 4 * 4;
  return {FeatureSequence(Modality::rgb, extend(rgb, padded)), FeatureSequence(Modality::flow, extend(f, padded))};
}

/// Reads the feature files of every record in `split` (all splits when
/// nullopt). With `require_ctc_feasible`, each gloss sequence must fit the
/// reduced length; the first offender is reported by id.
inline std::vector<Sample> load_samples(const std::vector<SampleManifest>& records, const VocabularyMap& vocab,
                                        std::optional<Split> split, bool require_ctc_feasible) {
  std::vector<Sample> out;
  for (const auto& r : records) {
    if (split && r.split != *split) continue;
    Sample s;
    s.id = r.id;
    s.split = r.split;
    auto rgb = decode_features(detail::read_file(r.rgb_path), r.rgb_path.string());
    auto flow = decode_features(detail::read_file(r.flow_path), r.flow_path.string());
    std::tie(s.rgb, s.flow) = align_streams(rgb, flow, r.id);
    try {
      s.gloss = vocab.encode_gloss(r.gloss);
    } catch (const DomainError& e) {
      throw DomainError("sample " + r.id + ": " + e.what());
    }
    s.translation = vocab.encode_words(r.translation);
    if (require_ctc_feasible) {
      if (s.gloss.empty()) throw DomainError("sample " + r.id + ": empty gloss sequence");
      const std::size_t T = reduced_length(s.rgb.n());
      if (!ctc_feasible(s.gloss, T)) {
        throw DomainError("sample " + r.id + ": gloss sequence needs " + std::to_string(ctc_min_frames(s.gloss)) +
                          " steps but reduced length is " + std::to_string(T));
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic two-modality task

enum class Coupling { independent, xor_ };

inline const char* to_string(Coupling c) { return c == Coupling::independent ? "independent" : "xor"; }

inline Coupling parse_coupling(const std::string& s) {
  if (s == "independent") return Coupling::independent;
  if (s == "xor") return Coupling::xor_;
  throw DomainError("unknown coupling '" + s + "'");
}

struct SyntheticTaskSpec {
  std::uint64_t seed = 0;
  std::size_t num_train = 20;
  std::size_t num_dev = 0;
  std::size_t num_test = 0;
  std::size_t glosses = 8;          // G
  std::size_t frames_per_gloss = 8;
  std::size_t dim = 16;             // d
  double noise = 0.3;               // sigma
  Coupling coupling = Coupling::independent;
  std::size_t min_length = 2;       // glosses per sample
  std::size_t max_length = 4;

  std::size_t side() const { return static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(glosses)))); }

  void validate() const {
    if (glosses < 2) throw DomainError("synthetic: need at least 2 glosses");
    if (coupling == Coupling::xor_ && side() * side() != glosses) {
      throw DomainError("synthetic: xor coupling needs a perfect-square gloss count, got " + std::to_string(glosses));
    }
    if (frames_per_gloss == 0 || dim == 0) throw DomainError("synthetic: frames_per_gloss and dim must be positive");
    if (min_length == 0 || min_length > max_length) throw DomainError("synthetic: invalid length range");
    if (num_train == 0) throw DomainError("synthetic: need at least one training sample");
    if (noise < 0) throw DomainError("synthetic: noise must be non-negative");
  }

  nlohmann::json to_json() const {
    return {{"seed", seed},         {"num_train", num_train},
            {"num_dev", num_dev},   {"num_test", num_test},
            {"glosses", glosses},   {"frames_per_gloss", frames_per_gloss},
            {"dim", dim},           {"noise", noise},
            {"coupling", to_string(coupling)}, {"min_length", min_length},
            {"max_length", max_length}};
  }
};

/// Prototype vectors of a task, keyed by stream. For independent coupling
/// each gloss g has its own rgb and flow prototype; for xor coupling gloss
/// g = a * side + b draws rgb prototype a and flow prototype b.
struct SyntheticPrototypes {
  std::vector<std::vector<double>> rgb, flow;

  std::size_t rgb_index(const SyntheticTaskSpec& s, std::size_t g) const {
    return s.coupling == Coupling::xor_ ? g / s.side() : g;
  }
  std::size_t flow_index(const SyntheticTaskSpec& s, std::size_t g) const {
    return s.coupling == Coupling::xor_ ? g % s.side() : g;
  }
};

inline SyntheticPrototypes make_prototypes(const SyntheticTaskSpec& s, Rng& rng) {
  const std::size_t count = s.coupling == Coupling::xor_ ? s.side() : s.glosses;
  SyntheticPrototypes p;
  for (auto* bank : {&p.rgb, &p.flow})
    for (std::size_t k = 0; k < count; ++k) {
      std::vector<double> v(s.dim);
      for (auto& e : v) e = rng.normal();
      bank->push_back(std::move(v));
    }
  return p;
}

inline std::string gloss_name(std::size_t g) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "G%02zu", g + 1);
  return buf;
}

inline std::string word_name(std::size_t g) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "w%02zu", g + 1);
  return buf;
}

/// Sentence for a gloss sequence: one word per gloss, with the first two
/// words swapped when the first gloss index is even.
inline std::vector<std::string> template_sentence(const std::vector<std::size_t>& glosses) {
  std::vector<std::string> words;
  for (auto g : glosses) words.push_back(word_name(g));
  if (glosses.size() >= 2 && glosses.front() % 2 == 0) std::swap(words[0], words[1]);
  return words;
}

struct SyntheticSample {
  std::string id;
  std::vector<std::size_t> glosses;  // 0-based gloss indices
  Tensor rgb;                        // n x d
  Tensor flow;                       // (n - 1) x d
  Split split = Split::train;
};

struct SyntheticDataset {
  SyntheticTaskSpec spec;
  SyntheticPrototypes prototypes;
  std::vector<SyntheticSample> samples;
};

/// Pure function of the spec.
inline SyntheticDataset synthesize(const SyntheticTaskSpec& spec) {
  spec.validate();
  SyntheticDataset ds;
  ds.spec = spec;
  Rng proto_rng(derive_seed(spec.seed, "prototypes"));
  ds.prototypes = make_prototypes(spec, proto_rng);
  Rng rng(derive_seed(spec.seed, "samples"));
  const std::size_t total = spec.num_train + spec.num_dev + spec.num_test;
  const std::size_t d = spec.dim;
  for (std::size_t i = 0; i < total; ++i) {
    SyntheticSample s;
    char buf[32];
    std::snprintf(buf, sizeof buf, "s%05zu", i);
    s.id = buf;
    s.split = i < spec.num_train ? Split::train : (i < spec.num_train + spec.num_dev ? Split::dev : Split::test);
    const std::size_t len = spec.min_length + rng.index(spec.max_length - spec.min_length + 1);
    for (std::size_t k = 0; k < len; ++k) s.glosses.push_back(rng.index(spec.glosses));
    const std::size_t n = len * spec.frames_per_gloss;
    std::vector<double> rgb(n * d), flow(n * d);
    for (std::size_t k = 0; k < len; ++k) {
      const auto& pr = ds.prototypes.rgb[ds.prototypes.rgb_index(spec, s.glosses[k])];
      const auto& pf = ds.prototypes.flow[ds.prototypes.flow_index(spec, s.glosses[k])];
      for (std::size_t f = 0; f < spec.frames_per_gloss; ++f) {
        const std::size_t row = k * spec.frames_per_gloss + f;
        for (std::size_t j = 0; j < d; ++j) {
          rgb[row * d + j] = static_cast<float>(pr[j] + spec.noise * rng.normal());
          flow[row * d + j] = static_cast<float>(pf[j] + spec.noise * rng.normal());
        }
      }
    }
    s.rgb = Tensor({n, d}, std::move(rgb));
    flow.resize((n - 1) * d);
    s.flow = n > 1 ? Tensor({n - 1, d}, std::move(flow)) : s.rgb;
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

/// Writes features under `dir/features/`, `dir/manifest.jsonl` and
/// `dir/task.json`. Returns the manifest path.
inline fs::path generate_synthetic(const SyntheticTaskSpec& spec, const fs::path& dir) {
  SyntheticDataset ds = synthesize(spec);
  std::vector<SampleManifest> records;
  for (const auto& s : ds.samples) {
    SampleManifest m;
    m.id = s.id;
    m.rgb_path = fs::path("features") / (s.id + ".rgb.mmf");
    m.flow_path = fs::path("features") / (s.id + ".flow.mmf");
    for (auto g : s.glosses) m.gloss.push_back(gloss_name(g));
    m.translation = template_sentence(s.glosses);
    m.split = s.split;
    detail::write_file(dir / m.rgb_path, encode_features(s.rgb));
    detail::write_file(dir / m.flow_path, encode_features(s.flow));
    records.push_back(std::move(m));
  }
  detail::write_file(dir / "task.json", spec.to_json().dump(2) + "\n");
  const fs::path manifest = dir / "manifest.jsonl";
  detail::write_file(manifest, encode_manifest(records));
  return manifest;
}

}  // namespace mmslr
