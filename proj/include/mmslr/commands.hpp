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

// Command bodies behind the `mmslr` tool. Each returns a value that can be
// rendered as key=value text or as JSON lines; the tool only parses flags.

#pragma once

#include <chrono>
#include <cmath>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mmslr/checkpoint.hpp"
#include "mmslr/config.hpp"
#include "mmslr/data.hpp"
#include "mmslr/slr.hpp"
#include "mmslr/slt.hpp"
#include "mmslr/verify.hpp"

namespace mmslr {

// ---------------------------------------------------------------------------
// Report rendering

inline nlohmann::json to_json(const MetricReport& r) {
  nlohmann::json j{{"wer", r.wer},
                   {"substitutions", r.counts.substitutions},
                   {"deletions", r.counts.deletions},
                   {"insertions", r.counts.insertions},
                   {"reference_length", r.counts.reference_length},
                   {"sentences", r.sentences},
                   {"exact_matches", r.exact_matches}};
  if (r.has_bleu) {
    for (std::size_t k = 0; k < 4; ++k) j["bleu" + std::to_string(k + 1)] = r.bleu[k];
  }
  return j;
}

inline std::string format_number(double v) {
  std::ostringstream os;
  os.precision(4);
  os << std::fixed << v;
  return os.str();
}

/// One key=value per line.
inline std::string to_text(const MetricReport& r) {
  std::ostringstream os;
  os << "wer=" << format_number(r.wer) << "\n"
     << "substitutions=" << r.counts.substitutions << "\n"
     << "deletions=" << r.counts.deletions << "\n"
     << "insertions=" << r.counts.insertions << "\n"
     << "reference_length=" << r.counts.reference_length << "\n";
  if (r.has_bleu) {
    for (std::size_t k = 0; k < 4; ++k) os << "bleu" << k + 1 << "=" << format_number(r.bleu[k]) << "\n";
  }
  os << "sentences=" << r.sentences << "\n"
     << "exact_matches=" << r.exact_matches << "\n";
  return os.str();
}

inline nlohmann::json to_json(const EpochRecord& e) {
  nlohmann::json j{{"epoch", e.epoch},
                   {"loss", e.loss.total},
                   {"l_ctc", e.loss.l_ctc},
                   {"l1", e.loss.l1},
                   {"l2", e.loss.l2},
                   {"l3", e.loss.l3},
                   {"l4", e.loss.l4},
                   {"skipped", e.skipped}};
  if (e.train_wer) j["train_wer"] = *e.train_wer;
  if (e.dev_wer) j["dev_wer"] = *e.dev_wer;
  if (e.dev_bleu4) j["dev_bleu4"] = *e.dev_bleu4;
  return j;
}

/// Result of a training command. `wall_seconds` appears in the text form
/// only, so the structured record of a rerun is byte-identical.
struct RunRecord {
  TrainConfig config;
  std::string manifest;
  std::size_t parameter_count = 0;
  std::vector<EpochRecord> epochs;
  MetricReport final_report;
  std::string final_split;
  double wall_seconds = 0.0;

  std::string to_jsonl() const {
    std::string out;
    out += nlohmann::json{{"record", "config"},
                          {"seed", config.seed},
                          {"manifest", manifest},
                          {"parameters", parameter_count},
                          {"config", config.to_json()}}
               .dump() +
           "\n";
    for (const auto& e : epochs) {
      nlohmann::json j = to_json(e);
      j["record"] = "epoch";
      out += j.dump() + "\n";
    }
    nlohmann::json f = to_json(final_report);
    f["record"] = "final";
    f["split"] = final_split;
    out += f.dump() + "\n";
    return out;
  }

  std::string to_text() const {
    std::ostringstream os;
    os << "task=" << to_string(config.task) << "\n"
       << "fusion=" << to_string(config.fusion) << "\n"
       << "seed=" << config.seed << "\n"
       << "epochs_run=" << epochs.size() << "\n"
       << "parameters=" << parameter_count << "\n"
       << "split=" << final_split << "\n"
       << mmslr::to_text(final_report) << "wall_seconds=" << format_number(wall_seconds) << "\n";
    return os.str();
  }
};

// ---------------------------------------------------------------------------
// Datasets

struct Dataset {
  std::vector<SampleManifest> records;
  VocabularyMap vocab;
  std::vector<Sample> train, dev, test;
  std::size_t dim = 0;

  const std::vector<Sample>& split(Split s) const {
    return s == Split::train ? train : (s == Split::dev ? dev : test);
  }
};

/// Reads a manifest and all of its feature files. The vocabulary is built
/// from the training split only.
inline Dataset load_dataset(const fs::path& manifest, bool require_ctc_feasible = true) {
  Dataset ds;
  ds.records = read_manifest(manifest);
  ds.vocab = build_vocab(ds.records);
  ds.train = load_samples(ds.records, ds.vocab, Split::train, require_ctc_feasible);
  ds.dev = load_samples(ds.records, ds.vocab, Split::dev, require_ctc_feasible);
  ds.test = load_samples(ds.records, ds.vocab, Split::test, require_ctc_feasible);
  for (const auto* part : {&ds.train, &ds.dev, &ds.test}) {
    for (const auto& s : *part) {
      if (ds.dim == 0) ds.dim = s.rgb.d();
      if (s.rgb.d() != ds.dim) {
        throw ShapeError("sample '" + s.id + "' has d=" + std::to_string(s.rgb.d()) + ", dataset uses d=" +
                         std::to_string(ds.dim));
      }
    }
  }
  if (ds.dim == 0) throw DomainError(manifest.string() + ": no samples");
  return ds;
}

// ---------------------------------------------------------------------------
// Commands

inline fs::path cmd_gen(const SyntheticTaskSpec& spec, const fs::path& out_dir) {
  return generate_synthetic(spec, out_dir);
}

struct TrainedSlr {
  SlrModel model;
  RunRecord record;
};

inline TrainedSlr train_slr_run(const Dataset& ds, const TrainConfig& config, const std::string& manifest_label) {
  const auto t0 = std::chrono::steady_clock::now();
  TrainedSlr out{SlrModel::init(ds.dim, ds.vocab.gloss.size(), config.fusion, config.seed), {}};
  out.model.apply_config(config);
  SlrTrainResult tr = train_slr(out.model, ds.train, ds.dev, config);
  RunRecord& rec = out.record;
  rec.config = config;
  rec.manifest = manifest_label;
  rec.parameter_count = out.model.params.count();
  rec.epochs = tr.epochs;
  const bool use_dev = !ds.dev.empty();
  rec.final_split = use_dev ? "dev" : "train";
  rec.final_report = slr_evaluate(out.model, use_dev ? ds.dev : ds.train).fused;
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

struct TrainedSlt {
  SltModel model;
  RunRecord record;
};

inline TrainedSlt train_slt_run(const Dataset& ds, const TrainConfig& config, const std::string& manifest_label,
                                std::size_t eval_every = 0) {
  const auto t0 = std::chrono::steady_clock::now();
  TrainedSlt out{SltModel::init(ds.dim, ds.vocab.words.size(), config), {}};
  out.model.apply_config(config);
  SltTrainResult tr = train_slt(out.model, ds.train, ds.dev, config, eval_every);
  RunRecord& rec = out.record;
  rec.config = config;
  rec.manifest = manifest_label;
  rec.parameter_count = out.model.params.count();
  rec.epochs = tr.epochs;
  const bool use_dev = !ds.dev.empty();
  rec.final_split = use_dev ? "dev" : "train";
  rec.final_report = slt_evaluate(out.model, use_dev ? ds.dev : ds.train, config.max_decode_len, config.bleu_smoothing);
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

/// Trains, writes the checkpoint to `ckpt` (when non-empty) and returns the
/// run record.
inline RunRecord cmd_train(const TrainConfig& config, const fs::path& manifest, const fs::path& ckpt) {
  config.validate();
  Dataset ds = load_dataset(manifest);
  if (config.task == Task::slr) {
    TrainedSlr t = train_slr_run(ds, config, manifest.filename().string());
    if (!ckpt.empty()) write_checkpoint(make_checkpoint(t.model, ds.vocab, config), ckpt);
    return t.record;
  }
  TrainedSlt t = train_slt_run(ds, config, manifest.filename().string());
  if (!ckpt.empty()) write_checkpoint(make_checkpoint(t.model, ds.vocab, config), ckpt);
  return t.record;
}

/// Evaluates a checkpoint on one split of a manifest. The dataset's
/// vocabulary and feature width must hash to the checkpoint's config hash
/// unless `force` is set.
inline MetricReport cmd_eval(const fs::path& ckpt_path, const fs::path& manifest, Split split, bool force = false) {
  Checkpoint ck = read_checkpoint(ckpt_path);
  Dataset ds = load_dataset(manifest, ck.kind == Task::slr);
  const auto& samples = ds.split(split);
  if (samples.empty()) throw DomainError(manifest.string() + ": split '" + to_string(split) + "' is empty");
  nlohmann::json arch = ck.architecture();
  arch["dim"] = ds.dim;
  if (ck.kind == Task::slr) {
    arch["classes"] = ds.vocab.gloss.size();
  } else {
    arch["vocab"] = ds.vocab.words.size();
  }
  if (!force && config_hash(ck.kind, arch, ds.vocab) != ck.hash) {
    throw ConfigMismatch("checkpoint " + ckpt_path.string() + " was trained with a different vocabulary or feature width than " +
                         manifest.string());
  }
  if (ck.kind == Task::slr) return slr_evaluate(restore_slr(ck), samples).fused;
  const TrainConfig c = ck.train_config();
  return slt_evaluate(restore_slt(ck), samples, c.max_decode_len, c.bleu_smoothing);
}

struct FusionComparisonRow {
  FusionMode mode = FusionMode::cma;
  std::vector<double> dev_wer;  // one per seed
  double mean = 0.0;
  double sd = 0.0;              // sample standard deviation
};

inline void summarize(FusionComparisonRow& row) {
  const double n = static_cast<double>(row.dev_wer.size());
  double s = 0;
  for (double w : row.dev_wer) s += w;
  row.mean = s / n;
  double v = 0;
  for (double w : row.dev_wer) v += (w - row.mean) * (w - row.mean);
  row.sd = row.dev_wer.size() > 1 ? std::sqrt(v / (n - 1)) : 0.0;
}

/// Trains every mode on seeds base.seed .. base.seed + seeds - 1 and
/// reports final dev WER (train WER when there is no dev split).
inline std::vector<FusionComparisonRow> compare_fusion(const Dataset& ds, const TrainConfig& base, std::size_t seeds,
                                                       const std::vector<FusionMode>& modes) {
  if (seeds == 0) throw DomainError("compare_fusion: need at least one seed");
  std::vector<FusionComparisonRow> rows;
  for (FusionMode m : modes) {
    FusionComparisonRow row;
    row.mode = m;
    for (std::size_t k = 0; k < seeds; ++k) {
      TrainConfig c = base;
      c.task = Task::slr;
      c.fusion = m;
      c.seed = base.seed + k;
      row.dev_wer.push_back(train_slr_run(ds, c, "").record.final_report.wer);
    }
    summarize(row);
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::vector<FusionComparisonRow> cmd_compare_fusion(const fs::path& manifest, const TrainConfig& base,
                                                           std::size_t seeds) {
  return compare_fusion(load_dataset(manifest), base, seeds,
                        {FusionMode::cma, FusionMode::sum, FusionMode::ensemble, FusionMode::rgb_only,
                         FusionMode::flow_only});
}

inline std::string comparison_text(const std::vector<FusionComparisonRow>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(10) << "mode" << std::right << std::setw(10) << "mean_wer" << std::setw(10) << "sd"
     << "\n";
  for (const auto& r : rows) {
    os << std::left << std::setw(10) << to_string(r.mode) << std::right << std::setw(10) << format_number(r.mean)
       << std::setw(10) << format_number(r.sd) << "\n";
  }
  return os.str();
}

inline std::string comparison_jsonl(const std::vector<FusionComparisonRow>& rows) {
  std::string out;
  for (const auto& r : rows) {
    out += nlohmann::json{{"mode", to_string(r.mode)}, {"dev_wer", r.dev_wer}, {"mean", r.mean}, {"sd", r.sd}}.dump() +
           "\n";
  }
  return out;
}

inline std::string gradcheck_text(const std::vector<GradCheckResult>& results, double tol) {
  std::ostringstream os;
  for (const auto& r : results) {
    os << (r.passed ? "PASS " : "FAIL ") << r.name << " max_rel_error=" << r.max_error << " tol=" << tol
       << " seeds=" << r.seeds << "\n";
  }
  return os.str();
}

inline std::string gradcheck_jsonl(const std::vector<GradCheckResult>& results) {
  std::string out;
  for (const auto& r : results) {
    out += nlohmann::json{{"composite", r.name}, {"max_rel_error", r.max_error}, {"seeds", r.seeds}, {"passed", r.passed}}
               .dump() +
           "\n";
  }
  return out;
}

}  // namespace mmslr
