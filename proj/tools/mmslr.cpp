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

// mmslr: dataset generation, training, evaluation, fusion comparison and
// self-checks.
//
// Exit codes: 0 success, 1 a verification command found a failure,
// 2 bad usage or a runtime error (message on stderr).

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "mmslr/mmslr.hpp"

namespace {

using namespace mmslr;

fs::path data_root() {
  const char* env = std::getenv("MMSLR_DATA_DIR");
  return env && *env ? fs::path(env) : fs::path("data");
}

void write_report(const std::string& path, const std::string& jsonl) {
  if (path.empty()) return;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << jsonl;
}

// Flags that override the config file. Unset flags leave it alone.
struct TrainFlags {
  std::optional<std::string> task, fusion, kl_teacher;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs, batch_size, model_dim, heads, ff_dim, encoder_layers, decoder_layers;
  std::optional<double> alpha, beta, lr, dropout, label_smoothing;
  std::optional<bool> freeze_fusion_weights, freeze_flow_reduce;
  std::string config_file;

  void attach(CLI::App* app, bool with_task) {
    app->add_option("--config", config_file, "JSON config file (flags take precedence)")->check(CLI::ExistingFile);
    if (with_task) app->add_option("--task", task, "slr or slt")->check(CLI::IsMember({"slr", "slt"}));
    if (with_task) {
      app->add_option("--fusion", fusion, "cma, sum, ensemble, rgb_only or flow_only")
          ->check(CLI::IsMember({"cma", "sum", "ensemble", "rgb_only", "flow_only"}));
    }
    app->add_option("--alpha", alpha, "weight of KL(rgb branch || fused)");
    app->add_option("--beta", beta, "weight of KL(flow branch || fused)");
    app->add_option("--kl-teacher", kl_teacher, "fused or branch")->check(CLI::IsMember({"fused", "branch"}));
    app->add_option("--seed", seed, "seed for every random stream");
    app->add_option("--epochs", epochs);
    app->add_option("--batch-size", batch_size);
    app->add_option("--lr", lr);
    app->add_option("--dropout", dropout);
    app->add_option("--label-smoothing", label_smoothing);
    app->add_option("--model-dim", model_dim);
    app->add_option("--heads", heads);
    app->add_option("--ff-dim", ff_dim);
    app->add_option("--encoder-layers", encoder_layers);
    app->add_option("--decoder-layers", decoder_layers);
    app->add_flag("--freeze-fusion-weights", freeze_fusion_weights, "keep w1, w2, w3 at their initial values");
    app->add_flag("--freeze-flow-reduce", freeze_flow_reduce);
  }

  TrainConfig resolve() const {
    TrainConfig c;
    if (!config_file.empty()) {
      std::ifstream in(config_file);
      c.merge_json(nlohmann::json::parse(in));
    }
    if (task) c.task = parse_task(*task);
    if (fusion) c.fusion = parse_fusion_mode(*fusion);
    if (kl_teacher) c.kl_teacher = parse_kl_teacher(*kl_teacher);
    if (seed) c.seed = *seed;
    if (epochs) c.epochs = *epochs;
    if (batch_size) c.batch_size = *batch_size;
    if (model_dim) c.model_dim = *model_dim;
    if (heads) c.heads = *heads;
    if (ff_dim) c.ff_dim = *ff_dim;
    if (encoder_layers) c.encoder_layers = *encoder_layers;
    if (decoder_layers) c.decoder_layers = *decoder_layers;
    if (alpha) c.alpha = *alpha;
    if (beta) c.beta = *beta;
    if (lr) c.lr = *lr;
    if (dropout) c.dropout = *dropout;
    if (label_smoothing) c.label_smoothing = *label_smoothing;
    if (freeze_fusion_weights) c.freeze_fusion_weights = *freeze_fusion_weights;
    if (freeze_flow_reduce) c.freeze_flow_reduce = *freeze_flow_reduce;
    c.validate();
    return c;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-modal RGB/flow fusion for sign language recognition and translation"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "write a synthetic two-stream dataset");
  SyntheticTaskSpec spec;
  std::string gen_out, coupling = "independent";
  gen->add_option("--out", gen_out, "output directory (default $MMSLR_DATA_DIR/synthetic)");
  gen->add_option("--seed", spec.seed);
  gen->add_option("--train", spec.num_train);
  gen->add_option("--dev", spec.num_dev);
  gen->add_option("--test", spec.num_test);
  gen->add_option("--glosses", spec.glosses);
  gen->add_option("--frames-per-gloss", spec.frames_per_gloss);
  gen->add_option("--dim", spec.dim);
  gen->add_option("--noise", spec.noise);
  gen->add_option("--coupling", coupling)->check(CLI::IsMember({"independent", "xor"}));
  gen->add_option("--min-length", spec.min_length);
  gen->add_option("--max-length", spec.max_length);

  // train
  auto* train = app.add_subcommand("train", "train a recognition or translation model");
  TrainFlags train_flags;
  std::string train_manifest, train_ckpt, train_report;
  train_flags.attach(train, true);
  train->add_option("--manifest", train_manifest, "manifest (default $MMSLR_DATA_DIR/manifest.jsonl)");
  train->add_option("--out", train_ckpt, "checkpoint path");
  train->add_option("--report", train_report, "run record as JSON lines");

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on one split");
  std::string eval_ckpt, eval_manifest, eval_split = "test", eval_out;
  bool eval_force = false;
  eval->add_option("--ckpt", eval_ckpt)->required();
  eval->add_option("--manifest", eval_manifest);
  eval->add_option("--split", eval_split)->check(CLI::IsMember({"train", "dev", "test"}));
  eval->add_option("--out", eval_out, "metric report as JSON lines");
  eval->add_flag("--force", eval_force, "skip the config-hash check");

  // compare-fusion
  auto* cmp = app.add_subcommand("compare-fusion", "train every fusion mode over several seeds");
  TrainFlags cmp_flags;
  std::string cmp_manifest, cmp_out;
  std::size_t cmp_seeds = 5;
  cmp_flags.attach(cmp, false);
  cmp->add_option("--manifest", cmp_manifest);
  cmp->add_option("--seeds", cmp_seeds, "number of seeds, starting at --seed");
  cmp->add_option("--out", cmp_out, "table as JSON lines");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every differentiable composite");
  std::size_t gc_seeds = 10;
  double gc_tol = 1e-4;
  std::string gc_out;
  gc->add_option("--seeds", gc_seeds);
  gc->add_option("--tol", gc_tol);
  gc->add_option("--out", gc_out);

  // ctc-oracle
  auto* oracle = app.add_subcommand("ctc-oracle", "compare CTC against explicit path enumeration");
  std::size_t or_T = 6, or_vocab = 3, or_len = 3;
  double or_tol = 1e-9;
  std::string or_out;
  oracle->add_option("--max-frames", or_T);
  oracle->add_option("--max-vocab", or_vocab);
  oracle->add_option("--max-target", or_len);
  oracle->add_option("--tol", or_tol);
  oracle->add_option("--out", or_out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  auto manifest_or_default = [](const std::string& m) {
    return m.empty() ? data_root() / "manifest.jsonl" : fs::path(m);
  };

  try {
    if (*gen) {
      spec.coupling = parse_coupling(coupling);
      const fs::path dir = gen_out.empty() ? data_root() / "synthetic" : fs::path(gen_out);
      std::cout << "manifest=" << cmd_gen(spec, dir).string() << "\n";
      return 0;
    }
    if (*train) {
      const TrainConfig c = train_flags.resolve();
      RunRecord rec = cmd_train(c, manifest_or_default(train_manifest), train_ckpt);
      std::cout << rec.to_text();
      write_report(train_report, rec.to_jsonl());
      return 0;
    }
    if (*eval) {
      MetricReport r = cmd_eval(eval_ckpt, manifest_or_default(eval_manifest), parse_split(eval_split), eval_force);
      std::cout << to_text(r);
      write_report(eval_out, to_json(r).dump() + "\n");
      return 0;
    }
    if (*cmp) {
      const TrainConfig c = cmp_flags.resolve();
      auto rows = cmd_compare_fusion(manifest_or_default(cmp_manifest), c, cmp_seeds);
      std::cout << comparison_text(rows);
      write_report(cmp_out, comparison_jsonl(rows));
      return 0;
    }
    if (*gc) {
      auto results = gradcheck_suite(gc_seeds, gc_tol);
      std::cout << gradcheck_text(results, gc_tol);
      write_report(gc_out, gradcheck_jsonl(results));
      for (const auto& r : results)
        if (!r.passed) return 1;
      return 0;
    }
    if (*oracle) {
      CtcOracleReport r = ctc_oracle_sweep(or_T, or_vocab, or_len, or_tol);
      std::cout << "cases=" << r.cases << "\nfailures=" << r.failures << "\nmax_abs_diff=" << r.max_abs_diff << "\n";
      write_report(or_out, nlohmann::json{{"cases", r.cases}, {"failures", r.failures}, {"max_abs_diff", r.max_abs_diff}}
                               .dump() +
                               "\n");
      return r.failures == 0 && r.cases > 0 ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
