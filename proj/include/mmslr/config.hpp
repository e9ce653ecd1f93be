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

#pragma once

#include <array>
#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "mmslr/tensor.hpp"

namespace mmslr {

enum class FusionMode { cma, sum, ensemble, rgb_only, flow_only };
enum class KlTeacher { fused, branch };

inline const char* to_string(FusionMode m) {
  switch (m) {
    case FusionMode::cma: return "cma";
    case FusionMode::sum: return "sum";
    case FusionMode::ensemble: return "ensemble";
    case FusionMode::rgb_only: return "rgb_only";
    case FusionMode::flow_only: return "flow_only";
  }
  return "?";
}

inline FusionMode parse_fusion_mode(const std::string& s) {
  if (s == "cma") return FusionMode::cma;
  if (s == "sum") return FusionMode::sum;
  if (s == "ensemble") return FusionMode::ensemble;
  if (s == "rgb_only") return FusionMode::rgb_only;
  if (s == "flow_only") return FusionMode::flow_only;
  throw DomainError("unknown fusion mode '" + s + "'");
}

inline const char* to_string(KlTeacher t) { return t == KlTeacher::fused ? "fused" : "branch"; }

inline KlTeacher parse_kl_teacher(const std::string& s) {
  if (s == "fused") return KlTeacher::fused;
  if (s == "branch") return KlTeacher::branch;
  throw DomainError("unknown kl teacher '" + s + "'");
}

enum class Task { slr, slt };

inline const char* to_string(Task t) { return t == Task::slr ? "slr" : "slt"; }

inline Task parse_task(const std::string& s) {
  if (s == "slr") return Task::slr;
  if (s == "slt") return Task::slt;
  throw DomainError("unknown task '" + s + "'");
}

/// Everything that controls a training run. Fields marked "architecture"
/// feed the checkpoint config hash.
struct TrainConfig {
  Task task = Task::slr;
  std::uint64_t seed = 0;
  std::size_t epochs = 30;
  std::size_t batch_size = 4;
  double lr = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 5.0;

  // recognition
  double alpha = 1.0;
  double beta = 1.0;
  FusionMode fusion = FusionMode::cma;  // architecture
  KlTeacher kl_teacher = KlTeacher::fused;
  bool freeze_flow_reduce = false;
  std::array<double, 3> fusion_init{1.0, 0.1, 0.1};
  bool freeze_fusion_weights = false;
  bool stop_at_zero_train_wer = false;

  // translation (architecture unless noted)
  std::size_t model_dim = 128;
  std::size_t heads = 4;
  std::size_t ff_dim = 256;
  std::size_t encoder_layers = 2;
  std::size_t decoder_layers = 2;
  double dropout = 0.1;           // not architecture
  double label_smoothing = 0.1;   // not architecture
  std::size_t max_decode_len = 32;
  bool bleu_smoothing = true;

  void validate() const {
    if (epochs == 0 || batch_size == 0) throw DomainError("config: epochs and batch_size must be positive");
    if (!(lr > 0) || !(adam_eps > 0)) throw DomainError("config: lr and adam_eps must be positive");
    if (alpha < 0 || beta < 0) throw DomainError("config: alpha and beta must be non-negative");
    if (task == Task::slt && fusion == FusionMode::ensemble) {
      throw DomainError("config: ensemble fusion is not available for translation");
    }
    if (dropout < 0 || dropout >= 1) throw DomainError("config: dropout must be in [0, 1)");
    if (label_smoothing < 0 || label_smoothing >= 1) throw DomainError("config: label_smoothing must be in [0, 1)");
  }

  nlohmann::json to_json() const {
    return {{"task", to_string(task)},
            {"seed", seed},
            {"epochs", epochs},
            {"batch_size", batch_size},
            {"lr", lr},
            {"adam_beta1", adam_beta1},
            {"adam_beta2", adam_beta2},
            {"adam_eps", adam_eps},
            {"clip_norm", clip_norm},
            {"alpha", alpha},
            {"beta", beta},
            {"fusion", to_string(fusion)},
            {"kl_teacher", to_string(kl_teacher)},
            {"freeze_flow_reduce", freeze_flow_reduce},
            {"fusion_init", fusion_init},
            {"freeze_fusion_weights", freeze_fusion_weights},
            {"stop_at_zero_train_wer", stop_at_zero_train_wer},
            {"model_dim", model_dim},
            {"heads", heads},
            {"ff_dim", ff_dim},
            {"encoder_layers", encoder_layers},
            {"decoder_layers", decoder_layers},
            {"dropout", dropout},
            {"label_smoothing", label_smoothing},
            {"max_decode_len", max_decode_len},
            {"bleu_smoothing", bleu_smoothing}};
  }

  /// Overlays the fields present in `j`; unknown keys are rejected.
  void merge_json(const nlohmann::json& j) {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const std::string& k = it.key();
      const auto& v = it.value();
      if (k == "task") task = parse_task(v.get<std::string>());
      else if (k == "seed") seed = v.get<std::uint64_t>();
      else if (k == "epochs") epochs = v.get<std::size_t>();
      else if (k == "batch_size") batch_size = v.get<std::size_t>();
      else if (k == "lr") lr = v.get<double>();
      else if (k == "adam_beta1") adam_beta1 = v.get<double>();
      else if (k == "adam_beta2") adam_beta2 = v.get<double>();
      else if (k == "adam_eps") adam_eps = v.get<double>();
      else if (k == "clip_norm") clip_norm = v.get<double>();
      else if (k == "alpha") alpha = v.get<double>();
      else if (k == "beta") beta = v.get<double>();
      else if (k == "fusion") fusion = parse_fusion_mode(v.get<std::string>());
      else if (k == "kl_teacher") kl_teacher = parse_kl_teacher(v.get<std::string>());
      else if (k == "freeze_flow_reduce") freeze_flow_reduce = v.get<bool>();
      else if (k == "fusion_init") fusion_init = v.get<std::array<double, 3>>();
      else if (k == "freeze_fusion_weights") freeze_fusion_weights = v.get<bool>();
      else if (k == "stop_at_zero_train_wer") stop_at_zero_train_wer = v.get<bool>();
      else if (k == "model_dim") model_dim = v.get<std::size_t>();
      else if (k == "heads") heads = v.get<std::size_t>();
      else if (k == "ff_dim") ff_dim = v.get<std::size_t>();
      else if (k == "encoder_layers") encoder_layers = v.get<std::size_t>();
      else if (k == "decoder_layers") decoder_layers = v.get<std::size_t>();
      else if (k == "dropout") dropout = v.get<double>();
      else if (k == "label_smoothing") label_smoothing = v.get<double>();
      else if (k == "max_decode_len") max_decode_len = v.get<std::size_t>();
      else if (k == "bleu_smoothing") bleu_smoothing = v.get<bool>();
      else throw DomainError("config: unknown key '" + k + "'");
    }
  }

  static TrainConfig from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.merge_json(j);
    return c;
  }
};

}  // namespace mmslr
