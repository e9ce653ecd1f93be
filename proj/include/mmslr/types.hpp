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

#include <cmath>
#include <string>
#include <utility>

#include "mmslr/tensor.hpp"

namespace mmslr {

enum class Modality { rgb, flow };

inline const char* to_string(Modality m) { return m == Modality::rgb ? "rgb" : "flow"; }

/// One modality's per-frame features, frames as rows (n x d).
class FeatureSequence {
 public:
  FeatureSequence() = default;
  FeatureSequence(Modality modality, Tensor frames) : modality_(modality), frames_(std::move(frames)) {
    if (frames_.rank() != 2) {
      throw ShapeError(std::string("FeatureSequence: frames must be n x d, got ") + shape_str(frames_.shape()));
    }
    for (double v : frames_.values()) {
      if (!std::isfinite(v)) throw DomainError("FeatureSequence: non-finite feature value");
    }
  }

  Modality modality() const { return modality_; }
  const Tensor& frames() const { return frames_; }
  std::size_t n() const { return frames_.dim(0); }
  std::size_t d() const { return frames_.dim(1); }

 private:
  Modality modality_ = Modality::rgb;
  Tensor frames_;
};

enum class FusionKind { cma, sum, rgb_only, flow_only };

/// Output of a feature-level fusion operator (mm_i per frame).
struct FusedSequence {
  Tensor frames;
  FusionKind provenance = FusionKind::cma;

  std::size_t n() const { return frames.dim(0); }
  std::size_t d() const { return frames.dim(1); }
};

enum class Branch { fused, rgb, flow };

inline const char* to_string(Branch b) {
  switch (b) {
    case Branch::fused: return "fused";
    case Branch::rgb: return "rgb";
    case Branch::flow: return "flow";
  }
  return "?";
}

/// Per-timestep unnormalized scores, T x (V + 1); class 0 is the CTC blank.
struct GlossLogits {
  Tensor scores;
  Branch branch = Branch::fused;

  std::size_t steps() const { return scores.dim(0); }
  std::size_t classes() const { return scores.dim(1); }
};

inline constexpr std::size_t kBlank = 0;

// Reserved translation-vocabulary ids.
inline constexpr std::size_t kPad = 0;
inline constexpr std::size_t kBos = 1;
inline constexpr std::size_t kEos = 2;
inline constexpr std::size_t kUnk = 3;

}  // namespace mmslr
