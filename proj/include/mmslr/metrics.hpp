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

// Greedy CTC decoding, word error rate and corpus BLEU.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "mmslr/types.hpp"

namespace mmslr {

using GlossSequence = std::vector<std::size_t>;

/// Per-step argmax, collapse adjacent repeats, then drop blanks.
inline GlossSequence greedy_ctc_decode(const GlossLogits& logits) {
  const std::size_t T = logits.steps(), C = logits.classes();
  const auto& v = logits.scores.values();
  GlossSequence out;
  std::size_t prev = kBlank;
  for (std::size_t t = 0; t < T; ++t) {
    const double* row = v.data() + t * C;
    const std::size_t best = static_cast<std::size_t>(std::max_element(row, row + C) - row);
    if (best != kBlank && best != prev) out.push_back(best);
    prev = best;
  }
  return out;
}

struct EditCounts {
  std::size_t substitutions = 0, deletions = 0, insertions = 0, reference_length = 0;

  std::size_t errors() const { return substitutions + deletions + insertions; }
  EditCounts& operator+=(const EditCounts& o) {
    substitutions += o.substitutions;
    deletions += o.deletions;
    insertions += o.insertions;
    reference_length += o.reference_length;
    return *this;
  }
};

/// Unit-cost Levenshtein alignment of hyp against ref. Among optimal
/// alignments, the backtrace prefers substitution, then deletion, then
/// insertion.
template <typename T>
EditCounts edit_counts(const std::vector<T>& hyp, const std::vector<T>& ref) {
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<std::size_t> D((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return D[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t diag = at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      at(i, j) = std::min({diag, at(i - 1, j) + 1, at(i, j - 1) + 1});
    }
  EditCounts c;
  c.reference_length = n;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const bool match = ref[i - 1] == hyp[j - 1];
      if (at(i, j) == at(i - 1, j - 1) + (match ? 0 : 1)) {
        if (!match) ++c.substitutions;
        --i;
        --j;
        continue;
      }
    }
    if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      ++c.deletions;
      --i;
    } else {
      ++c.insertions;
      --j;
    }
  }
  return c;
}

struct WerResult {
  double wer = 0.0;  // percent, unclamped
  EditCounts counts;
};

inline WerResult wer_from_counts(const EditCounts& c) {
  if (c.reference_length == 0) throw DomainError("wer: empty reference");
  return {100.0 * static_cast<double>(c.errors()) / static_cast<double>(c.reference_length), c};
}

inline WerResult wer(const GlossSequence& hyp, const GlossSequence& ref) {
  if (ref.empty()) throw DomainError("wer: empty reference");
  return wer_from_counts(edit_counts(hyp, ref));
}

struct BleuScores {
  std::array<double, 4> bleu{};  // bleu[k-1] is BLEU-k, percent
};

/// Corpus BLEU-1..BLEU-max_n with uniform weights and the standard brevity
/// penalty. With `smooth`, orders >= 2 use add-one counts.
template <typename T>
BleuScores bleu(const std::vector<std::vector<T>>& hyps, const std::vector<std::vector<T>>& refs,
                std::size_t max_n = 4, bool smooth = false) {
  if (hyps.empty()) throw DomainError("bleu: empty corpus");
  if (hyps.size() != refs.size()) throw ShapeError("bleu: hypothesis and reference counts differ");
  if (max_n == 0 || max_n > 4) throw DomainError("bleu: max_n must be in [1, 4]");
  std::array<double, 4> matched{}, total{};
  double hyp_len = 0, ref_len = 0;
  for (std::size_t s = 0; s < hyps.size(); ++s) {
    const auto& h = hyps[s];
    const auto& r = refs[s];
    hyp_len += static_cast<double>(h.size());
    ref_len += static_cast<double>(r.size());
    for (std::size_t n = 1; n <= max_n; ++n) {
      std::map<std::vector<T>, std::size_t> hc, rc;
      for (std::size_t i = 0; i + n <= h.size(); ++i) ++hc[std::vector<T>(h.begin() + i, h.begin() + i + n)];
      for (std::size_t i = 0; i + n <= r.size(); ++i) ++rc[std::vector<T>(r.begin() + i, r.begin() + i + n)];
      for (const auto& [gram, cnt] : hc) {
        auto it = rc.find(gram);
        matched[n - 1] += static_cast<double>(it == rc.end() ? 0 : std::min(cnt, it->second));
        total[n - 1] += static_cast<double>(cnt);
      }
    }
  }
  BleuScores out;
  if (hyp_len == 0) return out;
  const double bp = hyp_len > ref_len ? 1.0 : std::exp(1.0 - ref_len / hyp_len);
  double log_sum = 0.0;
  bool zero = false;
  for (std::size_t n = 1; n <= max_n; ++n) {
    double m = matched[n - 1], t = total[n - 1];
    if (smooth && n >= 2) {
      m += 1.0;
      t += 1.0;
    }
    if (m <= 0.0 || t <= 0.0) zero = true;
    if (!zero) log_sum += std::log(m / t);
    out.bleu[n - 1] = zero ? 0.0 : 100.0 * bp * std::exp(log_sum / static_cast<double>(n));
  }
  return out;
}

/// Aggregate evaluation record (WER over a split; BLEU for translation).
struct MetricReport {
  double wer = 0.0;
  EditCounts counts;
  std::array<double, 4> bleu{};
  bool has_bleu = false;
  std::size_t sentences = 0;
  std::size_t exact_matches = 0;
};

}  // namespace mmslr
