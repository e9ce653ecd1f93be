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

// Small in-memory corpora shared by the model tests.

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "mmslr/data.hpp"

namespace mmslr::testing {

/// Synthetic samples with gloss ids g + 1 and word ids shifted past the
/// reserved tokens; streams go through the usual alignment.
inline std::vector<Sample> synthetic_samples(const SyntheticTaskSpec& spec, Split split = Split::train) {
  std::vector<Sample> out;
  for (const auto& s : synthesize(spec).samples) {
    if (s.split != split) continue;
    Sample x;
    x.id = s.id;
    x.split = s.split;
    std::tie(x.rgb, x.flow) = align_streams(s.rgb, s.flow, s.id);
    for (auto g : s.glosses) x.gloss.push_back(g + 1);
    for (const auto& w : template_sentence(s.glosses)) x.translation.push_back(kUnk + 1 + std::stoul(w.substr(1)) - 1);
    out.push_back(std::move(x));
  }
  return out;
}

class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    path_ = std::filesystem::temp_directory_path() /
            ("mmslr_" + std::string(info->test_suite_name()) + "_" + info->name());
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace mmslr::testing
