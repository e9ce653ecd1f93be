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

// Umbrella header.

#pragma once

#include "mmslr/checkpoint.hpp"
#include "mmslr/commands.hpp"
#include "mmslr/config.hpp"
#include "mmslr/data.hpp"
#include "mmslr/fusion.hpp"
#include "mmslr/gradcheck.hpp"
#include "mmslr/losses.hpp"
#include "mmslr/metrics.hpp"
#include "mmslr/ops.hpp"
#include "mmslr/optim.hpp"
#include "mmslr/random.hpp"
#include "mmslr/seqnet.hpp"
#include "mmslr/slr.hpp"
#include "mmslr/slt.hpp"
#include "mmslr/tensor.hpp"
#include "mmslr/types.hpp"
#include "mmslr/verify.hpp"
