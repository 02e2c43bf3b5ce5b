// Copyright (c) 2026 The biflow Authors
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

#include <cstdint>
#include <string>
#include <vector>

namespace biflow {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

// Random-instance equivalence of the two embedding forms: the decomposed
// kernel against the direct kernel with row-partitioned weights, max abs
// difference <= 1e-10 in double precision.
std::vector<CheckResult> run_equivalence_suite(std::uint64_t seed, std::size_t instances);

// Finite-difference gradient checks of every layer (<= 1e-4 relative
// error) and of the multi-level loss through a small full network on a
// 32-point pair (<= 1e-3), eps = 1e-5.
std::vector<CheckResult> run_gradient_suite(std::uint64_t seed);

}  // namespace biflow
