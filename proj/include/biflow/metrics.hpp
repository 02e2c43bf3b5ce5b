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
#include <optional>
#include <string>
#include <vector>

#include "biflow/geometry.hpp"

namespace biflow {

/// Per-source-point visibility; true marks a non-occluded point.
struct EvalMask {
  std::vector<std::uint8_t> keep;

  static EvalMask all(std::size_t n) { return EvalMask{std::vector<std::uint8_t>(n, 1)}; }
  std::size_t size() const { return keep.size(); }
  std::size_t count() const;
};

struct EpeResult {
  double full = 0.0;              // mean over all points
  std::optional<double> masked;   // mean over non-occluded points; absent for an empty mask
};

EpeResult epe3d(const FlowField& pred, const FlowField& gt, const EvalMask* mask = nullptr);

struct ThresholdMetrics {
  std::optional<double> acc3ds;
  std::optional<double> acc3dr;
  std::optional<double> outliers3d;
};

// Fractions over non-occluded points of the three error predicates:
// strict EPE < 0.05 m or relative error < 5% (acc3ds), < 0.1 m or < 10%
// (acc3dr), > 0.3 m or > 10% (outliers3d). The relative error divides by
// max(||gt||, 1e-12).
ThresholdMetrics threshold_metrics(const FlowField& pred, const FlowField& gt, const EvalMask* mask = nullptr);

struct MetricReport {
  double epe3d_full = 0.0;
  std::optional<double> epe3d;
  std::optional<double> acc3ds;
  std::optional<double> acc3dr;
  std::optional<double> outliers3d;
  std::size_t points_full = 0;
  std::size_t points_masked = 0;

  // Single-line JSON record; absent metrics are omitted.
  std::string to_json_line() const;
};

MetricReport evaluate_flow(const FlowField& pred, const FlowField& gt, const EvalMask* mask = nullptr);

}  // namespace biflow
