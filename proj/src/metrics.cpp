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

#include "biflow/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace biflow {

namespace {

void check_inputs(const FlowField& pred, const FlowField& gt, const EvalMask* mask) {
  if (pred.n() != gt.n()) {
    throw std::invalid_argument("metrics: prediction " + shape_str(pred.vectors) + " vs ground truth " +
                                shape_str(gt.vectors));
  }
  if (mask && mask->size() != pred.n()) {
    throw std::invalid_argument("metrics: mask length " + std::to_string(mask->size()) + " vs " +
                                std::to_string(pred.n()) + " points");
  }
}

double row_norm(const Array& a, std::size_t i) {
  const double x = a.data[3 * i], y = a.data[3 * i + 1], z = a.data[3 * i + 2];
  return std::sqrt(x * x + y * y + z * z);
}

double point_epe(const FlowField& pred, const FlowField& gt, std::size_t i) {
  const double dx = pred.vectors.data[3 * i] - gt.vectors.data[3 * i];
  const double dy = pred.vectors.data[3 * i + 1] - gt.vectors.data[3 * i + 1];
  const double dz = pred.vectors.data[3 * i + 2] - gt.vectors.data[3 * i + 2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::size_t EvalMask::count() const {
  std::size_t c = 0;
  for (std::uint8_t b : keep) c += (b != 0);
  return c;
}

EpeResult epe3d(const FlowField& pred, const FlowField& gt, const EvalMask* mask) {
  check_inputs(pred, gt, mask);
  const std::size_t n = pred.n();
  double total = 0.0, masked_total = 0.0;
  std::size_t masked_count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = point_epe(pred, gt, i);
    total += e;
    if (!mask || mask->keep[i]) {
      masked_total += e;
      ++masked_count;
    }
  }
  EpeResult r;
  r.full = total / static_cast<double>(n);
  if (masked_count > 0) r.masked = masked_total / static_cast<double>(masked_count);
  return r;
}

ThresholdMetrics threshold_metrics(const FlowField& pred, const FlowField& gt, const EvalMask* mask) {
  check_inputs(pred, gt, mask);
  const std::size_t n = pred.n();
  std::size_t used = 0, strict = 0, relaxed = 0, outliers = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (mask && !mask->keep[i]) continue;
    ++used;
    const double e = point_epe(pred, gt, i);
    const double rel = e / std::max(row_norm(gt.vectors, i), 1e-12);
    if (e < 0.05 || rel < 0.05) ++strict;
    if (e < 0.1 || rel < 0.1) ++relaxed;
    if (e > 0.3 || rel > 0.1) ++outliers;
  }
  ThresholdMetrics m;
  if (used > 0) {
    m.acc3ds = static_cast<double>(strict) / static_cast<double>(used);
    m.acc3dr = static_cast<double>(relaxed) / static_cast<double>(used);
    m.outliers3d = static_cast<double>(outliers) / static_cast<double>(used);
  }
  return m;
}

MetricReport evaluate_flow(const FlowField& pred, const FlowField& gt, const EvalMask* mask) {
  const EpeResult e = epe3d(pred, gt, mask);
  const ThresholdMetrics t = threshold_metrics(pred, gt, mask);
  MetricReport r;
  r.epe3d_full = e.full;
  r.epe3d = e.masked;
  r.acc3ds = t.acc3ds;
  r.acc3dr = t.acc3dr;
  r.outliers3d = t.outliers3d;
  r.points_full = pred.n();
  r.points_masked = mask ? mask->count() : pred.n();
  return r;
}

std::string MetricReport::to_json_line() const {
  std::ostringstream s;
  s << "{\"epe3d_full\":" << fmt(epe3d_full);
  if (epe3d) s << ",\"epe3d\":" << fmt(*epe3d);
  if (acc3ds) s << ",\"acc3ds\":" << fmt(*acc3ds);
  if (acc3dr) s << ",\"acc3dr\":" << fmt(*acc3dr);
  if (outliers3d) s << ",\"outliers3d\":" << fmt(*outliers3d);
  s << ",\"points_full\":" << points_full << ",\"points_masked\":" << points_masked << "}";
  return s.str();
}

}  // namespace biflow
