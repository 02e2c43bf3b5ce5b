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

#include "biflow/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace biflow {

namespace {

constexpr double kCoincidentDistance = 1e-10;

void check_coords(const Array& coords, const char* who) {
  if (coords.rank() != 2 || coords.shape[1] != 3) {
    throw std::invalid_argument(std::string(who) + ": coordinates must be [n x 3], got " + shape_str(coords));
  }
}

double dist2(const double* a, const double* b) {
  const double dx = a[0] - b[0];
  const double dy = a[1] - b[1];
  const double dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

}  // namespace

PointCloud::PointCloud(Array coords_in, Array feats_in) : coords(std::move(coords_in)), feats(std::move(feats_in)) {
  check_coords(coords, "PointCloud");
  if (feats.rows() != coords.rows()) {
    throw std::invalid_argument("PointCloud: coords " + shape_str(coords) + " and feats " + shape_str(feats) +
                                " must share their leading extent");
  }
}

FlowField::FlowField(Array vectors_in) : vectors(std::move(vectors_in)) {
  check_coords(vectors, "FlowField");
}

std::vector<std::size_t> furthest_point_sample(const Array& coords, std::size_t n_out, std::size_t seed_index) {
  check_coords(coords, "furthest_point_sample");
  const std::size_t n = coords.rows();
  if (n_out == 0 || n_out > n) {
    throw std::invalid_argument("furthest_point_sample: requested " + std::to_string(n_out) + " of " +
                                std::to_string(n) + " points");
  }
  if (seed_index >= n) {
    throw std::invalid_argument("furthest_point_sample: seed index " + std::to_string(seed_index) + " out of range");
  }
  const double* cp = coords.data.data();
  std::vector<std::size_t> picks;
  picks.reserve(n_out);
  picks.push_back(seed_index);
  std::vector<double> min_d2(n, std::numeric_limits<double>::infinity());
  std::vector<char> picked(n, 0);
  picked[seed_index] = 1;
  std::size_t last = seed_index;
  while (picks.size() < n_out) {
    double best = -1.0;
    std::size_t best_idx = n;
    for (std::size_t i = 0; i < n; ++i) {
      const double d2 = dist2(cp + 3 * i, cp + 3 * last);
      if (d2 < min_d2[i]) min_d2[i] = d2;
      // picked points are excluded so the result stays distinct even for
      // duplicated coordinates
      if (!picked[i] && min_d2[i] > best) {
        best = min_d2[i];
        best_idx = i;
      }
    }
    picks.push_back(best_idx);
    picked[best_idx] = 1;
    last = best_idx;
  }
  return picks;
}

NeighborIndex knn_group(const Array& queries, const Array& reference_coords, std::size_t k) {
  check_coords(queries, "knn_group queries");
  check_coords(reference_coords, "knn_group reference");
  const std::size_t g = queries.rows();
  const std::size_t n = reference_coords.rows();
  if (k == 0 || k > n) {
    throw std::invalid_argument("knn_group: k=" + std::to_string(k) + " with " + std::to_string(n) +
                                " reference points");
  }
  NeighborIndex out;
  out.groups = g;
  out.k = k;
  out.indices.resize(g * k);
  const double* qp = queries.data.data();
  const double* rp = reference_coords.data.data();
  std::vector<std::pair<double, std::size_t>> ranked(n);
  for (std::size_t q = 0; q < g; ++q) {
    for (std::size_t i = 0; i < n; ++i) ranked[i] = {dist2(qp + 3 * q, rp + 3 * i), i};
    std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(k), ranked.end());
    for (std::size_t j = 0; j < k; ++j) out.indices[q * k + j] = ranked[j].second;
  }
  return out;
}

NeighborIndex knn_group(const Array& queries, const PointCloud& reference, std::size_t k) {
  return knn_group(queries, reference.coords, k);
}

InterpPlan make_interp_plan(const Array& sparse_coords, const Array& dense_coords, std::size_t k) {
  const NeighborIndex nn = knn_group(dense_coords, sparse_coords, k);
  const std::size_t n_dense = dense_coords.rows();
  InterpPlan plan;
  plan.k = k;
  plan.indices.assign(n_dense * k, 0);
  plan.weights.assign(n_dense * k, 0.0);
  const double* dp = dense_coords.data.data();
  const double* sp = sparse_coords.data.data();
  for (std::size_t i = 0; i < n_dense; ++i) {
    const std::size_t nearest = nn.at(i, 0);
    const double d0 = std::sqrt(dist2(dp + 3 * i, sp + 3 * nearest));
    if (d0 < kCoincidentDistance) {
      // Inverse-distance weights are singular here; copy the coincident
      // point's feature exactly.
      for (std::size_t j = 0; j < k; ++j) plan.indices[i * k + j] = nearest;
      plan.weights[i * k] = 1.0;
      continue;
    }
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t src = nn.at(i, j);
      const double w = 1.0 / std::sqrt(dist2(dp + 3 * i, sp + 3 * src));
      plan.indices[i * k + j] = src;
      plan.weights[i * k + j] = w;
      total += w;
    }
    for (std::size_t j = 0; j < k; ++j) plan.weights[i * k + j] /= total;
  }
  return plan;
}

Array interpolate(const PointCloud& sparse, const Array& dense_coords, std::size_t k) {
  const InterpPlan plan = make_interp_plan(sparse.coords, dense_coords, k);
  return interp_rows(sparse.feats, plan.indices, plan.weights, plan.k);
}

Array warp(const Array& coords, const FlowField& flow) {
  check_coords(coords, "warp");
  if (flow.vectors.rows() != coords.rows()) {
    throw std::invalid_argument("warp: coords " + shape_str(coords) + " vs flow " + shape_str(flow.vectors));
  }
  return add(coords, flow.vectors);
}

}  // namespace biflow
