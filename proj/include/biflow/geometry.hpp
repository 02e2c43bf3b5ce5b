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

#include <cstddef>
#include <vector>

#include "biflow/array.hpp"

namespace biflow {

/// Coordinates in meters plus per-point feature channels; the leading
/// extents must match.
struct PointCloud {
  Array coords;  // [n x 3]
  Array feats;   // [n x c]

  PointCloud() = default;
  PointCloud(Array coords_in, Array feats_in);

  std::size_t n() const { return coords.rows(); }
  std::size_t feature_width() const { return feats.cols(); }
};

/// Source frame S and target frame T; the point counts may differ.
struct FramePair {
  PointCloud source;
  PointCloud target;
};

/// Per-point 3D motion vectors, index-aligned with the owning cloud.
struct FlowField {
  Array vectors;  // [n x 3]

  FlowField() = default;
  explicit FlowField(Array vectors_in);

  std::size_t n() const { return vectors.rows(); }
};

/// G x K table of neighbor indices into a reference cloud, each row sorted
/// ascending by (distance, index).
struct NeighborIndex {
  std::size_t groups = 0;
  std::size_t k = 0;
  std::vector<std::size_t> indices;  // row-major

  std::size_t at(std::size_t g, std::size_t j) const { return indices[g * k + j]; }
};

// Greedy max-min subsampling. The first pick is seed_index; each later
// pick maximizes the minimum distance to all previous picks, ties to the
// lowest index. Exhaustive O(n * n_out); fine at desk scale.
std::vector<std::size_t> furthest_point_sample(const Array& coords, std::size_t n_out, std::size_t seed_index = 0);

NeighborIndex knn_group(const Array& queries, const Array& reference_coords, std::size_t k);
NeighborIndex knn_group(const Array& queries, const PointCloud& reference, std::size_t k);

/// Resolved inverse-distance interpolation stencil: per dense row, k source
/// indices with normalized weights. A dense point within 1e-10 m of its
/// nearest sparse point gets that single point with weight one, so
/// coincident points copy features exactly.
struct InterpPlan {
  std::size_t k = 0;
  std::vector<std::size_t> indices;
  std::vector<double> weights;
};

InterpPlan make_interp_plan(const Array& sparse_coords, const Array& dense_coords, std::size_t k);

// Inverse-distance weighted feature transfer onto dense_coords using the
// k nearest sparse points (k = 3 by default).
Array interpolate(const PointCloud& sparse, const Array& dense_coords, std::size_t k = 3);

// coords + flow, elementwise.
Array warp(const Array& coords, const FlowField& flow);

}  // namespace biflow
