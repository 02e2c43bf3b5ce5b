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
#include <string>
#include <vector>

namespace biflow {

/// Dense row-major array of doubles. Shape extents must be positive and
/// data.size() must equal the product of the extents; the constructors
/// enforce this and every kernel preserves it.
struct Array {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Array() = default;
  explicit Array(std::vector<std::size_t> shape_in);  // zero-filled
  Array(std::vector<std::size_t> shape_in, std::vector<double> data_in);

  static Array scalar(double v);
  static Array identity(std::size_t n);

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  // Leading extent and the product of the remaining ones; most kernels
  // treat arrays as [rows x cols] matrices.
  std::size_t rows() const;
  std::size_t cols() const;

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols() + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols() + j]; }

  bool same_shape(const Array& other) const { return shape == other.shape; }
  bool all_finite() const;
};

std::string shape_str(const Array& a);
std::string shape_str(const std::vector<std::size_t>& shape);

// y[i][j] = sum_k x[i][k] * w[k][j] (+ bias[j]). Shapes [n x a], [a x b].
Array linear_map(const Array& x, const Array& w, const Array* bias = nullptr);

// Accumulating matrix products used by reverse-mode: out += a * b^T and
// out += a^T * b.
void matmul_nt_acc(const Array& a, const Array& b, Array& out);
void matmul_tn_acc(const Array& a, const Array& b, Array& out);

// Elementwise y = x if x >= 0 else slope * x. slope in [0, 1).
Array leaky_relu(const Array& x, double slope);

struct GroupMaxResult {
  Array values;                     // [groups x channels]
  std::vector<std::size_t> argmax;  // winning member index in [0, k), length groups*channels
};

// Max over the member axis of a [groups*k x channels] block (row-major
// grouping: member m of group g is row g*k + m). Ties go to the lowest
// member index.
GroupMaxResult group_max(const Array& values, std::size_t groups, std::size_t k);

Array gather_rows(const Array& x, const std::vector<std::size_t>& indices);
Array concat_cols(const std::vector<const Array*>& parts);
Array add(const Array& a, const Array& b);
Array sub(const Array& a, const Array& b);
Array scale(const Array& x, double c);

// Per output row r: sum_j weights[r*k+j] * x[indices[r*k+j]]. Weights are
// caller-normalized; this is the shared kernel behind inverse-distance
// interpolation.
Array interp_rows(const Array& x, const std::vector<std::size_t>& indices,
                  const std::vector<double>& weights, std::size_t k);

// sum_i ||row_i||_2 over a [n x c] array; also returns the row norms
// (needed by the backward pass; the gradient at a zero row is zero).
double sum_l2_rows(const Array& x, std::vector<double>* row_norms = nullptr);

}  // namespace biflow
