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
#include <functional>
#include <vector>

#include "biflow/array.hpp"

namespace biflow {

using ValueId = std::size_t;

enum class OpKind {
  kLeaf,
  kLinear,
  kLeakyRelu,
  kGroupMax,
  kGatherRows,
  kConcatCols,
  kConcatRows,
  kSliceRows,
  kAdd,
  kSub,
  kScale,
  kInterpRows,
  kSumL2Rows,
};

// Append-only reverse-mode record. Nodes form a DAG in append order
// (inputs always precede outputs); values are immutable once recorded.
// One tape per training step, built and swept on a single thread.
class Tape {
 public:
  ValueId leaf(Array value);

  ValueId linear(ValueId x, ValueId w);
  ValueId linear(ValueId x, ValueId w, ValueId bias);
  ValueId leaky_relu(ValueId x, double slope);
  ValueId group_max(ValueId x, std::size_t groups, std::size_t k);
  ValueId gather_rows(ValueId x, std::vector<std::size_t> indices);
  ValueId concat_cols(const std::vector<ValueId>& parts);
  ValueId concat_rows(const std::vector<ValueId>& parts);
  ValueId slice_rows(ValueId x, std::size_t start, std::size_t len);
  ValueId add(ValueId a, ValueId b);
  ValueId sub(ValueId a, ValueId b);
  ValueId scale(ValueId x, double c);
  ValueId interp_rows(ValueId x, std::vector<std::size_t> indices, std::vector<double> weights, std::size_t k);
  ValueId sum_l2_rows(ValueId x);

  const Array& value(ValueId id) const;
  std::size_t node_count() const { return nodes_.size(); }

  // Sweeps the chain rule backwards from a scalar-valued seed node.
  // Returns one gradient array per node, indexed by ValueId; nodes
  // unreachable from the seed keep zero gradients.
  std::vector<Array> backward(ValueId seed) const;

 private:
  struct Node {
    OpKind kind;
    std::vector<ValueId> inputs;
    Array value;
    double scalar_param = 0.0;           // activation slope / scale factor
    std::size_t groups = 0, k = 0;
    std::vector<std::size_t> indices;    // gather targets, interp table, group-max argmax
    std::vector<double> weights;         // interp weights, row norms for sum_l2
  };

  ValueId push(Node node);
  const Node& node(ValueId id) const;

  std::vector<Node> nodes_;
};

// Central finite differences against the tape gradients. `build` receives
// a fresh tape plus the input arrays, records the function, and reports
// the scalar seed node and the leaf ids of the inputs it registered.
struct GradCheckBuild {
  ValueId seed;
  std::vector<ValueId> inputs;
};

// Returns max over input coordinates of |a - n| / max(1e-8, |a| + |n|),
// where a is the tape gradient and n = (f(x+eps) - f(x-eps)) / (2 eps).
// eps must lie in [1e-7, 1e-3].
double grad_check(const std::function<GradCheckBuild(Tape&, const std::vector<Array>&)>& build,
                  const std::vector<Array>& inputs, double eps);

}  // namespace biflow
