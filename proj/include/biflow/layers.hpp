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
#include <utility>
#include <vector>

#include "biflow/geometry.hpp"
#include "biflow/tape.hpp"

namespace biflow {

/// A point cloud registered on a tape: coordinate and feature value ids.
struct TapeCloud {
  ValueId coords = 0;  // [n x 3]
  ValueId feats = 0;   // [n x c]
  std::size_t n = 0;
  std::size_t c = 0;
};

TapeCloud put_cloud(Tape& tape, const PointCloud& cloud);

/// Shared MLP applied per group member followed by channelwise max over the
/// group, PointNet style. `input_blocks` declares the concatenated block
/// widths the layer expects; their sum must equal the first weight's input
/// extent. The final linear layer is left unactivated when `activate_last`
/// is false (used by regression heads).
struct SetLayer {
  std::vector<Array> weights;  // each [in x out]
  std::vector<Array> biases;   // each [out]
  std::vector<std::size_t> input_blocks;
  double slope = 0.1;
  bool activate_last = true;

  std::size_t depth() const { return weights.size(); }
  std::size_t in_width() const;
  std::size_t out_width() const;
  void validate() const;
};

struct SetLayerIds {
  std::vector<ValueId> weights;
  std::vector<ValueId> biases;
};

SetLayerIds leaf_params(Tape& tape, const SetLayer& layer);

// Per-row MLP, no pooling. x is [rows x in_width].
ValueId mlp_apply(Tape& tape, ValueId x, const SetLayer& layer, const SetLayerIds& ids);

// Flattened grouped input: member m of group g is row g*k + m of a
// [n_groups*k x in_width] block. Returns [n_groups x out_width].
ValueId set_layer_apply(Tape& tape, ValueId groups, std::size_t n_groups, std::size_t k, const SetLayer& layer,
                        const SetLayerIds& ids);

// Convenience wrapper for the flattened grouped form (runs its own tape).
Array set_layer(const Array& groups, std::size_t n_groups, std::size_t k, const SetLayer& layer);

/// Bidirectional flow embedding weights. The naive form holds one matrix
/// W over the concatenated [offset, neighbor feature, center feature]
/// block; the decomposed form splits W by input rows into a position part
/// (rows [0,3)), a propagated-feature part (rows [3,3+C)) and a replicated
/// -feature part (rows [3+C,3+2C)). The two parameterizations carry the
/// same information and round-trip losslessly.
struct BfeLayer {
  std::size_t k = 0;      // neighbors grouped per point
  std::size_t c_in = 0;   // feature width C of both clouds
  std::size_t c_out = 0;  // output width C'
  double slope = 0.1;
  bool decomposed = false;
  Array w_full;               // [(3+2C) x C']
  Array w_pos, w_bi, w_rep;   // [3 x C'], [C x C'], [C x C']

  void validate() const;
};

BfeLayer make_naive_bfe(std::size_t k, std::size_t c_in, std::size_t c_out, Array w_full, double slope = 0.1);
BfeLayer make_decomposed_bfe(std::size_t k, std::size_t c_in, std::size_t c_out, Array w_pos, Array w_bi, Array w_rep,
                             double slope = 0.1);

struct BfeWeightTriple {
  Array w_pos, w_bi, w_rep;
};

// Row partition of the naive weight and its inverse.
BfeWeightTriple partition_bfe_weights(const Array& w_full, std::size_t c_in);
Array reconstitute_bfe_weights(const Array& w_pos, const Array& w_bi, const Array& w_rep);

struct BfeIds {
  // Exactly the stored parameterization is leafed; the other form is
  // derived on tape so gradients always reach the stored arrays.
  bool decomposed = false;
  ValueId w_full = 0;
  ValueId w_pos = 0, w_bi = 0, w_rep = 0;
};

BfeIds leaf_params(Tape& tape, const BfeLayer& layer);

// Bidirectional feature propagation, direct form: for every point of each
// cloud, group its k nearest points from the other cloud, run the shared
// MLP over [offset, other feature, own feature] and max-pool. Returns the
// augmented clouds for (p, q) in that order.
std::pair<TapeCloud, TapeCloud> bfp_naive(Tape& tape, const TapeCloud& p, const TapeCloud& q, const BfeLayer& layer,
                                          const BfeIds& ids);

// Decomposed form: feature transforms are applied once per point before
// grouping; only the offset transform runs per group member. Exactly
// equivalent to bfp_naive with the row-partitioned weights.
std::pair<TapeCloud, TapeCloud> bfp_decomposed(Tape& tape, const TapeCloud& p, const TapeCloud& q,
                                               const BfeLayer& layer, const BfeIds& ids);

// Unidirectional correlation: per source point, group k target points and
// pool the shared MLP over [offset, target feature, source feature].
ValueId flow_embedding(Tape& tape, const TapeCloud& p_aug, const TapeCloud& q_aug, std::size_t k,
                       const SetLayer& layer, const SetLayerIds& ids);

// Local aggregation over [neighbor offset, neighbor feature] around each
// center, a pared-down PointConv.
TapeCloud pointconv(Tape& tape, const TapeCloud& cloud, const std::vector<std::size_t>& centers, std::size_t k,
                    const SetLayer& layer, const SetLayerIds& ids);

// Inverse-distance interpolation of features and flow from the sparse
// level onto dense_coords. Coordinates are compile-time constants of the
// stencil; only the interpolated values are differentiable.
struct UpsampleResult {
  ValueId feats;
  ValueId flow;
};

UpsampleResult upsample(Tape& tape, const Array& sparse_coords, ValueId sparse_feats, ValueId sparse_flow,
                        const Array& dense_coords, std::size_t interp_k = 3);

// Residual flow regression: pointconv-style smoothing of the fused inputs
// over each warped point's k neighbors, then a per-point head to a 3-vector
// residual added onto the upsampled flow. The head must be 3-wide.
struct PredictResult {
  ValueId flow;    // [n x 3]
  ValueId smooth;  // [n x conv out] aggregation passed up the decoder
};

PredictResult predict_flow(Tape& tape, ValueId warped_coords, ValueId upsampled_flow, ValueId fused_inputs,
                           std::size_t k, const SetLayer& conv, const SetLayerIds& conv_ids, const SetLayer& head,
                           const SetLayerIds& head_ids);

}  // namespace biflow
