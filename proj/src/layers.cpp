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

#include "biflow/layers.hpp"

#include <numeric>
#include <stdexcept>
#include <string>

namespace biflow {

namespace {

// Row indices replicating each center k times, aligned with the flattened
// group layout.
std::vector<std::size_t> repeat_centers(std::size_t n_centers, std::size_t k) {
  std::vector<std::size_t> idx(n_centers * k);
  for (std::size_t g = 0; g < n_centers; ++g) {
    for (std::size_t j = 0; j < k; ++j) idx[g * k + j] = g;
  }
  return idx;
}

}  // namespace

TapeCloud put_cloud(Tape& tape, const PointCloud& cloud) {
  TapeCloud tc;
  tc.n = cloud.n();
  tc.c = cloud.feature_width();
  tc.coords = tape.leaf(cloud.coords);
  tc.feats = tape.leaf(cloud.feats);
  return tc;
}

std::size_t SetLayer::in_width() const { return weights.empty() ? 0 : weights.front().shape[0]; }

std::size_t SetLayer::out_width() const { return weights.empty() ? 0 : weights.back().shape[1]; }

void SetLayer::validate() const {
  if (weights.empty()) throw std::invalid_argument("SetLayer: at least one linear layer required");
  if (biases.size() != weights.size()) throw std::invalid_argument("SetLayer: weight/bias count mismatch");
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i].rank() != 2) throw std::invalid_argument("SetLayer: weights must be 2-d");
    if (biases[i].size() != weights[i].shape[1]) {
      throw std::invalid_argument("SetLayer: bias " + shape_str(biases[i]) + " does not match weight " +
                                  shape_str(weights[i]));
    }
    if (i > 0 && weights[i].shape[0] != weights[i - 1].shape[1]) {
      throw std::invalid_argument("SetLayer: layer extents do not chain, " + shape_str(weights[i - 1]) + " then " +
                                  shape_str(weights[i]));
    }
  }
  if (!input_blocks.empty()) {
    const std::size_t total = std::accumulate(input_blocks.begin(), input_blocks.end(), std::size_t{0});
    if (total != in_width()) {
      throw std::invalid_argument("SetLayer: declared input blocks sum to " + std::to_string(total) +
                                  " but the first weight expects " + std::to_string(in_width()));
    }
  }
}

SetLayerIds leaf_params(Tape& tape, const SetLayer& layer) {
  SetLayerIds ids;
  for (const Array& w : layer.weights) ids.weights.push_back(tape.leaf(w));
  for (const Array& b : layer.biases) ids.biases.push_back(tape.leaf(b));
  return ids;
}

ValueId mlp_apply(Tape& tape, ValueId x, const SetLayer& layer, const SetLayerIds& ids) {
  layer.validate();
  const std::size_t d = tape.value(x).cols();
  if (d != layer.in_width()) {
    throw std::invalid_argument("set layer: input width " + std::to_string(d) + " does not match declared layout " +
                                std::to_string(layer.in_width()));
  }
  ValueId h = x;
  for (std::size_t i = 0; i < layer.depth(); ++i) {
    h = tape.linear(h, ids.weights[i], ids.biases[i]);
    if (i + 1 < layer.depth() || layer.activate_last) h = tape.leaky_relu(h, layer.slope);
  }
  return h;
}

ValueId set_layer_apply(Tape& tape, ValueId groups, std::size_t n_groups, std::size_t k, const SetLayer& layer,
                        const SetLayerIds& ids) {
  const ValueId h = mlp_apply(tape, groups, layer, ids);
  return tape.group_max(h, n_groups, k);
}

Array set_layer(const Array& groups, std::size_t n_groups, std::size_t k, const SetLayer& layer) {
  Tape tape;
  const ValueId g = tape.leaf(groups);
  const SetLayerIds ids = leaf_params(tape, layer);
  return tape.value(set_layer_apply(tape, g, n_groups, k, layer, ids));
}

void BfeLayer::validate() const {
  if (k == 0 || c_in == 0 || c_out == 0) throw std::invalid_argument("BfeLayer: k, C and C' must be positive");
  const std::vector<std::size_t> full_shape{3 + 2 * c_in, c_out};
  if (decomposed) {
    if (w_pos.shape != std::vector<std::size_t>{3, c_out} || w_bi.shape != std::vector<std::size_t>{c_in, c_out} ||
        w_rep.shape != std::vector<std::size_t>{c_in, c_out}) {
      throw std::invalid_argument("BfeLayer: decomposed weights do not match C=" + std::to_string(c_in) +
                                  ", C'=" + std::to_string(c_out));
    }
  } else if (w_full.shape != full_shape) {
    throw std::invalid_argument("BfeLayer: naive weight " + shape_str(w_full) + " must be " + shape_str(full_shape));
  }
}

BfeLayer make_naive_bfe(std::size_t k, std::size_t c_in, std::size_t c_out, Array w_full, double slope) {
  BfeLayer layer;
  layer.k = k;
  layer.c_in = c_in;
  layer.c_out = c_out;
  layer.slope = slope;
  layer.decomposed = false;
  layer.w_full = std::move(w_full);
  layer.validate();
  return layer;
}

BfeLayer make_decomposed_bfe(std::size_t k, std::size_t c_in, std::size_t c_out, Array w_pos, Array w_bi, Array w_rep,
                             double slope) {
  BfeLayer layer;
  layer.k = k;
  layer.c_in = c_in;
  layer.c_out = c_out;
  layer.slope = slope;
  layer.decomposed = true;
  layer.w_pos = std::move(w_pos);
  layer.w_bi = std::move(w_bi);
  layer.w_rep = std::move(w_rep);
  layer.validate();
  return layer;
}

BfeWeightTriple partition_bfe_weights(const Array& w_full, std::size_t c_in) {
  if (w_full.rank() != 2 || w_full.shape[0] != 3 + 2 * c_in) {
    throw std::invalid_argument("partition_bfe_weights: " + shape_str(w_full) + " does not fit C=" +
                                std::to_string(c_in));
  }
  const std::size_t c_out = w_full.shape[1];
  auto rows = [&](std::size_t start, std::size_t len) {
    Array out({len, c_out});
    std::copy(w_full.data.begin() + static_cast<std::ptrdiff_t>(start * c_out),
              w_full.data.begin() + static_cast<std::ptrdiff_t>((start + len) * c_out), out.data.begin());
    return out;
  };
  return BfeWeightTriple{rows(0, 3), rows(3, c_in), rows(3 + c_in, c_in)};
}

Array reconstitute_bfe_weights(const Array& w_pos, const Array& w_bi, const Array& w_rep) {
  const std::size_t c_out = w_pos.cols();
  if (w_pos.rows() != 3 || w_bi.cols() != c_out || w_rep.cols() != c_out || w_bi.rows() != w_rep.rows()) {
    throw std::invalid_argument("reconstitute_bfe_weights: inconsistent parts " + shape_str(w_pos) + ", " +
                                shape_str(w_bi) + ", " + shape_str(w_rep));
  }
  Array full({3 + w_bi.rows() + w_rep.rows(), c_out});
  auto out = full.data.begin();
  out = std::copy(w_pos.data.begin(), w_pos.data.end(), out);
  out = std::copy(w_bi.data.begin(), w_bi.data.end(), out);
  std::copy(w_rep.data.begin(), w_rep.data.end(), out);
  return full;
}

BfeIds leaf_params(Tape& tape, const BfeLayer& layer) {
  layer.validate();
  BfeIds ids;
  ids.decomposed = layer.decomposed;
  if (layer.decomposed) {
    ids.w_pos = tape.leaf(layer.w_pos);
    ids.w_bi = tape.leaf(layer.w_bi);
    ids.w_rep = tape.leaf(layer.w_rep);
  } else {
    ids.w_full = tape.leaf(layer.w_full);
  }
  return ids;
}

namespace {

void check_bfp_inputs(const TapeCloud& p, const TapeCloud& q, const BfeLayer& layer) {
  if (p.c != q.c || p.c != layer.c_in) {
    throw std::invalid_argument("bfe: feature widths must agree, got " + std::to_string(p.c) + ", " +
                                std::to_string(q.c) + ", layer C=" + std::to_string(layer.c_in));
  }
  if (layer.k > p.n || layer.k > q.n) {
    throw std::invalid_argument("bfe: k=" + std::to_string(layer.k) + " exceeds a cloud size (" +
                                std::to_string(p.n) + ", " + std::to_string(q.n) + ")");
  }
}

// One direction of the naive form: centers group neighbors from the other
// cloud; block layout [offset, neighbor feat, center feat].
ValueId bfp_naive_direction(Tape& tape, const TapeCloud& ctr, const TapeCloud& nbr, const BfeLayer& layer,
                            ValueId w_full) {
  const NeighborIndex nn = knn_group(tape.value(ctr.coords), tape.value(nbr.coords), layer.k);
  const std::vector<std::size_t> rep = repeat_centers(ctr.n, layer.k);
  const ValueId nbr_coords = tape.gather_rows(nbr.coords, nn.indices);
  const ValueId ctr_coords = tape.gather_rows(ctr.coords, rep);
  const ValueId offsets = tape.sub(nbr_coords, ctr_coords);
  const ValueId nbr_feats = tape.gather_rows(nbr.feats, nn.indices);
  const ValueId ctr_feats = tape.gather_rows(ctr.feats, rep);
  const ValueId block = tape.concat_cols({offsets, nbr_feats, ctr_feats});
  const ValueId pre = tape.linear(block, w_full);
  const ValueId act = tape.leaky_relu(pre, layer.slope);
  return tape.group_max(act, ctr.n, layer.k);
}

// One direction of the decomposed form. The per-point transforms of both
// clouds are computed by the caller (they are shared by the two
// directions); only the offset transform runs per group member.
ValueId bfp_decomposed_direction(Tape& tape, const TapeCloud& ctr, const TapeCloud& nbr, ValueId ctr_rep_feats,
                                 ValueId nbr_bi_feats, const BfeLayer& layer, ValueId w_pos) {
  const NeighborIndex nn = knn_group(tape.value(ctr.coords), tape.value(nbr.coords), layer.k);
  const std::vector<std::size_t> rep = repeat_centers(ctr.n, layer.k);
  const ValueId nbr_coords = tape.gather_rows(nbr.coords, nn.indices);
  const ValueId ctr_coords = tape.gather_rows(ctr.coords, rep);
  const ValueId offsets = tape.sub(nbr_coords, ctr_coords);
  const ValueId pos_term = tape.linear(offsets, w_pos);
  const ValueId feat_term = tape.add(tape.gather_rows(nbr_bi_feats, nn.indices), tape.gather_rows(ctr_rep_feats, rep));
  const ValueId pre = tape.add(pos_term, feat_term);
  const ValueId act = tape.leaky_relu(pre, layer.slope);
  return tape.group_max(act, ctr.n, layer.k);
}

}  // namespace

std::pair<TapeCloud, TapeCloud> bfp_naive(Tape& tape, const TapeCloud& p, const TapeCloud& q, const BfeLayer& layer,
                                          const BfeIds& ids) {
  layer.validate();
  check_bfp_inputs(p, q, layer);
  const ValueId w_full =
      ids.decomposed ? tape.concat_rows({ids.w_pos, ids.w_bi, ids.w_rep}) : ids.w_full;
  const ValueId p_aug = bfp_naive_direction(tape, p, q, layer, w_full);
  const ValueId q_aug = bfp_naive_direction(tape, q, p, layer, w_full);
  return {TapeCloud{p.coords, p_aug, p.n, layer.c_out}, TapeCloud{q.coords, q_aug, q.n, layer.c_out}};
}

std::pair<TapeCloud, TapeCloud> bfp_decomposed(Tape& tape, const TapeCloud& p, const TapeCloud& q,
                                               const BfeLayer& layer, const BfeIds& ids) {
  layer.validate();
  check_bfp_inputs(p, q, layer);
  ValueId w_pos, w_bi, w_rep;
  if (ids.decomposed) {
    w_pos = ids.w_pos;
    w_bi = ids.w_bi;
    w_rep = ids.w_rep;
  } else {
    w_pos = tape.slice_rows(ids.w_full, 0, 3);
    w_bi = tape.slice_rows(ids.w_full, 3, layer.c_in);
    w_rep = tape.slice_rows(ids.w_full, 3 + layer.c_in, layer.c_in);
  }
  // Pre-grouping transforms, once per point of each cloud.
  const ValueId p_rep = tape.linear(p.feats, w_rep);
  const ValueId p_bi = tape.linear(p.feats, w_bi);
  const ValueId q_rep = tape.linear(q.feats, w_rep);
  const ValueId q_bi = tape.linear(q.feats, w_bi);
  const ValueId p_aug = bfp_decomposed_direction(tape, p, q, p_rep, q_bi, layer, w_pos);
  const ValueId q_aug = bfp_decomposed_direction(tape, q, p, q_rep, p_bi, layer, w_pos);
  return {TapeCloud{p.coords, p_aug, p.n, layer.c_out}, TapeCloud{q.coords, q_aug, q.n, layer.c_out}};
}

ValueId flow_embedding(Tape& tape, const TapeCloud& p_aug, const TapeCloud& q_aug, std::size_t k,
                       const SetLayer& layer, const SetLayerIds& ids) {
  if (k == 0 || k > q_aug.n) {
    throw std::invalid_argument("flow_embedding: k=" + std::to_string(k) + " with target size " +
                                std::to_string(q_aug.n));
  }
  const NeighborIndex nn = knn_group(tape.value(p_aug.coords), tape.value(q_aug.coords), k);
  const std::vector<std::size_t> rep = repeat_centers(p_aug.n, k);
  const ValueId offsets =
      tape.sub(tape.gather_rows(q_aug.coords, nn.indices), tape.gather_rows(p_aug.coords, rep));
  const ValueId block = tape.concat_cols(
      {offsets, tape.gather_rows(q_aug.feats, nn.indices), tape.gather_rows(p_aug.feats, rep)});
  return set_layer_apply(tape, block, p_aug.n, k, layer, ids);
}

TapeCloud pointconv(Tape& tape, const TapeCloud& cloud, const std::vector<std::size_t>& centers, std::size_t k,
                    const SetLayer& layer, const SetLayerIds& ids) {
  if (k == 0 || k > cloud.n) {
    throw std::invalid_argument("pointconv: k=" + std::to_string(k) + " with cloud size " + std::to_string(cloud.n));
  }
  const ValueId ctr_coords = tape.gather_rows(cloud.coords, centers);
  const NeighborIndex nn = knn_group(tape.value(ctr_coords), tape.value(cloud.coords), k);
  const std::vector<std::size_t> rep = repeat_centers(centers.size(), k);
  const ValueId offsets =
      tape.sub(tape.gather_rows(cloud.coords, nn.indices), tape.gather_rows(ctr_coords, rep));
  const ValueId block = tape.concat_cols({offsets, tape.gather_rows(cloud.feats, nn.indices)});
  const ValueId feats = set_layer_apply(tape, block, centers.size(), k, layer, ids);
  return TapeCloud{ctr_coords, feats, centers.size(), layer.out_width()};
}

UpsampleResult upsample(Tape& tape, const Array& sparse_coords, ValueId sparse_feats, ValueId sparse_flow,
                        const Array& dense_coords, std::size_t interp_k) {
  const InterpPlan plan = make_interp_plan(sparse_coords, dense_coords, interp_k);
  UpsampleResult out;
  out.feats = tape.interp_rows(sparse_feats, plan.indices, plan.weights, plan.k);
  out.flow = tape.interp_rows(sparse_flow, plan.indices, plan.weights, plan.k);
  return out;
}

PredictResult predict_flow(Tape& tape, ValueId warped_coords, ValueId upsampled_flow, ValueId fused_inputs,
                           std::size_t k, const SetLayer& conv, const SetLayerIds& conv_ids, const SetLayer& head,
                           const SetLayerIds& head_ids) {
  if (head.out_width() != 3) {
    throw std::invalid_argument("predict_flow: head output width must be 3, got " +
                                std::to_string(head.out_width()));
  }
  const Array& coords = tape.value(warped_coords);
  const std::size_t n = coords.rows();
  if (tape.value(fused_inputs).rows() != n || tape.value(upsampled_flow).rows() != n) {
    throw std::invalid_argument("predict_flow: row extents disagree");
  }
  if (k == 0 || k > n) {
    throw std::invalid_argument("predict_flow: k=" + std::to_string(k) + " with " + std::to_string(n) + " points");
  }
  const NeighborIndex nn = knn_group(coords, coords, k);
  const std::vector<std::size_t> rep = repeat_centers(n, k);
  const ValueId offsets =
      tape.sub(tape.gather_rows(warped_coords, nn.indices), tape.gather_rows(warped_coords, rep));
  const ValueId block = tape.concat_cols({offsets, tape.gather_rows(fused_inputs, nn.indices)});
  const ValueId smooth = set_layer_apply(tape, block, n, k, conv, conv_ids);
  const ValueId residual = mlp_apply(tape, smooth, head, head_ids);
  return PredictResult{tape.add(upsampled_flow, residual), smooth};
}

}  // namespace biflow
