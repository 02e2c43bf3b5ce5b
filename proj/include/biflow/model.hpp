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
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "biflow/layers.hpp"

namespace biflow {

/// Level layout: level 0 is the full-resolution input; levels 1..L are the
/// max-min subsampled sets with the configured point counts (strictly
/// decreasing). Flow is bootstrapped at level L from zero flow and refined
/// at every level below it; the refined flows at levels L-1..0 are the
/// model outputs, so the finest output sits at full source resolution.
struct ModelConfig {
  std::size_t levels = 3;  // L
  std::vector<std::size_t> points_per_level{128, 64, 32};
  std::vector<std::size_t> channels_per_level{32, 64, 96};
  std::size_t k_extract = 8;
  std::size_t k_bfp = 8;
  std::size_t k_fe = 8;
  std::size_t k_pred = 8;
  std::size_t interp_k = 3;
  double slope = 0.1;
  std::uint64_t init_seed = 1;
  std::size_t input_feature_width = 3;
  bool use_bfp = true;  // false swaps in a source-only correlation path

  void validate() const;

  // Feature width entering level l (level 0 = raw input features).
  std::size_t extract_width(std::size_t level) const;
  // Shared width of the augmented features, correlation embedding and
  // predictor aggregation at level l; level 0 reuses the first subsampled
  // width.
  std::size_t decoder_width(std::size_t level) const;
  // Channel count of the per-point block fused ahead of the predictor.
  std::size_t fused_width(std::size_t level) const;

  std::map<std::string, std::string> to_kv() const;
  static ModelConfig from_kv(const std::map<std::string, std::string>& kv);
};

struct BiPointFlowNet {
  ModelConfig config;
  std::vector<SetLayer> extract;    // index l-1 holds the level-l extractor, l in 1..L
  std::vector<BfeLayer> bfe;        // per level 0..L (empty when !use_bfp)
  std::vector<SetLayer> fe;         // per level 0..L
  std::vector<SetLayer> pred_conv;  // per level 0..L
  std::vector<SetLayer> pred_head;  // per level 0..L

  // Walks every parameter array in a fixed structural order with a stable
  // name; checkpointing, optimization and tape registration all share it.
  void visit_params(const std::function<void(const std::string&, Array&)>& fn);
  void visit_params(const std::function<void(const std::string&, const Array&)>& fn) const;
};

// Network with the configured shapes and all parameters zero.
BiPointFlowNet make_net(const ModelConfig& config);

// Weights uniform in +/- sqrt(6 / fan_in) where fan_in is the full input
// width of the linear map the weight belongs to; biases zero. Deterministic
// per seed.
BiPointFlowNet init_params(const ModelConfig& config, std::uint64_t seed);

std::size_t param_count(const BiPointFlowNet& net);

struct ForwardResult {
  // Coarsest to finest: levels L-1 down to 0, the last at full source
  // resolution.
  std::vector<ValueId> flow_ids;
  std::vector<std::size_t> flow_levels;
  // Per output level, the subsample rows into the original source cloud
  // (identity at level 0); these are the gather indices for per-level
  // ground truth.
  std::vector<std::vector<std::size_t>> sample_indices;
  // Every parameter's leaf id, aligned with visit_params order.
  std::vector<ValueId> param_ids;
};

ForwardResult forward(Tape& tape, const BiPointFlowNet& net, const FramePair& pair);

// Convenience wrapper running its own tape; returns (level, flow) pairs
// coarsest to finest.
std::vector<std::pair<std::size_t, FlowField>> forward_flows(const BiPointFlowNet& net, const FramePair& pair);

// Flat binary container: magic "BIFLOW01", a length-prefixed key=value
// config block, then each parameter as (name, rank, extents, little-endian
// f64 data). Round-trips bit-exactly.
void save_checkpoint(const BiPointFlowNet& net, const std::string& path);
BiPointFlowNet load_checkpoint(const std::string& path);

}  // namespace biflow
