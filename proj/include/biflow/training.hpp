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

#include "biflow/model.hpp"

namespace biflow {

/// Per-level loss weights, finest level first. The defaults halve per
/// level starting from 0.16.
struct LossWeights {
  std::vector<double> alpha;

  static LossWeights defaults(std::size_t levels);
  void validate(std::size_t levels) const;
};

// Gathers ground-truth rows at the subsample indices the forward pass
// actually used; one output per index list, in the given order.
std::vector<FlowField> level_ground_truth(const FlowField& gt,
                                          const std::vector<std::vector<std::size_t>>& level_indices);

// sum_l alpha_l * sum_i ||gt_i - pred_i||_2, lists finest level first and
// aligned with the weights.
double multi_level_loss(const std::vector<FlowField>& preds, const std::vector<FlowField>& gts,
                        const LossWeights& weights);
ValueId multi_level_loss(Tape& tape, const std::vector<ValueId>& preds, const std::vector<Array>& gts,
                         const LossWeights& weights);

/// Adam accumulators; moment shapes mirror the parameter shapes, in
/// visit_params order.
struct OptimState {
  std::size_t step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::vector<Array> m;
  std::vector<Array> v;

  static OptimState create(const std::vector<Array*>& params, double lr);
};

// Bias-corrected Adam update, in place.
void adam_step(const std::vector<Array*>& params, const std::vector<Array>& grads, OptimState& state);

struct TrainItem {
  FramePair pair;
  FlowField gt;
};

struct TrainConfig {
  std::size_t epochs = 10;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t halve_lr_every_epochs = 0;  // 0 keeps the rate constant
  LossWeights weights;                    // empty -> defaults for the net's level count
};

struct TrainResult {
  std::vector<double> loss_history;  // one entry per step
};

// One frame pair per step, cycling the data in order; epochs * data.size()
// steps total. A non-finite loss aborts with the offending step index.
TrainResult train(BiPointFlowNet& net, const std::vector<TrainItem>& data, const TrainConfig& config);

// CSV with a step,loss header and 17-significant-digit values.
void write_loss_csv(const std::vector<double>& history, const std::string& path);

}  // namespace biflow
