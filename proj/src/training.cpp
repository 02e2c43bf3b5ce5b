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

#include "biflow/training.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace biflow {

LossWeights LossWeights::defaults(std::size_t levels) {
  LossWeights w;
  double a = 0.16;
  for (std::size_t l = 0; l < levels; ++l) {
    w.alpha.push_back(a);
    a *= 0.5;
  }
  return w;
}

void LossWeights::validate(std::size_t levels) const {
  if (alpha.size() != levels) {
    throw std::invalid_argument("LossWeights: need one weight per level, got " + std::to_string(alpha.size()) +
                                " for " + std::to_string(levels) + " levels");
  }
  for (double a : alpha) {
    if (!(a > 0.0)) throw std::invalid_argument("LossWeights: weights must be positive");
  }
}

std::vector<FlowField> level_ground_truth(const FlowField& gt,
                                          const std::vector<std::vector<std::size_t>>& level_indices) {
  std::vector<FlowField> out;
  out.reserve(level_indices.size());
  for (const auto& idx : level_indices) out.emplace_back(gather_rows(gt.vectors, idx));
  return out;
}

double multi_level_loss(const std::vector<FlowField>& preds, const std::vector<FlowField>& gts,
                        const LossWeights& weights) {
  weights.validate(preds.size());
  if (preds.size() != gts.size()) {
    throw std::invalid_argument("multi_level_loss: prediction and ground-truth lists are misaligned");
  }
  double total = 0.0;
  for (std::size_t l = 0; l < preds.size(); ++l) {
    total += weights.alpha[l] * sum_l2_rows(sub(gts[l].vectors, preds[l].vectors));
  }
  return total;
}

ValueId multi_level_loss(Tape& tape, const std::vector<ValueId>& preds, const std::vector<Array>& gts,
                         const LossWeights& weights) {
  weights.validate(preds.size());
  if (preds.size() != gts.size()) {
    throw std::invalid_argument("multi_level_loss: prediction and ground-truth lists are misaligned");
  }
  ValueId total = 0;
  bool first = true;
  for (std::size_t l = 0; l < preds.size(); ++l) {
    const ValueId diff = tape.sub(tape.leaf(gts[l]), preds[l]);
    const ValueId term = tape.scale(tape.sum_l2_rows(diff), weights.alpha[l]);
    total = first ? term : tape.add(total, term);
    first = false;
  }
  return total;
}

OptimState OptimState::create(const std::vector<Array*>& params, double lr) {
  OptimState s;
  s.lr = lr;
  for (const Array* p : params) {
    s.m.emplace_back(p->shape);
    s.v.emplace_back(p->shape);
  }
  return s;
}

void adam_step(const std::vector<Array*>& params, const std::vector<Array>& grads, OptimState& state) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw std::invalid_argument("adam_step: parameter, gradient and state lists are misaligned");
  }
  state.step += 1;
  const double b1 = state.beta1, b2 = state.beta2;
  const double corr1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double corr2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t p = 0; p < params.size(); ++p) {
    Array& theta = *params[p];
    const Array& g = grads[p];
    if (!theta.same_shape(g)) {
      throw std::invalid_argument("adam_step: gradient " + shape_str(g) + " does not match parameter " +
                                  shape_str(theta));
    }
    Array& m = state.m[p];
    Array& v = state.v[p];
    for (std::size_t i = 0; i < theta.data.size(); ++i) {
      const double gi = g.data[i];
      m.data[i] = b1 * m.data[i] + (1.0 - b1) * gi;
      v.data[i] = b2 * v.data[i] + (1.0 - b2) * gi * gi;
      const double m_hat = m.data[i] / corr1;
      const double v_hat = v.data[i] / corr2;
      theta.data[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

TrainResult train(BiPointFlowNet& net, const std::vector<TrainItem>& data, const TrainConfig& config) {
  if (data.empty()) throw std::invalid_argument("train: no training pairs");
  LossWeights weights = config.weights;
  if (weights.alpha.empty()) weights = LossWeights::defaults(net.config.levels);
  weights.validate(net.config.levels);

  std::vector<Array*> params;
  net.visit_params([&](const std::string&, Array& a) { params.push_back(&a); });
  OptimState state = OptimState::create(params, config.lr);
  state.beta1 = config.beta1;
  state.beta2 = config.beta2;
  state.epsilon = config.epsilon;

  TrainResult result;
  result.loss_history.reserve(config.epochs * data.size());
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    state.lr = config.lr;
    if (config.halve_lr_every_epochs > 0) {
      state.lr = config.lr * std::pow(0.5, static_cast<double>(epoch / config.halve_lr_every_epochs));
    }
    for (const TrainItem& item : data) {
      Tape tape;
      const ForwardResult fwd = forward(tape, net, item.pair);
      // Finest-first lists for the loss.
      std::vector<ValueId> preds(fwd.flow_ids.rbegin(), fwd.flow_ids.rend());
      std::vector<std::vector<std::size_t>> indices(fwd.sample_indices.rbegin(), fwd.sample_indices.rend());
      const std::vector<FlowField> gts = level_ground_truth(item.gt, indices);
      std::vector<Array> gt_arrays;
      gt_arrays.reserve(gts.size());
      for (const FlowField& f : gts) gt_arrays.push_back(f.vectors);
      const ValueId loss_id = multi_level_loss(tape, preds, gt_arrays, weights);
      const double loss = tape.value(loss_id).data[0];
      if (!std::isfinite(loss)) {
        throw std::runtime_error("train: non-finite loss at step " + std::to_string(step));
      }
      const std::vector<Array> all_grads = tape.backward(loss_id);
      std::vector<Array> grads;
      grads.reserve(fwd.param_ids.size());
      for (ValueId id : fwd.param_ids) grads.push_back(all_grads[id]);
      adam_step(params, grads, state);
      result.loss_history.push_back(loss);
      ++step;
    }
  }
  return result;
}

void write_loss_csv(const std::vector<double>& history, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("loss csv: cannot open '" + path + "' for writing");
  out << "step,loss\n";
  char buf[64];
  for (std::size_t i = 0; i < history.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", history[i]);
    out << i << "," << buf << "\n";
  }
  if (!out) throw std::runtime_error("loss csv: write to '" + path + "' failed");
}

}  // namespace biflow
