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

#include "biflow/checks.hpp"

#include <cmath>
#include <sstream>

#include "biflow/layers.hpp"
#include "biflow/model.hpp"
#include "biflow/rng.hpp"
#include "biflow/synthdata.hpp"
#include "biflow/training.hpp"

namespace biflow {

namespace {

Array random_array(Rng& rng, std::vector<std::size_t> shape, double lo = -1.0, double hi = 1.0) {
  Array a(std::move(shape));
  for (double& v : a.data) v = rng.uniform(lo, hi);
  return a;
}

// Uniform magnitudes bounded away from zero, random sign; keeps activation
// inputs clear of the kink for finite differences.
Array random_off_kink(Rng& rng, std::vector<std::size_t> shape) {
  Array a(std::move(shape));
  for (double& v : a.data) {
    const double mag = rng.uniform(0.3, 1.2);
    v = rng.uniform01() < 0.5 ? -mag : mag;
  }
  return a;
}

std::string fmt_err(double err) {
  std::ostringstream s;
  s << "max rel err " << err;
  return s.str();
}

CheckResult grad_result(const std::string& name, double err, double threshold) {
  return CheckResult{name, err <= threshold, fmt_err(err) + " (limit " + std::to_string(threshold) + ")"};
}

constexpr double kEps = 1e-5;
constexpr double kLayerTol = 1e-4;
constexpr double kNetTol = 1e-3;

}  // namespace

std::vector<CheckResult> run_equivalence_suite(std::uint64_t seed, std::size_t instances) {
  Rng rng(derive_seed(seed, "equivalence"));
  double max_diff = 0.0;
  for (std::size_t inst = 0; inst < instances; ++inst) {
    const std::size_t k = 1 + rng.index(8);
    const std::size_t np = k + rng.index(64 - k + 1);
    const std::size_t mp = k + rng.index(64 - k + 1);
    const std::size_t c = 1 + rng.index(16);
    const std::size_t c_out = 1 + rng.index(16);

    const PointCloud p(random_array(rng, {np, 3}), random_array(rng, {np, c}));
    const PointCloud q(random_array(rng, {mp, 3}), random_array(rng, {mp, c}));
    const Array w_full = random_array(rng, {3 + 2 * c, c_out});

    const BfeLayer naive = make_naive_bfe(k, c, c_out, w_full);
    const BfeWeightTriple parts = partition_bfe_weights(w_full, c);
    const BfeLayer dec = make_decomposed_bfe(k, c, c_out, parts.w_pos, parts.w_bi, parts.w_rep);

    Tape t1;
    const TapeCloud p1 = put_cloud(t1, p), q1 = put_cloud(t1, q);
    const auto [pn, qn] = bfp_naive(t1, p1, q1, naive, leaf_params(t1, naive));

    Tape t2;
    const TapeCloud p2 = put_cloud(t2, p), q2 = put_cloud(t2, q);
    const auto [pd, qd] = bfp_decomposed(t2, p2, q2, dec, leaf_params(t2, dec));

    const Array& fn = t1.value(pn.feats);
    const Array& gn = t1.value(qn.feats);
    const Array& fd = t2.value(pd.feats);
    const Array& gd = t2.value(qd.feats);
    for (std::size_t i = 0; i < fn.data.size(); ++i) max_diff = std::max(max_diff, std::abs(fn.data[i] - fd.data[i]));
    for (std::size_t i = 0; i < gn.data.size(); ++i) max_diff = std::max(max_diff, std::abs(gn.data[i] - gd.data[i]));
  }
  std::vector<CheckResult> out;
  {
    std::ostringstream detail;
    detail << "max abs diff " << max_diff << " over " << instances << " instances (limit 1e-10)";
    out.push_back(CheckResult{"decomposition-equivalence", max_diff <= 1e-10, detail.str()});
  }
  {
    // Lossless round trip of the two weight layouts.
    Rng rt(derive_seed(seed, "roundtrip"));
    bool pass = true;
    for (int rep = 0; rep < 10 && pass; ++rep) {
      const std::size_t c = 1 + rt.index(16), c_out = 1 + rt.index(16);
      const Array w_pos = random_array(rt, {3, c_out});
      const Array w_bi = random_array(rt, {c, c_out});
      const Array w_rep = random_array(rt, {c, c_out});
      const BfeWeightTriple back = partition_bfe_weights(reconstitute_bfe_weights(w_pos, w_bi, w_rep), c);
      pass = back.w_pos.data == w_pos.data && back.w_bi.data == w_bi.data && back.w_rep.data == w_rep.data;
      const Array w_full = random_array(rt, {3 + 2 * c, c_out});
      const BfeWeightTriple parts = partition_bfe_weights(w_full, c);
      pass = pass && reconstitute_bfe_weights(parts.w_pos, parts.w_bi, parts.w_rep).data == w_full.data;
    }
    out.push_back(CheckResult{"weight-round-trip", pass, pass ? "bitwise identical" : "mismatch"});
  }
  return out;
}

std::vector<CheckResult> run_gradient_suite(std::uint64_t seed) {
  std::vector<CheckResult> out;
  Rng rng(derive_seed(seed, "grad"));

  {  // linear map with bias
    const std::vector<Array> inputs{random_array(rng, {3, 4}), random_array(rng, {4, 5}), random_array(rng, {5})};
    const double err = grad_check(
        [](Tape& t, const std::vector<Array>& in) {
          const ValueId x = t.leaf(in[0]), w = t.leaf(in[1]), b = t.leaf(in[2]);
          return GradCheckBuild{t.sum_l2_rows(t.linear(x, w, b)), {x, w, b}};
        },
        inputs, kEps);
    out.push_back(grad_result("grad-linear-map", err, kLayerTol));
  }
  {  // activation, inputs clear of the kink
    const std::vector<Array> inputs{random_off_kink(rng, {4, 6})};
    const double err = grad_check(
        [](Tape& t, const std::vector<Array>& in) {
          const ValueId x = t.leaf(in[0]);
          return GradCheckBuild{t.sum_l2_rows(t.leaky_relu(x, 0.1)), {x}};
        },
        inputs, kEps);
    out.push_back(grad_result("grad-leaky-relu", err, kLayerTol));
  }
  {  // grouped max with generic (tie-free) values
    const std::vector<Array> inputs{random_array(rng, {12, 5})};  // 4 groups of 3
    const double err = grad_check(
        [](Tape& t, const std::vector<Array>& in) {
          const ValueId x = t.leaf(in[0]);
          return GradCheckBuild{t.sum_l2_rows(t.group_max(x, 4, 3)), {x}};
        },
        inputs, kEps);
    out.push_back(grad_result("grad-group-max", err, kLayerTol));
  }
  {  // full set layer
    SetLayer layer;
    layer.weights = {random_array(rng, {7, 6}), random_array(rng, {6, 4})};
    layer.biases = {random_array(rng, {6}), random_array(rng, {4})};
    layer.input_blocks = {3, 4};
    const std::vector<Array> inputs{random_array(rng, {10, 7}), layer.weights[0], layer.biases[0], layer.weights[1],
                                    layer.biases[1]};
    const double err = grad_check(
        [&layer](Tape& t, const std::vector<Array>& in) {
          SetLayer probe = layer;
          probe.weights = {in[1], in[3]};
          probe.biases = {in[2], in[4]};
          const ValueId x = t.leaf(in[0]);
          const SetLayerIds ids = leaf_params(t, probe);
          const ValueId y = set_layer_apply(t, x, 5, 2, probe, ids);
          return GradCheckBuild{t.sum_l2_rows(y), {x, ids.weights[0], ids.biases[0], ids.weights[1], ids.biases[1]}};
        },
        inputs, kEps);
    out.push_back(grad_result("grad-set-layer", err, kLayerTol));
  }
  {  // pointconv over a small cloud
    SetLayer layer;
    layer.weights = {random_array(rng, {7, 5})};
    layer.biases = {random_array(rng, {5})};
    layer.input_blocks = {3, 4};
    const std::vector<Array> inputs{random_array(rng, {9, 3}), random_array(rng, {9, 4}), layer.weights[0],
                                    layer.biases[0]};
    const std::vector<std::size_t> centers{0, 2, 4, 6};
    const double err = grad_check(
        [&layer, &centers](Tape& t, const std::vector<Array>& in) {
          SetLayer probe = layer;
          probe.weights = {in[2]};
          probe.biases = {in[3]};
          TapeCloud cloud;
          cloud.coords = t.leaf(in[0]);
          cloud.feats = t.leaf(in[1]);
          cloud.n = in[0].rows();
          cloud.c = in[1].cols();
          const SetLayerIds ids = leaf_params(t, probe);
          const TapeCloud y = pointconv(t, cloud, centers, 3, probe, ids);
          return GradCheckBuild{t.sum_l2_rows(y.feats), {cloud.coords, cloud.feats, ids.weights[0], ids.biases[0]}};
        },
        inputs, kEps);
    out.push_back(grad_result("grad-pointconv", err, kLayerTol));
  }
  for (const bool decomposed : {false, true}) {  // both embedding forms
    const std::size_t c = 4, c_out = 5, k = 3;
    const std::vector<Array> inputs{random_array(rng, {6, 3}),  random_array(rng, {6, c}),
                                    random_array(rng, {7, 3}),  random_array(rng, {7, c}),
                                    random_array(rng, {3 + 2 * c, c_out})};
    const double err = grad_check(
        [&](Tape& t, const std::vector<Array>& in) {
          TapeCloud p{t.leaf(in[0]), t.leaf(in[1]), 6, c};
          TapeCloud q{t.leaf(in[2]), t.leaf(in[3]), 7, c};
          const ValueId w = t.leaf(in[4]);
          BfeLayer layer = make_naive_bfe(k, c, c_out, in[4]);
          BfeIds ids;
          ids.decomposed = false;
          ids.w_full = w;
          const auto aug = decomposed ? bfp_decomposed(t, p, q, layer, ids) : bfp_naive(t, p, q, layer, ids);
          const ValueId total = t.add(t.sum_l2_rows(aug.first.feats), t.sum_l2_rows(aug.second.feats));
          return GradCheckBuild{total, {p.coords, p.feats, q.coords, q.feats, w}};
        },
        inputs, kEps);
    out.push_back(grad_result(decomposed ? "grad-bfp-decomposed" : "grad-bfp-naive", err, kLayerTol));
  }
  {  // correlation layer
    SetLayer layer;
    layer.weights = {random_array(rng, {3 + 2 * 4, 5})};
    layer.biases = {random_array(rng, {5})};
    layer.input_blocks = {3, 4, 4};
    const std::vector<Array> inputs{random_array(rng, {6, 3}), random_array(rng, {6, 4}), random_array(rng, {8, 3}),
                                    random_array(rng, {8, 4}), layer.weights[0], layer.biases[0]};
    const double err = grad_check(
        [&layer](Tape& t, const std::vector<Array>& in) {
          SetLayer probe = layer;
          probe.weights = {in[4]};
          probe.biases = {in[5]};
          TapeCloud p{t.leaf(in[0]), t.leaf(in[1]), 6, 4};
          TapeCloud q{t.leaf(in[2]), t.leaf(in[3]), 8, 4};
          const SetLayerIds ids = leaf_params(t, probe);
          const ValueId emb = flow_embedding(t, p, q, 3, probe, ids);
          return GradCheckBuild{t.sum_l2_rows(emb),
                                {p.coords, p.feats, q.coords, q.feats, ids.weights[0], ids.biases[0]}};
        },
        inputs, kEps);
    out.push_back(grad_result("grad-flow-embedding", err, kLayerTol));
  }
  {  // interpolation-based upsampling
    const Array sparse_coords = random_array(rng, {6, 3});
    const Array dense_coords = random_array(rng, {11, 3});
    const std::vector<Array> inputs{random_array(rng, {6, 4}), random_array(rng, {6, 3})};
    const double err = grad_check(
        [&](Tape& t, const std::vector<Array>& in) {
          const ValueId feats = t.leaf(in[0]), flow = t.leaf(in[1]);
          const UpsampleResult up = upsample(t, sparse_coords, feats, flow, dense_coords, 3);
          return GradCheckBuild{t.add(t.sum_l2_rows(up.feats), t.sum_l2_rows(up.flow)), {feats, flow}};
        },
        inputs, kEps);
    out.push_back(grad_result("grad-upsample", err, kLayerTol));
  }
  {  // residual predictor
    SetLayer conv;
    conv.weights = {random_array(rng, {3 + 6, 5})};
    conv.biases = {random_array(rng, {5})};
    conv.input_blocks = {3, 6};
    SetLayer head;
    head.weights = {random_array(rng, {5, 3})};
    head.biases = {random_array(rng, {3})};
    head.input_blocks = {5};
    head.activate_last = false;
    const std::vector<Array> inputs{random_array(rng, {8, 3}), random_array(rng, {8, 3}), random_array(rng, {8, 6}),
                                    conv.weights[0], conv.biases[0], head.weights[0], head.biases[0]};
    const double err = grad_check(
        [&](Tape& t, const std::vector<Array>& in) {
          SetLayer cp = conv, hp = head;
          cp.weights = {in[3]};
          cp.biases = {in[4]};
          hp.weights = {in[5]};
          hp.biases = {in[6]};
          const ValueId coords = t.leaf(in[0]), up_flow = t.leaf(in[1]), fused = t.leaf(in[2]);
          const SetLayerIds cids = leaf_params(t, cp), hids = leaf_params(t, hp);
          const PredictResult pr = predict_flow(t, coords, up_flow, fused, 3, cp, cids, hp, hids);
          return GradCheckBuild{t.sum_l2_rows(pr.flow),
                                {coords, up_flow, fused, cids.weights[0], cids.biases[0], hids.weights[0],
                                 hids.biases[0]}};
        },
        inputs, kEps);
    out.push_back(grad_result("grad-predict-flow", err, kLayerTol));
  }
  {  // end-to-end loss through a small network on a 32-point pair
    ModelConfig cfg;
    cfg.levels = 2;
    cfg.points_per_level = {16, 8};
    cfg.channels_per_level = {8, 12};
    cfg.k_extract = cfg.k_bfp = cfg.k_fe = cfg.k_pred = 4;
    cfg.interp_k = 3;
    cfg.input_feature_width = 3;
    const BiPointFlowNet net = init_params(cfg, derive_seed(seed, "net"));
    SceneSpec scene;
    scene.n_points = 32;
    scene.n_objects = 2;
    scene.noise_sigma = 0.0;
    scene.seed = derive_seed(seed, "pair");
    const GeneratedPair gp = generate_pair(scene);
    const LossWeights weights = LossWeights::defaults(cfg.levels);

    std::vector<Array> inputs;
    net.visit_params([&](const std::string&, const Array& a) { inputs.push_back(a); });
    const double err = grad_check(
        [&](Tape& t, const std::vector<Array>& in) {
          BiPointFlowNet probe = net;
          std::size_t i = 0;
          probe.visit_params([&](const std::string&, Array& a) { a = in[i++]; });
          const ForwardResult fwd = forward(t, probe, gp.pair);
          std::vector<ValueId> preds(fwd.flow_ids.rbegin(), fwd.flow_ids.rend());
          const std::vector<std::vector<std::size_t>> idx(fwd.sample_indices.rbegin(), fwd.sample_indices.rend());
          const std::vector<FlowField> gts = level_ground_truth(gp.gt, idx);
          std::vector<Array> gt_arrays;
          for (const FlowField& f : gts) gt_arrays.push_back(f.vectors);
          const ValueId loss = multi_level_loss(t, preds, gt_arrays, weights);
          return GradCheckBuild{loss, fwd.param_ids};
        },
        inputs, kEps);
    out.push_back(grad_result("grad-full-network-loss", err, kNetTol));
  }
  return out;
}

}  // namespace biflow
