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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>

#include "biflow/model.hpp"
#include "biflow/rng.hpp"
#include "biflow/synthdata.hpp"

using namespace biflow;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.levels = 2;
  c.points_per_level = {32, 12};
  c.channels_per_level = {6, 10};
  c.k_extract = c.k_bfp = c.k_fe = c.k_pred = 4;
  c.interp_k = 3;
  c.input_feature_width = 3;
  return c;
}

GeneratedPair tiny_pair(std::uint64_t seed, std::size_t n = 64) {
  SceneSpec spec;
  spec.n_points = n;
  spec.n_objects = 2;
  spec.seed = seed;
  return generate_pair(spec);
}

void zero_heads(BiPointFlowNet& net) {
  for (SetLayer& head : net.pred_head) {
    for (Array& w : head.weights) std::fill(w.data.begin(), w.data.end(), 0.0);
    for (Array& b : head.biases) std::fill(b.data.begin(), b.data.end(), 0.0);
  }
}

std::vector<Array> snapshot(const BiPointFlowNet& net) {
  std::vector<Array> out;
  net.visit_params([&](const std::string&, const Array& a) { out.push_back(a); });
  return out;
}

}  // namespace

TEST_CASE("config validation names the violated constraint") {
  ModelConfig c = tiny_config();
  c.points_per_level = {12, 32};
  CHECK_THROWS_WITH_AS(c.validate(),
                       doctest::Contains("strictly decreasing"), std::invalid_argument);
  c = tiny_config();
  c.k_bfp = 20;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("k_bfp"), std::invalid_argument);
  c = tiny_config();
  c.levels = 1;
  c.points_per_level = {8};
  c.channels_per_level = {8};
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("levels"), std::invalid_argument);
}

TEST_CASE("initialization is deterministic and bounded") {
  const ModelConfig cfg = tiny_config();
  const BiPointFlowNet a = init_params(cfg, 42);
  const BiPointFlowNet b = init_params(cfg, 42);
  const BiPointFlowNet c = init_params(cfg, 43);
  const auto pa = snapshot(a), pb = snapshot(b), pc = snapshot(c);
  REQUIRE(pa.size() == pb.size());
  bool all_equal = true, any_diff = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    all_equal = all_equal && pa[i].data == pb[i].data;
    any_diff = any_diff || pa[i].data != pc[i].data;
  }
  CHECK(all_equal);
  CHECK(any_diff);

  // Every weight within +/- sqrt(6 / fan_in); biases zero.
  a.visit_params([&](const std::string& name, const Array& arr) {
    if (arr.rank() == 1) {
      for (double v : arr.data) CHECK(v == 0.0);
    } else {
      const double bound = std::sqrt(6.0 / static_cast<double>(arr.shape[0]));
      for (double v : arr.data) CHECK(std::abs(v) <= bound);
    }
    (void)name;
  });
}

TEST_CASE("param_count is analytic and seed-independent") {
  const ModelConfig cfg = tiny_config();
  const BiPointFlowNet a = init_params(cfg, 1);
  const BiPointFlowNet b = init_params(cfg, 999);
  CHECK(param_count(a) == param_count(b));

  // Closed-form recount for the tiny config (one linear layer per stage).
  auto set_params = [](std::size_t in, std::size_t out) { return (in + 1) * out; };
  const std::size_t ew0 = 3, ew1 = 6, ew2 = 10;
  const std::size_t dw0 = 6, dw1 = 6, dw2 = 10;
  std::size_t want = 0;
  want += set_params(3 + ew0, ew1) + set_params(3 + ew1, ew2);                    // extractors
  want += (3 + ew0 + ew0) * dw0 + (3 + ew1 + ew1) * dw1 + (3 + ew2 + ew2) * dw2;  // bfe triples, no bias
  want += set_params(3 + 2 * dw0, dw0) + set_params(3 + 2 * dw1, dw1) + set_params(3 + 2 * dw2, dw2);  // fe
  const std::size_t fused0 = ew0 + dw0 + dw0 + dw1 + 3;
  const std::size_t fused1 = ew1 + dw1 + dw1 + dw2 + 3;
  const std::size_t fused2 = ew2 + dw2 + dw2 + 3;
  want += set_params(3 + fused0, dw0) + set_params(3 + fused1, dw1) + set_params(3 + fused2, dw2);  // conv
  want += set_params(dw0, 3) + set_params(dw1, 3) + set_params(dw2, 3);                             // heads
  CHECK(param_count(a) == want);

  // Doubling one hidden width changes the count by the analytic delta.
  ModelConfig wider = cfg;
  wider.channels_per_level = {12, 10};
  const std::size_t got_delta = param_count(init_params(wider, 1)) - param_count(a);
  auto total_for = [&](std::size_t w0) {
    const std::size_t e0 = 3, e1 = w0, e2 = 10;
    const std::size_t d0 = w0, d1 = w0, d2 = 10;
    std::size_t n = set_params(3 + e0, e1) + set_params(3 + e1, e2);
    n += (3 + 2 * e0) * d0 + (3 + 2 * e1) * d1 + (3 + 2 * e2) * d2;
    n += set_params(3 + 2 * d0, d0) + set_params(3 + 2 * d1, d1) + set_params(3 + 2 * d2, d2);
    n += set_params(3 + (e0 + d0 + d0 + d1 + 3), d0) + set_params(3 + (e1 + d1 + d1 + d2 + 3), d1) +
         set_params(3 + (e2 + d2 + d2 + 3), d2);
    n += set_params(d0, 3) + set_params(d1, 3) + set_params(d2, 3);
    return n;
  };
  CHECK(got_delta == total_for(12) - total_for(6));
}

TEST_CASE("forward output shapes and ordering") {
  const ModelConfig cfg = tiny_config();
  const BiPointFlowNet net = init_params(cfg, 7);
  const GeneratedPair gp = tiny_pair(5);
  const auto flows = forward_flows(net, gp.pair);
  REQUIRE(flows.size() == cfg.levels);
  // Coarsest to finest: levels L-1 .. 0.
  CHECK(flows[0].first == 1);
  CHECK(flows[1].first == 0);
  CHECK(flows[0].second.n() == cfg.points_per_level[0]);
  CHECK(flows[1].second.n() == gp.pair.source.n());
  for (const auto& [level, flow] : flows) {
    (void)level;
    CHECK(flow.vectors.all_finite());
  }
}

TEST_CASE("zero-initialized heads produce exactly zero flow at every level") {
  const ModelConfig cfg = tiny_config();
  BiPointFlowNet net = init_params(cfg, 11);
  zero_heads(net);
  SUBCASE("identical frames") {
    GeneratedPair gp = tiny_pair(3);
    gp.pair.target = gp.pair.source;
    for (const auto& [level, flow] : forward_flows(net, gp.pair)) {
      (void)level;
      for (double v : flow.vectors.data) CHECK(v == 0.0);
    }
  }
  SUBCASE("arbitrary frames") {
    const GeneratedPair gp = tiny_pair(17);
    for (const auto& [level, flow] : forward_flows(net, gp.pair)) {
      (void)level;
      for (double v : flow.vectors.data) CHECK(v == 0.0);
    }
  }
}

TEST_CASE("forward is deterministic and translation invariant") {
  const ModelConfig cfg = tiny_config();
  const BiPointFlowNet net = init_params(cfg, 13);
  const GeneratedPair gp = tiny_pair(23);
  const auto a = forward_flows(net, gp.pair);
  const auto b = forward_flows(net, gp.pair);
  for (std::size_t l = 0; l < a.size(); ++l) CHECK(a[l].second.vectors.data == b[l].second.vectors.data);

  FramePair moved = gp.pair;
  for (std::size_t i = 0; i < moved.source.n(); ++i) {
    moved.source.coords(i, 0) += 5.0;
    moved.source.coords(i, 1) -= 2.0;
    moved.source.coords(i, 2) += 0.75;
  }
  for (std::size_t i = 0; i < moved.target.n(); ++i) {
    moved.target.coords(i, 0) += 5.0;
    moved.target.coords(i, 1) -= 2.0;
    moved.target.coords(i, 2) += 0.75;
  }
  const auto c = forward_flows(net, moved);
  for (std::size_t l = 0; l < a.size(); ++l) {
    for (std::size_t i = 0; i < a[l].second.vectors.data.size(); ++i) {
      CHECK(std::abs(a[l].second.vectors.data[i] - c[l].second.vectors.data[i]) <= 1e-8);
    }
  }
}

TEST_CASE("forward matches a step-by-step stage trace on a 128-point pair") {
  ModelConfig cfg;
  cfg.levels = 2;
  cfg.points_per_level = {48, 16};
  cfg.channels_per_level = {6, 8};
  cfg.k_extract = cfg.k_bfp = cfg.k_fe = cfg.k_pred = 4;
  cfg.interp_k = 3;
  const BiPointFlowNet net = init_params(cfg, 29);
  const GeneratedPair gp = tiny_pair(31, 128);

  Tape t;
  const ForwardResult got = forward(t, net, gp.pair);

  // Manual trace through extraction, upsample/warp, bidirectional
  // embedding and prediction, using the stage functions directly.
  Tape m;
  std::vector<SetLayerIds> ex_ids;
  for (const SetLayer& l : net.extract) ex_ids.push_back(leaf_params(m, l));
  std::vector<BfeIds> bfe_ids;
  for (const BfeLayer& l : net.bfe) bfe_ids.push_back(leaf_params(m, l));
  std::vector<SetLayerIds> fe_ids, conv_ids, head_ids;
  for (const SetLayer& l : net.fe) fe_ids.push_back(leaf_params(m, l));
  for (const SetLayer& l : net.pred_conv) conv_ids.push_back(leaf_params(m, l));
  for (const SetLayer& l : net.pred_head) head_ids.push_back(leaf_params(m, l));

  std::vector<TapeCloud> src(3), tgt(3);
  src[0] = put_cloud(m, gp.pair.source);
  tgt[0] = put_cloud(m, gp.pair.target);
  for (std::size_t l = 1; l <= 2; ++l) {
    const auto s_fps = furthest_point_sample(m.value(src[l - 1].coords), cfg.points_per_level[l - 1]);
    src[l] = pointconv(m, src[l - 1], s_fps, cfg.k_extract, net.extract[l - 1], ex_ids[l - 1]);
    const auto t_fps = furthest_point_sample(m.value(tgt[l - 1].coords), cfg.points_per_level[l - 1]);
    tgt[l] = pointconv(m, tgt[l - 1], t_fps, cfg.k_extract, net.extract[l - 1], ex_ids[l - 1]);
  }
  ValueId flow_up = 0, up_feats = 0;
  bool have_up = false;
  std::vector<Array> manual_flows;
  for (std::size_t level = 3; level-- > 0;) {
    const TapeCloud& s = src[level];
    if (level == 2) flow_up = m.leaf(Array({s.n, 3}));
    const ValueId warped = m.add(s.coords, flow_up);
    TapeCloud p{warped, s.feats, s.n, s.c};
    const auto aug = bfp_decomposed(m, p, tgt[level], net.bfe[level], bfe_ids[level]);
    const ValueId corr = flow_embedding(m, aug.first, aug.second, cfg.k_fe, net.fe[level], fe_ids[level]);
    std::vector<ValueId> parts{s.feats, aug.first.feats, corr};
    if (have_up) parts.push_back(up_feats);
    parts.push_back(flow_up);
    const ValueId fused = m.concat_cols(parts);
    const PredictResult pred = predict_flow(m, warped, flow_up, fused, cfg.k_pred, net.pred_conv[level],
                                            conv_ids[level], net.pred_head[level], head_ids[level]);
    if (level < 2) manual_flows.push_back(m.value(pred.flow));
    if (level == 0) break;
    const UpsampleResult up = upsample(m, m.value(s.coords), pred.smooth, pred.flow,
                                       m.value(src[level - 1].coords), cfg.interp_k);
    flow_up = up.flow;
    up_feats = up.feats;
    have_up = true;
  }
  REQUIRE(manual_flows.size() == got.flow_ids.size());
  for (std::size_t l = 0; l < manual_flows.size(); ++l) {
    CHECK(t.value(got.flow_ids[l]).data == manual_flows[l].data);
  }
}

TEST_CASE("forward rejects undersized frames") {
  const ModelConfig cfg = tiny_config();
  const BiPointFlowNet net = init_params(cfg, 3);
  const GeneratedPair gp = tiny_pair(1, 16);  // below the 32-point level
  Tape t;
  CHECK_THROWS_AS(forward(t, net, gp.pair), std::invalid_argument);
}

TEST_CASE("sample indices gather the levels consistently") {
  const ModelConfig cfg = tiny_config();
  const BiPointFlowNet net = init_params(cfg, 3);
  const GeneratedPair gp = tiny_pair(37);
  Tape t;
  const ForwardResult fwd = forward(t, net, gp.pair);
  REQUIRE(fwd.sample_indices.size() == 2);
  // Finest level is the identity gather.
  const auto& finest = fwd.sample_indices.back();
  for (std::size_t i = 0; i < finest.size(); ++i) CHECK(finest[i] == i);
  // Coarser levels index into the original cloud.
  for (const auto& level : fwd.sample_indices) {
    for (std::size_t idx : level) CHECK(idx < gp.pair.source.n());
  }
  CHECK(fwd.sample_indices[0].size() == cfg.points_per_level[0]);
}

TEST_CASE("checkpoint round-trips bit-exactly") {
  const ModelConfig cfg = tiny_config();
  const BiPointFlowNet net = init_params(cfg, 97);
  const std::string path = (std::filesystem::temp_directory_path() / "biflow_ckpt_test.bin").string();
  save_checkpoint(net, path);
  const BiPointFlowNet loaded = load_checkpoint(path);
  const auto pa = snapshot(net), pb = snapshot(loaded);
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].shape == pb[i].shape);
    CHECK(pa[i].data == pb[i].data);
  }
  CHECK(loaded.config.to_kv() == net.config.to_kv());

  // Same forward outputs after the round trip.
  const GeneratedPair gp = tiny_pair(41);
  const auto fa = forward_flows(net, gp.pair);
  const auto fb = forward_flows(loaded, gp.pair);
  for (std::size_t l = 0; l < fa.size(); ++l) CHECK(fa[l].second.vectors.data == fb[l].second.vectors.data);
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint loading rejects corruption") {
  const ModelConfig cfg = tiny_config();
  const BiPointFlowNet net = init_params(cfg, 5);
  namespace fs = std::filesystem;
  const std::string path = (fs::temp_directory_path() / "biflow_ckpt_bad.bin").string();
  save_checkpoint(net, path);

  SUBCASE("bad magic") {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.write("NOTMAGIC", 8);
    f.close();
    CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("magic"), std::runtime_error);
  }
  SUBCASE("truncation") {
    const auto size = fs::file_size(path);
    fs::resize_file(path, size / 2);
    CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);
  }
  fs::remove(path);
}

TEST_CASE("ablation config drops the propagation layers") {
  ModelConfig cfg = tiny_config();
  cfg.use_bfp = false;
  const BiPointFlowNet net = init_params(cfg, 2);
  CHECK(net.bfe.empty());
  const GeneratedPair gp = tiny_pair(43);
  const auto flows = forward_flows(net, gp.pair);
  CHECK(flows.size() == cfg.levels);
  CHECK(flows.back().second.n() == gp.pair.source.n());
  CHECK(param_count(net) < param_count(init_params(tiny_config(), 2)));
}
