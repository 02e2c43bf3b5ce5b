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

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "biflow/bench.hpp"
#include "biflow/checks.hpp"
#include "biflow/io.hpp"
#include "biflow/metrics.hpp"
#include "biflow/model.hpp"
#include "biflow/synthdata.hpp"
#include "biflow/training.hpp"

namespace {

namespace fs = std::filesystem;
using namespace biflow;

std::vector<std::size_t> parse_count_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream s(text);
  std::string item;
  while (std::getline(s, item, ',')) {
    if (item.empty()) throw CLI::ValidationError("empty entry in count list '" + text + "'");
    out.push_back(std::stoull(item));
  }
  return out;
}

struct ModelFlags {
  std::size_t levels = 3;
  std::string points = "128,64,32";
  std::string channels = "32,64,96";
  std::size_t k_extract = 8, k_bfp = 8, k_fe = 8, k_pred = 8, interp_k = 3;
  double slope = 0.1;
  std::size_t feature_width = 3;
  bool no_bfp = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("--levels", levels, "subsampled level count");
    cmd->add_option("--points-per-level", points, "comma list of per-level point counts");
    cmd->add_option("--channels-per-level", channels, "comma list of per-level feature widths");
    cmd->add_option("--k-extract", k_extract, "extraction neighbor count");
    cmd->add_option("--k-bfp", k_bfp, "bidirectional propagation neighbor count");
    cmd->add_option("--k-fe", k_fe, "correlation neighbor count");
    cmd->add_option("--k-pred", k_pred, "predictor smoothing neighbor count");
    cmd->add_option("--interp-k", interp_k, "upsampling interpolation neighbors");
    cmd->add_option("--slope", slope, "leaky activation slope");
    cmd->add_option("--feature-width", feature_width, "input feature channels");
    cmd->add_flag("--no-bfp", no_bfp, "replace bidirectional propagation with a source-only path");
  }

  ModelConfig to_config(std::uint64_t seed) const {
    ModelConfig c;
    c.levels = levels;
    c.points_per_level = parse_count_list(points);
    c.channels_per_level = parse_count_list(channels);
    c.k_extract = k_extract;
    c.k_bfp = k_bfp;
    c.k_fe = k_fe;
    c.k_pred = k_pred;
    c.interp_k = interp_k;
    c.slope = slope;
    c.input_feature_width = feature_width;
    c.use_bfp = !no_bfp;
    c.init_seed = seed;
    c.validate();
    return c;
  }
};

struct SceneFlags {
  std::size_t points = 512;
  std::size_t objects = 3;
  double rotation = 0.3;
  double translation = 0.5;
  double noise = 0.005;
  double occlusion = 0.0;
  std::size_t feature_width = 3;
  bool coord_features = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("--points", points, "points per frame");
    cmd->add_option("--objects", objects, "rigid objects per scene");
    cmd->add_option("--rotation", rotation, "max rotation angle (rad)");
    cmd->add_option("--translation", translation, "max translation per axis (m)");
    cmd->add_option("--noise", noise, "target coordinate noise sigma (m)");
    cmd->add_option("--occlusion", occlusion, "occluded fraction in [0,1)");
    cmd->add_option("--feature-width", feature_width, "feature channels");
    cmd->add_flag("--coord-features", coord_features, "use coordinates as features instead of ones");
  }

  SceneSpec to_spec(std::uint64_t seed) const {
    SceneSpec s;
    s.n_points = points;
    s.n_objects = objects;
    s.rotation_range = rotation;
    s.translation_range = translation;
    s.noise_sigma = noise;
    s.occlusion_fraction = occlusion;
    s.feature_width = feature_width;
    s.features_from_coords = coord_features;
    s.seed = seed;
    s.validate();
    return s;
  }
};

std::string pair_path(const std::string& prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "_%04zu", i);
  return prefix + buf + ".pair";
}

std::string flow_path(const std::string& prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "_%04zu", i);
  return prefix + buf + ".flow";
}

struct DataSet {
  std::vector<TrainItem> items;
  std::vector<std::optional<EvalMask>> masks;
};

DataSet load_pairs_dir(const std::string& dir) {
  std::vector<fs::path> pair_files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".pair") pair_files.push_back(entry.path());
  }
  if (pair_files.empty()) throw std::runtime_error("no .pair files found in '" + dir + "'");
  std::sort(pair_files.begin(), pair_files.end());
  DataSet data;
  for (const fs::path& p : pair_files) {
    fs::path f = p;
    f.replace_extension(".flow");
    if (!fs::exists(f)) throw std::runtime_error("missing flow file '" + f.string() + "' for '" + p.string() + "'");
    TrainItem item;
    item.pair = read_pair_file(p.string());
    FlowFileData flow = read_flow_file(f.string());
    if (flow.flow.n() != item.pair.source.n()) {
      throw std::runtime_error("'" + f.string() + "' has " + std::to_string(flow.flow.n()) +
                               " vectors for a source frame of " + std::to_string(item.pair.source.n()));
    }
    item.gt = std::move(flow.flow);
    data.items.push_back(std::move(item));
    data.masks.push_back(std::move(flow.mask));
  }
  return data;
}

FlowField finest_flow(const BiPointFlowNet& net, const FramePair& pair) {
  const auto flows = forward_flows(net, pair);
  return flows.back().second;  // level 0, full source resolution
}

int cmd_gen(const std::string& out_prefix, std::size_t count, const SceneFlags& scene, bool noncorresponding,
            std::uint64_t seed) {
  // Everything is generated before any file is written, so a failure can
  // not leave partial outputs behind.
  struct Ready {
    FramePair pair;
    FlowField gt;
    std::optional<EvalMask> mask;
  };
  std::vector<Ready> ready;
  for (std::size_t i = 0; i < count; ++i) {
    const SceneSpec spec = scene.to_spec(seed + i);
    GeneratedPair gp = generate_pair(spec);
    if (noncorresponding) gp.pair = resample_noncorresponding(gp.pair, spec);
    if (spec.occlusion_fraction > 0.0) gp = occlude(gp.pair, gp.gt, spec);
    Ready r;
    r.pair = std::move(gp.pair);
    r.gt = std::move(gp.gt);
    if (spec.occlusion_fraction > 0.0) r.mask = gp.mask;
    ready.push_back(std::move(r));
  }
  for (std::size_t i = 0; i < count; ++i) {
    write_pair_file(ready[i].pair, pair_path(out_prefix, i));
    write_flow_file(ready[i].gt, ready[i].mask ? &*ready[i].mask : nullptr, flow_path(out_prefix, i));
  }
  std::cout << "wrote " << count << " pair/flow file(s) at " << out_prefix << "_*\n";
  return 0;
}

int cmd_train(const std::string& pairs_dir, const std::string& out_path, const std::string& loss_csv,
              const ModelFlags& model, std::size_t epochs, double lr, std::size_t halve_every, std::uint64_t seed) {
  const DataSet data = load_pairs_dir(pairs_dir);
  const ModelConfig cfg = model.to_config(seed);
  BiPointFlowNet net = init_params(cfg, seed);
  TrainConfig tc;
  tc.epochs = epochs;
  tc.lr = lr;
  tc.halve_lr_every_epochs = halve_every;
  const TrainResult result = train(net, data.items, tc);
  save_checkpoint(net, out_path);
  if (!loss_csv.empty()) write_loss_csv(result.loss_history, loss_csv);
  std::cout << "trained " << result.loss_history.size() << " steps; final loss "
            << format_g17(result.loss_history.back()) << "; checkpoint " << out_path << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& pairs_dir) {
  const BiPointFlowNet net = load_checkpoint(checkpoint);
  const DataSet data = load_pairs_dir(pairs_dir);
  double epe_full_sum = 0.0, epe_masked_sum = 0.0;
  double acc3ds_sum = 0.0, acc3dr_sum = 0.0, outlier_sum = 0.0;
  std::size_t full_points = 0, masked_points = 0;
  for (std::size_t i = 0; i < data.items.size(); ++i) {
    const TrainItem& item = data.items[i];
    const FlowField pred = finest_flow(net, item.pair);
    const EvalMask* mask = data.masks[i] ? &*data.masks[i] : nullptr;
    const MetricReport r = evaluate_flow(pred, item.gt, mask);
    epe_full_sum += r.epe3d_full * static_cast<double>(r.points_full);
    full_points += r.points_full;
    if (r.epe3d) {
      epe_masked_sum += *r.epe3d * static_cast<double>(r.points_masked);
      acc3ds_sum += *r.acc3ds * static_cast<double>(r.points_masked);
      acc3dr_sum += *r.acc3dr * static_cast<double>(r.points_masked);
      outlier_sum += *r.outliers3d * static_cast<double>(r.points_masked);
      masked_points += r.points_masked;
    }
  }
  MetricReport total;
  total.epe3d_full = epe_full_sum / static_cast<double>(full_points);
  total.points_full = full_points;
  total.points_masked = masked_points;
  if (masked_points > 0) {
    total.epe3d = epe_masked_sum / static_cast<double>(masked_points);
    total.acc3ds = acc3ds_sum / static_cast<double>(masked_points);
    total.acc3dr = acc3dr_sum / static_cast<double>(masked_points);
    total.outliers3d = outlier_sum / static_cast<double>(masked_points);
  }
  std::cout << total.to_json_line() << "\n";
  return 0;
}

int cmd_infer(const std::string& checkpoint, const std::string& pair_file, const std::string& out_path) {
  const BiPointFlowNet net = load_checkpoint(checkpoint);
  const FramePair pair = read_pair_file(pair_file);
  const FlowField pred = finest_flow(net, pair);
  write_flow_file(pred, nullptr, out_path);
  std::cout << "wrote " << pred.n() << " flow vectors to " << out_path << "\n";
  return 0;
}

int cmd_bench(std::size_t np, std::size_t mp, std::size_t k, std::size_t c, std::size_t c_out, std::size_t reps,
              std::uint64_t seed, const std::string& out_path) {
  const TimingReport report = time_compare(np, mp, k, c, c_out, reps, seed);
  const std::string csv = timing_csv(report);
  if (out_path.empty()) {
    std::cout << csv;
  } else {
    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + out_path + "' for writing");
    out << csv;
  }
  std::fprintf(stderr, "op ratio %.6f, median naive %.3f ms vs decomposed %.3f ms\n", report.op_ratio,
               report.naive_median_ms, report.decomposed_median_ms);
  return 0;
}

int cmd_check(std::uint64_t seed, std::size_t instances) {
  std::vector<CheckResult> results = run_equivalence_suite(seed, instances);
  const std::vector<CheckResult> grads = run_gradient_suite(seed);
  results.insert(results.end(), grads.begin(), grads.end());
  bool all_pass = true;
  for (const CheckResult& r : results) {
    std::cout << (r.pass ? "[pass] " : "[FAIL] ") << r.name << " - " << r.detail << "\n";
    all_pass = all_pass && r.pass;
  }
  return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bidirectional scene-flow pipeline"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "generate synthetic pair/flow files");
  gen->set_config("--config");
  std::string gen_out;
  std::size_t gen_count = 1;
  std::uint64_t gen_seed = 1;
  bool gen_noncorr = false;
  SceneFlags scene;
  gen->add_option("--out", gen_out, "output prefix")->required();
  gen->add_option("--count", gen_count, "number of pairs");
  gen->add_option("--seed", gen_seed, "base seed");
  gen->add_flag("--noncorresponding", gen_noncorr, "independent target resampling");
  scene.attach(gen);

  // train
  auto* tr = app.add_subcommand("train", "train a model on a directory of pairs");
  tr->set_config("--config");
  std::string tr_pairs, tr_out, tr_csv;
  std::size_t tr_epochs = 10, tr_halve = 0;
  double tr_lr = 1e-3;
  std::uint64_t tr_seed = 1;
  ModelFlags tr_model;
  tr->add_option("--pairs", tr_pairs, "directory of .pair/.flow files")->required();
  tr->add_option("--out", tr_out, "checkpoint output path")->required();
  tr->add_option("--loss-csv", tr_csv, "loss history CSV path");
  tr->add_option("--epochs", tr_epochs, "passes over the data");
  tr->add_option("--lr", tr_lr, "learning rate");
  tr->add_option("--halve-every", tr_halve, "halve the rate every H epochs (0 = constant)");
  tr->add_option("--seed", tr_seed, "initialization seed");
  tr_model.attach(tr);

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on pairs with ground truth");
  ev->set_config("--config");
  std::string ev_ckpt, ev_pairs;
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint path")->required();
  ev->add_option("--pairs", ev_pairs, "directory of .pair/.flow files")->required();

  // infer
  auto* in = app.add_subcommand("infer", "predict flow for one pair file");
  in->set_config("--config");
  std::string in_ckpt, in_pair, in_out;
  in->add_option("--checkpoint", in_ckpt, "checkpoint path")->required();
  in->add_option("--pair", in_pair, "input pair file")->required();
  in->add_option("--out", in_out, "output flow file")->required();

  // bench
  auto* be = app.add_subcommand("bench", "compare embedding kernel op counts and wall time");
  be->set_config("--config");
  std::size_t be_np = 2048, be_mp = 2048, be_k = 16, be_c = 64, be_cout = 64, be_reps = 30;
  std::uint64_t be_seed = 1;
  std::string be_out;
  be->add_option("--np", be_np, "source points");
  be->add_option("--mp", be_mp, "target points");
  be->add_option("--k", be_k, "neighbors per group");
  be->add_option("--c", be_c, "feature width");
  be->add_option("--cout", be_cout, "output width");
  be->add_option("--reps", be_reps, "timed repetitions (>= 10)");
  be->add_option("--seed", be_seed, "instance seed");
  be->add_option("--out", be_out, "CSV output path (default stdout)");

  // check
  auto* ck = app.add_subcommand("check", "run the equivalence and gradient suites");
  ck->set_config("--config");
  std::uint64_t ck_seed = 1;
  std::size_t ck_instances = 100;
  ck->add_option("--seed", ck_seed, "suite seed");
  ck->add_option("--instances", ck_instances, "equivalence instances");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen(gen_out, gen_count, scene, gen_noncorr, gen_seed);
    if (tr->parsed()) return cmd_train(tr_pairs, tr_out, tr_csv, tr_model, tr_epochs, tr_lr, tr_halve, tr_seed);
    if (ev->parsed()) return cmd_eval(ev_ckpt, ev_pairs);
    if (in->parsed()) return cmd_infer(in_ckpt, in_pair, in_out);
    if (be->parsed()) return cmd_bench(be_np, be_mp, be_k, be_c, be_cout, be_reps, be_seed, be_out);
    if (ck->parsed()) return cmd_check(ck_seed, ck_instances);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
