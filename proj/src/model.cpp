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

#include "biflow/model.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "biflow/rng.hpp"

namespace biflow {

namespace {

std::string join_counts(const std::vector<std::size_t>& v) {
  std::ostringstream s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s << ",";
    s << v[i];
  }
  return s.str();
}

std::vector<std::size_t> parse_counts(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream s(text);
  std::string item;
  while (std::getline(s, item, ',')) {
    if (item.empty()) throw std::invalid_argument("config: empty entry in count list '" + text + "'");
    out.push_back(static_cast<std::size_t>(std::stoull(item)));
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void ModelConfig::validate() const {
  if (levels < 2) throw std::invalid_argument("ModelConfig: levels must be >= 2, got " + std::to_string(levels));
  if (points_per_level.size() != levels) {
    throw std::invalid_argument("ModelConfig: points_per_level must have exactly L=" + std::to_string(levels) +
                                " entries, got " + std::to_string(points_per_level.size()));
  }
  if (channels_per_level.size() != levels) {
    throw std::invalid_argument("ModelConfig: channels_per_level must have exactly L=" + std::to_string(levels) +
                                " entries, got " + std::to_string(channels_per_level.size()));
  }
  for (std::size_t i = 0; i < levels; ++i) {
    if (points_per_level[i] == 0) throw std::invalid_argument("ModelConfig: level point counts must be positive");
    if (channels_per_level[i] == 0) throw std::invalid_argument("ModelConfig: channel widths must be positive");
    if (i > 0 && points_per_level[i] >= points_per_level[i - 1]) {
      throw std::invalid_argument("ModelConfig: points_per_level must be strictly decreasing, got " +
                                  join_counts(points_per_level));
    }
  }
  const std::size_t coarsest = points_per_level.back();
  for (auto [k, name] : {std::pair<std::size_t, const char*>{k_extract, "k_extract"},
                         {k_bfp, "k_bfp"},
                         {k_fe, "k_fe"},
                         {k_pred, "k_pred"},
                         {interp_k, "interp_k"}}) {
    if (k == 0) throw std::invalid_argument(std::string("ModelConfig: ") + name + " must be positive");
    if (k > coarsest) {
      throw std::invalid_argument(std::string("ModelConfig: ") + name + "=" + std::to_string(k) +
                                  " exceeds the coarsest level size " + std::to_string(coarsest));
    }
  }
  if (!(slope >= 0.0 && slope < 1.0)) {
    throw std::invalid_argument("ModelConfig: activation slope must be in [0, 1)");
  }
  if (input_feature_width == 0) throw std::invalid_argument("ModelConfig: input_feature_width must be positive");
}

std::size_t ModelConfig::extract_width(std::size_t level) const {
  return level == 0 ? input_feature_width : channels_per_level[level - 1];
}

std::size_t ModelConfig::decoder_width(std::size_t level) const {
  return channels_per_level[level == 0 ? 0 : level - 1];
}

std::size_t ModelConfig::fused_width(std::size_t level) const {
  std::size_t w = extract_width(level);
  if (use_bfp) w += decoder_width(level);
  w += decoder_width(level);  // correlation embedding
  if (level < levels) w += decoder_width(level + 1);
  return w + 3;  // upsampled (or bootstrap zero) flow
}

std::map<std::string, std::string> ModelConfig::to_kv() const {
  std::map<std::string, std::string> kv;
  kv["levels"] = std::to_string(levels);
  kv["points_per_level"] = join_counts(points_per_level);
  kv["channels_per_level"] = join_counts(channels_per_level);
  kv["k_extract"] = std::to_string(k_extract);
  kv["k_bfp"] = std::to_string(k_bfp);
  kv["k_fe"] = std::to_string(k_fe);
  kv["k_pred"] = std::to_string(k_pred);
  kv["interp_k"] = std::to_string(interp_k);
  kv["slope"] = format_double(slope);
  kv["init_seed"] = std::to_string(init_seed);
  kv["input_feature_width"] = std::to_string(input_feature_width);
  kv["use_bfp"] = use_bfp ? "1" : "0";
  return kv;
}

ModelConfig ModelConfig::from_kv(const std::map<std::string, std::string>& kv) {
  ModelConfig c;
  auto need = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw std::invalid_argument(std::string("config: missing key '") + key + "'");
    return it->second;
  };
  c.levels = std::stoull(need("levels"));
  c.points_per_level = parse_counts(need("points_per_level"));
  c.channels_per_level = parse_counts(need("channels_per_level"));
  c.k_extract = std::stoull(need("k_extract"));
  c.k_bfp = std::stoull(need("k_bfp"));
  c.k_fe = std::stoull(need("k_fe"));
  c.k_pred = std::stoull(need("k_pred"));
  c.interp_k = std::stoull(need("interp_k"));
  c.slope = std::stod(need("slope"));
  c.init_seed = std::stoull(need("init_seed"));
  c.input_feature_width = std::stoull(need("input_feature_width"));
  c.use_bfp = need("use_bfp") == "1";
  for (const auto& [key, value] : kv) {
    (void)value;
    static const char* known[] = {"levels",   "points_per_level", "channels_per_level", "k_extract",
                                  "k_bfp",    "k_fe",             "k_pred",             "interp_k",
                                  "slope",    "init_seed",        "input_feature_width", "use_bfp"};
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw std::invalid_argument("config: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

namespace {

SetLayer make_set_layer(std::vector<std::size_t> blocks, std::size_t out, double slope, bool activate_last = true) {
  SetLayer layer;
  const std::size_t in = std::accumulate(blocks.begin(), blocks.end(), std::size_t{0});
  layer.weights.push_back(Array({in, out}));
  layer.biases.push_back(Array({out}));
  layer.input_blocks = std::move(blocks);
  layer.slope = slope;
  layer.activate_last = activate_last;
  return layer;
}

}  // namespace

BiPointFlowNet make_net(const ModelConfig& config) {
  config.validate();
  BiPointFlowNet net;
  net.config = config;
  const std::size_t levels = config.levels;
  for (std::size_t l = 1; l <= levels; ++l) {
    net.extract.push_back(
        make_set_layer({3, config.extract_width(l - 1)}, config.extract_width(l), config.slope));
  }
  for (std::size_t level = 0; level <= levels; ++level) {
    const std::size_t ew = config.extract_width(level);
    const std::size_t dw = config.decoder_width(level);
    if (config.use_bfp) {
      BfeLayer bfe;
      bfe.k = config.k_bfp;
      bfe.c_in = ew;
      bfe.c_out = dw;
      bfe.slope = config.slope;
      bfe.decomposed = true;
      bfe.w_pos = Array({3, dw});
      bfe.w_bi = Array({ew, dw});
      bfe.w_rep = Array({ew, dw});
      net.bfe.push_back(std::move(bfe));
    }
    const std::size_t corr_in = config.use_bfp ? dw : ew;
    net.fe.push_back(make_set_layer({3, corr_in, corr_in}, dw, config.slope));
    net.pred_conv.push_back(make_set_layer({3, config.fused_width(level)}, dw, config.slope));
    net.pred_head.push_back(make_set_layer({dw}, 3, config.slope, /*activate_last=*/false));
  }
  return net;
}

namespace {

void visit_set(const std::string& prefix, SetLayer& layer,
               const std::function<void(const std::string&, Array&)>& fn) {
  for (std::size_t d = 0; d < layer.depth(); ++d) {
    fn(prefix + ".w" + std::to_string(d), layer.weights[d]);
    fn(prefix + ".b" + std::to_string(d), layer.biases[d]);
  }
}

}  // namespace

void BiPointFlowNet::visit_params(const std::function<void(const std::string&, Array&)>& fn) {
  for (std::size_t l = 0; l < extract.size(); ++l) visit_set("extract." + std::to_string(l + 1), extract[l], fn);
  for (std::size_t level = 0; level < bfe.size(); ++level) {
    const std::string prefix = "bfe." + std::to_string(level);
    fn(prefix + ".wpos", bfe[level].w_pos);
    fn(prefix + ".wbi", bfe[level].w_bi);
    fn(prefix + ".wrep", bfe[level].w_rep);
  }
  for (std::size_t level = 0; level < fe.size(); ++level) visit_set("fe." + std::to_string(level), fe[level], fn);
  for (std::size_t level = 0; level < pred_conv.size(); ++level) {
    visit_set("pred." + std::to_string(level) + ".conv", pred_conv[level], fn);
  }
  for (std::size_t level = 0; level < pred_head.size(); ++level) {
    visit_set("pred." + std::to_string(level) + ".head", pred_head[level], fn);
  }
}

void BiPointFlowNet::visit_params(const std::function<void(const std::string&, const Array&)>& fn) const {
  auto& self = const_cast<BiPointFlowNet&>(*this);
  self.visit_params([&](const std::string& name, Array& a) { fn(name, a); });
}

BiPointFlowNet init_params(const ModelConfig& config, std::uint64_t seed) {
  BiPointFlowNet net = make_net(config);
  net.config.init_seed = seed;
  Rng rng(derive_seed(seed, "init"));
  // The three decomposed weights of one layer share the stacked fan-in, so
  // initialization matches a draw of the equivalent naive weight.
  std::map<std::string, std::size_t> fan_in_override;
  for (std::size_t level = 0; level < net.bfe.size(); ++level) {
    const std::size_t full = 3 + 2 * net.bfe[level].c_in;
    const std::string prefix = "bfe." + std::to_string(level);
    fan_in_override[prefix + ".wpos"] = full;
    fan_in_override[prefix + ".wbi"] = full;
    fan_in_override[prefix + ".wrep"] = full;
  }
  net.visit_params([&](const std::string& name, Array& a) {
    const bool is_bias = name.find(".b") != std::string::npos && a.rank() == 1;
    if (is_bias) return;  // biases stay zero
    std::size_t fan_in = a.shape[0];
    auto it = fan_in_override.find(name);
    if (it != fan_in_override.end()) fan_in = it->second;
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (double& v : a.data) v = rng.uniform(-bound, bound);
  });
  return net;
}

std::size_t param_count(const BiPointFlowNet& net) {
  std::size_t count = 0;
  net.visit_params([&](const std::string&, const Array& a) { count += a.size(); });
  return count;
}

namespace {

struct NetIds {
  std::vector<SetLayerIds> extract;
  std::vector<BfeIds> bfe;
  std::vector<SetLayerIds> fe;
  std::vector<SetLayerIds> conv;
  std::vector<SetLayerIds> head;
  std::vector<ValueId> flat;
};

NetIds leaf_net(Tape& tape, const BiPointFlowNet& net) {
  std::map<std::string, ValueId> by_name;
  NetIds ids;
  net.visit_params([&](const std::string& name, const Array& a) {
    const ValueId id = tape.leaf(a);
    ids.flat.push_back(id);
    by_name[name] = id;
  });
  auto set_ids = [&](const std::string& prefix, const SetLayer& layer) {
    SetLayerIds s;
    for (std::size_t d = 0; d < layer.depth(); ++d) {
      s.weights.push_back(by_name.at(prefix + ".w" + std::to_string(d)));
      s.biases.push_back(by_name.at(prefix + ".b" + std::to_string(d)));
    }
    return s;
  };
  for (std::size_t l = 0; l < net.extract.size(); ++l) {
    ids.extract.push_back(set_ids("extract." + std::to_string(l + 1), net.extract[l]));
  }
  for (std::size_t level = 0; level < net.bfe.size(); ++level) {
    const std::string prefix = "bfe." + std::to_string(level);
    BfeIds b;
    b.decomposed = true;
    b.w_pos = by_name.at(prefix + ".wpos");
    b.w_bi = by_name.at(prefix + ".wbi");
    b.w_rep = by_name.at(prefix + ".wrep");
    ids.bfe.push_back(b);
  }
  for (std::size_t level = 0; level < net.fe.size(); ++level) {
    ids.fe.push_back(set_ids("fe." + std::to_string(level), net.fe[level]));
    ids.conv.push_back(set_ids("pred." + std::to_string(level) + ".conv", net.pred_conv[level]));
    ids.head.push_back(set_ids("pred." + std::to_string(level) + ".head", net.pred_head[level]));
  }
  return ids;
}

}  // namespace

ForwardResult forward(Tape& tape, const BiPointFlowNet& net, const FramePair& pair) {
  const ModelConfig& cfg = net.config;
  cfg.validate();
  const std::size_t levels = cfg.levels;
  const std::size_t densest = cfg.points_per_level.front();
  if (pair.source.n() < densest || pair.target.n() < densest) {
    throw std::invalid_argument("forward: frame sizes (" + std::to_string(pair.source.n()) + ", " +
                                std::to_string(pair.target.n()) + ") must be >= level-1 size " +
                                std::to_string(densest));
  }
  if (pair.source.feature_width() != cfg.input_feature_width ||
      pair.target.feature_width() != cfg.input_feature_width) {
    throw std::invalid_argument("forward: frame feature width does not match config width " +
                                std::to_string(cfg.input_feature_width));
  }

  const NetIds ids = leaf_net(tape, net);

  // Shared hierarchical extraction on both frames.
  std::vector<TapeCloud> src(levels + 1), tgt(levels + 1);
  src[0] = put_cloud(tape, pair.source);
  tgt[0] = put_cloud(tape, pair.target);
  std::vector<std::vector<std::size_t>> orig_idx(levels + 1);
  orig_idx[0].resize(pair.source.n());
  std::iota(orig_idx[0].begin(), orig_idx[0].end(), std::size_t{0});
  for (std::size_t l = 1; l <= levels; ++l) {
    const std::size_t n_out = cfg.points_per_level[l - 1];
    const std::vector<std::size_t> s_fps = furthest_point_sample(tape.value(src[l - 1].coords), n_out);
    src[l] = pointconv(tape, src[l - 1], s_fps, cfg.k_extract, net.extract[l - 1], ids.extract[l - 1]);
    orig_idx[l].resize(n_out);
    for (std::size_t i = 0; i < n_out; ++i) orig_idx[l][i] = orig_idx[l - 1][s_fps[i]];
    const std::vector<std::size_t> t_fps = furthest_point_sample(tape.value(tgt[l - 1].coords), n_out);
    tgt[l] = pointconv(tape, tgt[l - 1], t_fps, cfg.k_extract, net.extract[l - 1], ids.extract[l - 1]);
  }

  ForwardResult out;
  out.param_ids = ids.flat;

  // Coarse-to-fine refinement; the level-L pass seeds the flow from zero
  // and only feeds the upsampler.
  ValueId flow_up = 0;
  ValueId up_feats = 0;
  bool have_up = false;
  for (std::size_t level = levels + 1; level-- > 0;) {
    const TapeCloud& s = src[level];
    const TapeCloud& t = tgt[level];
    if (level == levels) flow_up = tape.leaf(Array({s.n, 3}));
    const ValueId warped = tape.add(s.coords, flow_up);
    TapeCloud p{warped, s.feats, s.n, s.c};
    TapeCloud p_aug = p, q_aug = t;
    if (cfg.use_bfp) {
      auto aug = bfp_decomposed(tape, p, t, net.bfe[level], ids.bfe[level]);
      p_aug = aug.first;
      q_aug = aug.second;
    }
    const ValueId corr = flow_embedding(tape, p_aug, q_aug, cfg.k_fe, net.fe[level], ids.fe[level]);
    std::vector<ValueId> fused_parts{s.feats};
    if (cfg.use_bfp) fused_parts.push_back(p_aug.feats);
    fused_parts.push_back(corr);
    if (have_up) fused_parts.push_back(up_feats);
    fused_parts.push_back(flow_up);
    const ValueId fused = tape.concat_cols(fused_parts);
    const PredictResult pred = predict_flow(tape, warped, flow_up, fused, cfg.k_pred, net.pred_conv[level],
                                            ids.conv[level], net.pred_head[level], ids.head[level]);
    if (level < levels) {
      out.flow_ids.push_back(pred.flow);
      out.flow_levels.push_back(level);
      out.sample_indices.push_back(orig_idx[level]);
    }
    if (level == 0) break;
    const UpsampleResult up = upsample(tape, tape.value(s.coords), pred.smooth, pred.flow,
                                       tape.value(src[level - 1].coords), cfg.interp_k);
    up_feats = up.feats;
    flow_up = up.flow;
    have_up = true;
  }
  return out;
}

std::vector<std::pair<std::size_t, FlowField>> forward_flows(const BiPointFlowNet& net, const FramePair& pair) {
  Tape tape;
  const ForwardResult r = forward(tape, net, pair);
  std::vector<std::pair<std::size_t, FlowField>> out;
  out.reserve(r.flow_ids.size());
  for (std::size_t i = 0; i < r.flow_ids.size(); ++i) {
    out.emplace_back(r.flow_levels[i], FlowField(tape.value(r.flow_ids[i])));
  }
  return out;
}

namespace {

constexpr char kMagic[8] = {'B', 'I', 'F', 'L', 'O', 'W', '0', '1'};

void write_u64(std::ostream& out, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t read_u64(std::istream& in) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

void write_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  write_u64(out, bits);
}

double read_f64(std::istream& in) {
  const std::uint64_t bits = read_u64(in);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace

void save_checkpoint(const BiPointFlowNet& net, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
  out.write(kMagic, 8);
  std::ostringstream cfg;
  for (const auto& [key, value] : net.config.to_kv()) cfg << key << "=" << value << "\n";
  const std::string cfg_text = cfg.str();
  write_u64(out, cfg_text.size());
  out.write(cfg_text.data(), static_cast<std::streamsize>(cfg_text.size()));
  std::uint64_t n_params = 0;
  net.visit_params([&](const std::string&, const Array&) { ++n_params; });
  write_u64(out, n_params);
  net.visit_params([&](const std::string& name, const Array& a) {
    write_u64(out, name.size());
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u64(out, a.rank());
    for (std::size_t e : a.shape) write_u64(out, e);
    for (double v : a.data) write_f64(out, v);
  });
  if (!out) throw std::runtime_error("checkpoint: write to '" + path + "' failed");
}

BiPointFlowNet load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) {
    throw std::runtime_error("checkpoint: '" + path + "' does not start with the BIFLOW01 magic");
  }
  const std::uint64_t cfg_len = read_u64(in);
  std::string cfg_text(cfg_len, '\0');
  in.read(cfg_text.data(), static_cast<std::streamsize>(cfg_len));
  if (!in) throw std::runtime_error("checkpoint: truncated config block");
  std::map<std::string, std::string> kv;
  std::istringstream cfg_stream(cfg_text);
  std::string line;
  while (std::getline(cfg_stream, line)) {
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error("checkpoint: malformed config line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  BiPointFlowNet net = make_net(ModelConfig::from_kv(kv));

  const std::uint64_t n_params = read_u64(in);
  std::map<std::string, Array> loaded;
  for (std::uint64_t p = 0; p < n_params; ++p) {
    const std::uint64_t name_len = read_u64(in);
    std::string name(name_len, '\0');
    in.read(name.data(), static_cast<std::streamsize>(name_len));
    if (!in) throw std::runtime_error("checkpoint: truncated parameter name");
    const std::uint64_t rank = read_u64(in);
    std::vector<std::size_t> shape(rank);
    for (std::uint64_t i = 0; i < rank; ++i) shape[i] = read_u64(in);
    Array a(shape);
    for (double& v : a.data) v = read_f64(in);
    loaded.emplace(std::move(name), std::move(a));
  }
  std::size_t assigned = 0;
  net.visit_params([&](const std::string& name, Array& a) {
    auto it = loaded.find(name);
    if (it == loaded.end()) throw std::runtime_error("checkpoint: parameter '" + name + "' missing from file");
    if (it->second.shape != a.shape) {
      throw std::runtime_error("checkpoint: parameter '" + name + "' has shape " + shape_str(it->second) +
                               ", expected " + shape_str(a));
    }
    a = it->second;
    ++assigned;
  });
  if (assigned != loaded.size()) {
    throw std::runtime_error("checkpoint: file carries " + std::to_string(loaded.size()) +
                             " parameters, model expects " + std::to_string(assigned));
  }
  return net;
}

}  // namespace biflow
