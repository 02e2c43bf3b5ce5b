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

#include "biflow/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace biflow {

namespace {

[[noreturn]] void fail_at(const std::string& path, std::size_t line_no, const std::string& what) {
  throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + what);
}

// Data lines of the file with their 1-based line numbers; comment ('#')
// and blank lines are dropped.
std::vector<std::pair<std::size_t, std::string>> read_data_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::vector<std::pair<std::size_t, std::string>> lines;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::size_t start = line.find_first_not_of(" \t\r");
    if (start == std::string::npos) continue;
    if (line[start] == '#') continue;
    lines.emplace_back(line_no, line);
  }
  return lines;
}

double parse_finite(const std::string& token, const std::string& path, std::size_t line_no) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(token, &used);
  } catch (const std::exception&) {
    fail_at(path, line_no, "cannot parse '" + token + "' as a number");
  }
  if (used != token.size()) fail_at(path, line_no, "trailing junk in numeric token '" + token + "'");
  if (!std::isfinite(v)) fail_at(path, line_no, "non-finite value '" + token + "'");
  return v;
}

std::vector<std::string> split_tokens(const std::string& line) {
  std::istringstream s(line);
  std::vector<std::string> tokens;
  std::string t;
  while (s >> t) tokens.push_back(t);
  return tokens;
}

void write_text_file(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << body;
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

}  // namespace

std::string format_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_pair_file(const FramePair& pair, const std::string& path) {
  const std::size_t c = pair.source.feature_width();
  if (pair.target.feature_width() != c) {
    throw std::invalid_argument("pair file: source and target feature widths differ");
  }
  std::ostringstream out;
  out << "BIFLOW-PAIR v1 " << pair.source.n() << " " << pair.target.n() << " " << c << "\n";
  auto emit = [&](char tag, const PointCloud& cloud) {
    for (std::size_t i = 0; i < cloud.n(); ++i) {
      out << tag;
      for (std::size_t j = 0; j < 3; ++j) out << " " << format_g17(cloud.coords(i, j));
      for (std::size_t j = 0; j < c; ++j) out << " " << format_g17(cloud.feats(i, j));
      out << "\n";
    }
  };
  emit('S', pair.source);
  emit('T', pair.target);
  write_text_file(path, out.str());
}

FramePair read_pair_file(const std::string& path) {
  const auto lines = read_data_lines(path);
  if (lines.empty()) throw std::runtime_error(path + ": empty file");
  const auto header = split_tokens(lines[0].second);
  if (header.size() != 5 || header[0] != "BIFLOW-PAIR" || header[1] != "v1") {
    fail_at(path, lines[0].first, "expected header 'BIFLOW-PAIR v1 n_source n_target n_feat'");
  }
  std::size_t n_source = 0, n_target = 0, n_feat = 0;
  try {
    n_source = std::stoull(header[2]);
    n_target = std::stoull(header[3]);
    n_feat = std::stoull(header[4]);
  } catch (const std::exception&) {
    fail_at(path, lines[0].first, "malformed counts in header");
  }
  if (n_source == 0 || n_target == 0) fail_at(path, lines[0].first, "point counts must be positive");
  const std::size_t expected = 1 + n_source + n_target;
  if (lines.size() < expected) {
    fail_at(path, lines.back().first,
            "file ends after " + std::to_string(lines.size() - 1) + " point lines, header promises " +
                std::to_string(n_source + n_target));
  }
  if (lines.size() > expected) {
    fail_at(path, lines[expected].first, "unexpected extra line; header promises " +
                                             std::to_string(n_source + n_target) + " point lines");
  }

  Array s_coords({n_source, 3}), t_coords({n_target, 3});
  Array s_feats({n_source, std::max<std::size_t>(n_feat, 1)}), t_feats({n_target, std::max<std::size_t>(n_feat, 1)});
  if (n_feat == 0) fail_at(path, lines[0].first, "n_feat must be positive");

  auto parse_point = [&](std::size_t row, char tag, Array& coords, Array& feats, std::size_t local) {
    const auto& [line_no, text] = lines[row];
    const auto tokens = split_tokens(text);
    if (tokens.empty() || tokens[0] != std::string(1, tag)) {
      fail_at(path, line_no, std::string("expected a '") + tag + "' point line");
    }
    if (tokens.size() != 1 + 3 + n_feat) {
      fail_at(path, line_no,
              "expected " + std::to_string(4 + n_feat) + " tokens, got " + std::to_string(tokens.size()));
    }
    for (std::size_t j = 0; j < 3; ++j) coords(local, j) = parse_finite(tokens[1 + j], path, line_no);
    for (std::size_t j = 0; j < n_feat; ++j) feats(local, j) = parse_finite(tokens[4 + j], path, line_no);
  };
  for (std::size_t i = 0; i < n_source; ++i) parse_point(1 + i, 'S', s_coords, s_feats, i);
  for (std::size_t i = 0; i < n_target; ++i) parse_point(1 + n_source + i, 'T', t_coords, t_feats, i);

  FramePair pair;
  pair.source = PointCloud(std::move(s_coords), std::move(s_feats));
  pair.target = PointCloud(std::move(t_coords), std::move(t_feats));
  return pair;
}

void write_flow_file(const FlowField& flow, const EvalMask* mask, const std::string& path) {
  if (mask && mask->size() != flow.n()) {
    throw std::invalid_argument("flow file: mask length " + std::to_string(mask->size()) + " vs " +
                                std::to_string(flow.n()) + " vectors");
  }
  std::ostringstream out;
  out << "BIFLOW-FLOW v1 " << flow.n() << (mask ? " mask" : "") << "\n";
  for (std::size_t i = 0; i < flow.n(); ++i) {
    out << format_g17(flow.vectors(i, 0)) << " " << format_g17(flow.vectors(i, 1)) << " "
        << format_g17(flow.vectors(i, 2));
    if (mask) out << " " << (mask->keep[i] ? 1 : 0);
    out << "\n";
  }
  write_text_file(path, out.str());
}

FlowFileData read_flow_file(const std::string& path) {
  const auto lines = read_data_lines(path);
  if (lines.empty()) throw std::runtime_error(path + ": empty file");
  const auto header = split_tokens(lines[0].second);
  const bool bad_fixed = header.size() < 3 || header[0] != "BIFLOW-FLOW" || header[1] != "v1";
  const bool has_mask = header.size() == 4 && header[3] == "mask";
  if (bad_fixed || (header.size() != 3 && !has_mask)) {
    fail_at(path, lines[0].first, "expected header 'BIFLOW-FLOW v1 n [mask]'");
  }
  std::size_t n = 0;
  try {
    n = std::stoull(header[2]);
  } catch (const std::exception&) {
    fail_at(path, lines[0].first, "malformed count in header");
  }
  if (n == 0) fail_at(path, lines[0].first, "vector count must be positive");
  if (lines.size() < 1 + n) {
    fail_at(path, lines.back().first, "file ends after " + std::to_string(lines.size() - 1) +
                                          " rows, header promises " + std::to_string(n));
  }
  if (lines.size() > 1 + n) {
    fail_at(path, lines[1 + n].first, "unexpected extra line; header promises " + std::to_string(n) + " rows");
  }
  Array vectors({n, 3});
  EvalMask mask;
  if (has_mask) mask.keep.assign(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& [line_no, text] = lines[1 + i];
    const auto tokens = split_tokens(text);
    const std::size_t want = has_mask ? 4 : 3;
    if (tokens.size() != want) {
      fail_at(path, line_no, "expected " + std::to_string(want) + " tokens, got " + std::to_string(tokens.size()));
    }
    for (std::size_t j = 0; j < 3; ++j) vectors(i, j) = parse_finite(tokens[j], path, line_no);
    if (has_mask) {
      if (tokens[3] != "0" && tokens[3] != "1") fail_at(path, line_no, "mask bit must be 0 or 1");
      mask.keep[i] = tokens[3] == "1" ? 1 : 0;
    }
  }
  FlowFileData out;
  out.flow = FlowField(std::move(vectors));
  if (has_mask) out.mask = std::move(mask);
  return out;
}

}  // namespace biflow
