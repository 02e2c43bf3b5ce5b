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

#include <optional>
#include <string>

#include "biflow/geometry.hpp"
#include "biflow/metrics.hpp"

namespace biflow {

// Frame-pair text format: a "BIFLOW-PAIR v1 n_source n_target n_feat"
// header, then one "S x y z f1..fC" line per source point followed by one
// "T ..." line per target point. '#' lines are comments; values are
// written with 17 significant digits so doubles round-trip exactly.
void write_pair_file(const FramePair& pair, const std::string& path);
FramePair read_pair_file(const std::string& path);

struct FlowFileData {
  FlowField flow;
  std::optional<EvalMask> mask;
};

// Flow text format: "BIFLOW-FLOW v1 n [mask]" then "vx vy vz [m]" rows,
// the trailing 0/1 present exactly when the header says mask.
void write_flow_file(const FlowField& flow, const EvalMask* mask, const std::string& path);
FlowFileData read_flow_file(const std::string& path);

// %.17g rendering shared by every text emitter.
std::string format_g17(double v);

}  // namespace biflow
