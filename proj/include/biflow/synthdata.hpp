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
#include <vector>

#include "biflow/geometry.hpp"
#include "biflow/metrics.hpp"

namespace biflow {

enum class ShapeKind { kSphere, kBox, kPlane };

/// Recipe for a deterministic multi-object rigid-motion scene. Target
/// coordinates carry per-component noise truncated at 3 sigma; ground
/// truth stays exact (pre-noise).
struct SceneSpec {
  std::size_t n_points = 512;
  std::size_t n_objects = 3;
  std::vector<ShapeKind> shape_kinds{ShapeKind::kSphere, ShapeKind::kBox, ShapeKind::kPlane};
  double rotation_range = 0.3;     // radians, about the origin
  double translation_range = 0.5;  // meters, per component
  double noise_sigma = 0.005;      // meters
  double occlusion_fraction = 0.0;
  std::uint64_t seed = 1;
  std::size_t feature_width = 3;
  bool features_from_coords = false;  // default constant ones

  void validate() const;
};

struct SceneObject {
  ShapeKind kind;
  double center[3];
  double size;       // radius / half-extent / patch half-width
  double orient[9];  // surface orientation (row-major rotation)
  double rot[9];     // motion rotation about the origin
  double trans[3];   // motion translation
};

struct Scene {
  std::vector<SceneObject> objects;
};

// Pure function of the spec (its seed included).
Scene build_scene(const SceneSpec& spec);

struct GeneratedPair {
  FramePair pair;
  FlowField gt;
  EvalMask mask;
};

// Corresponded frames: target point i is source point i under its object's
// rigid motion, plus truncated noise. Ground truth is the exact pre-noise
// displacement; the mask starts all-true.
GeneratedPair generate_pair(const SceneSpec& spec);

// Replaces the target frame with an independent surface draw moved by the
// same motions, so no index correspondence survives. Drawing with the
// source seed reproduces the corresponded target of generate_pair.
FramePair resample_noncorresponding(const FramePair& pair, const SceneSpec& spec);
FramePair resample_noncorresponding(const FramePair& pair, const SceneSpec& spec, std::uint64_t target_draw_seed);

std::uint64_t source_draw_seed(const SceneSpec& spec);
std::uint64_t default_target_draw_seed(const SceneSpec& spec);

// Deletes the target points whose moved source counterparts fall in a
// seeded half-space covering roughly occlusion_fraction of the scene and
// flags the matching source points in the mask. Ground-truth rows are
// retained.
GeneratedPair occlude(const FramePair& pair, const FlowField& gt, const SceneSpec& spec);

// Distance from a point to the object's moved surface (analytic; used as
// a test oracle).
double distance_to_moved_surface(const SceneObject& obj, const double* point);

// Object owning sampled point index i.
std::size_t object_of_point(const SceneSpec& spec, std::size_t i);

}  // namespace biflow
