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

#include "biflow/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "biflow/rng.hpp"

namespace biflow {

namespace {

void unit_vector(Rng& rng, double* out) {
  double n2 = 0.0;
  do {
    for (int i = 0; i < 3; ++i) out[i] = rng.normal();
    n2 = out[0] * out[0] + out[1] * out[1] + out[2] * out[2];
  } while (n2 < 1e-12);
  const double inv = 1.0 / std::sqrt(n2);
  for (int i = 0; i < 3; ++i) out[i] *= inv;
}

// Rodrigues rotation matrix for a unit axis and angle, row-major.
void axis_angle_matrix(const double* axis, double angle, double* m) {
  const double c = std::cos(angle), s = std::sin(angle), t = 1.0 - c;
  const double x = axis[0], y = axis[1], z = axis[2];
  m[0] = t * x * x + c;
  m[1] = t * x * y - s * z;
  m[2] = t * x * z + s * y;
  m[3] = t * x * y + s * z;
  m[4] = t * y * y + c;
  m[5] = t * y * z - s * x;
  m[6] = t * x * z - s * y;
  m[7] = t * y * z + s * x;
  m[8] = t * z * z + c;
}

void mat_apply(const double* m, const double* v, double* out) {
  out[0] = m[0] * v[0] + m[1] * v[1] + m[2] * v[2];
  out[1] = m[3] * v[0] + m[4] * v[1] + m[5] * v[2];
  out[2] = m[6] * v[0] + m[7] * v[1] + m[8] * v[2];
}

void mat_apply_transposed(const double* m, const double* v, double* out) {
  out[0] = m[0] * v[0] + m[3] * v[1] + m[6] * v[2];
  out[1] = m[1] * v[0] + m[4] * v[1] + m[7] * v[2];
  out[2] = m[2] * v[0] + m[5] * v[1] + m[8] * v[2];
}

void random_rotation(Rng& rng, double* m) {
  double axis[3];
  unit_vector(rng, axis);
  axis_angle_matrix(axis, rng.uniform(0.0, 6.283185307179586), m);
}

// One surface point of an object in world coordinates.
void sample_surface_point(Rng& rng, const SceneObject& obj, double* out) {
  double local[3] = {0, 0, 0};
  switch (obj.kind) {
    case ShapeKind::kSphere: {
      unit_vector(rng, local);
      for (int i = 0; i < 3; ++i) local[i] *= obj.size;
      break;
    }
    case ShapeKind::kBox: {
      const std::size_t face = rng.index(6);
      const double u = rng.uniform(-obj.size, obj.size);
      const double v = rng.uniform(-obj.size, obj.size);
      const std::size_t axis = face / 2;
      const double sign = (face % 2 == 0) ? 1.0 : -1.0;
      local[axis] = sign * obj.size;
      local[(axis + 1) % 3] = u;
      local[(axis + 2) % 3] = v;
      break;
    }
    case ShapeKind::kPlane: {
      local[0] = rng.uniform(-obj.size, obj.size);
      local[1] = rng.uniform(-obj.size, obj.size);
      local[2] = 0.0;
      break;
    }
  }
  double oriented[3];
  mat_apply(obj.orient, local, oriented);
  for (int i = 0; i < 3; ++i) out[i] = oriented[i] + obj.center[i];
}

void move_point(const SceneObject& obj, const double* x, double* out) {
  double rotated[3];
  mat_apply(obj.rot, x, rotated);
  for (int i = 0; i < 3; ++i) out[i] = rotated[i] + obj.trans[i];
}

// All surface samples of one frame draw, in point-index order.
Array draw_samples(const SceneSpec& spec, const Scene& scene, std::uint64_t draw_seed) {
  Rng rng(derive_seed(draw_seed, "draw"));
  Array coords({spec.n_points, 3});
  for (std::size_t i = 0; i < spec.n_points; ++i) {
    const SceneObject& obj = scene.objects[object_of_point(spec, i)];
    sample_surface_point(rng, obj, &coords.data[3 * i]);
  }
  return coords;
}

Array make_features(const SceneSpec& spec, const Array& coords) {
  if (spec.features_from_coords) return coords;
  Array f({coords.rows(), spec.feature_width});
  std::fill(f.data.begin(), f.data.end(), 1.0);
  return f;
}

// Per-component gaussian truncated at +/- 3 sigma, so the displacement of
// a noisy point is hard-bounded by 3*sqrt(3)*sigma < 6 sigma.
void add_truncated_noise(Rng& rng, Array& coords, double sigma) {
  if (sigma == 0.0) return;
  for (double& v : coords.data) {
    double n = rng.normal();
    n = std::clamp(n, -3.0, 3.0);
    v += sigma * n;
  }
}

Array moved_coords(const SceneSpec& spec, const Scene& scene, const Array& samples) {
  Array out({samples.rows(), 3});
  for (std::size_t i = 0; i < samples.rows(); ++i) {
    const SceneObject& obj = scene.objects[object_of_point(spec, i)];
    move_point(obj, &samples.data[3 * i], &out.data[3 * i]);
  }
  return out;
}

}  // namespace

void SceneSpec::validate() const {
  if (n_points == 0) throw std::invalid_argument("SceneSpec: n_points must be positive");
  if (n_objects == 0) throw std::invalid_argument("SceneSpec: n_objects must be positive");
  if (shape_kinds.empty()) throw std::invalid_argument("SceneSpec: at least one shape kind required");
  if (rotation_range < 0.0 || translation_range < 0.0 || noise_sigma < 0.0) {
    throw std::invalid_argument("SceneSpec: ranges must be non-negative");
  }
  if (!(occlusion_fraction >= 0.0 && occlusion_fraction < 1.0)) {
    throw std::invalid_argument("SceneSpec: occlusion fraction must lie in [0, 1), got " +
                                std::to_string(occlusion_fraction));
  }
  if (feature_width == 0) throw std::invalid_argument("SceneSpec: feature_width must be positive");
  if (features_from_coords && feature_width != 3) {
    throw std::invalid_argument("SceneSpec: coordinate features require feature_width == 3");
  }
  if (n_points < n_objects) throw std::invalid_argument("SceneSpec: need at least one point per object");
}

std::size_t object_of_point(const SceneSpec& spec, std::size_t i) { return i % spec.n_objects; }

std::uint64_t source_draw_seed(const SceneSpec& spec) { return derive_seed(spec.seed, "source"); }

std::uint64_t default_target_draw_seed(const SceneSpec& spec) { return derive_seed(spec.seed, "target"); }

Scene build_scene(const SceneSpec& spec) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, "scene"));
  Scene scene;
  scene.objects.resize(spec.n_objects);
  for (std::size_t o = 0; o < spec.n_objects; ++o) {
    SceneObject& obj = scene.objects[o];
    obj.kind = spec.shape_kinds[o % spec.shape_kinds.size()];
    for (int i = 0; i < 3; ++i) obj.center[i] = rng.uniform(-1.5, 1.5);
    obj.size = rng.uniform(0.4, 1.0);
    random_rotation(rng, obj.orient);
    double axis[3];
    unit_vector(rng, axis);
    axis_angle_matrix(axis, rng.uniform(-spec.rotation_range, spec.rotation_range), obj.rot);
    for (int i = 0; i < 3; ++i) obj.trans[i] = rng.uniform(-spec.translation_range, spec.translation_range);
  }
  return scene;
}

GeneratedPair generate_pair(const SceneSpec& spec) {
  const Scene scene = build_scene(spec);
  const Array samples = draw_samples(spec, scene, source_draw_seed(spec));
  const Array moved = moved_coords(spec, scene, samples);

  Array target_coords = moved;
  Rng noise_rng(derive_seed(source_draw_seed(spec), "noise"));
  add_truncated_noise(noise_rng, target_coords, spec.noise_sigma);

  GeneratedPair out;
  out.pair.source = PointCloud(samples, make_features(spec, samples));
  out.pair.target = PointCloud(target_coords, make_features(spec, target_coords));
  out.gt = FlowField(sub(moved, samples));
  out.mask = EvalMask::all(spec.n_points);
  return out;
}

FramePair resample_noncorresponding(const FramePair& pair, const SceneSpec& spec) {
  return resample_noncorresponding(pair, spec, default_target_draw_seed(spec));
}

FramePair resample_noncorresponding(const FramePair& pair, const SceneSpec& spec, std::uint64_t target_draw_seed) {
  const Scene scene = build_scene(spec);
  const Array samples = draw_samples(spec, scene, target_draw_seed);
  Array target_coords = moved_coords(spec, scene, samples);
  Rng noise_rng(derive_seed(target_draw_seed, "noise"));
  add_truncated_noise(noise_rng, target_coords, spec.noise_sigma);
  FramePair out;
  out.source = pair.source;
  out.target = PointCloud(target_coords, make_features(spec, target_coords));
  return out;
}

GeneratedPair occlude(const FramePair& pair, const FlowField& gt, const SceneSpec& spec) {
  spec.validate();
  if (gt.n() != pair.source.n()) {
    throw std::invalid_argument("occlude: ground truth rows " + std::to_string(gt.n()) + " vs source points " +
                                std::to_string(pair.source.n()));
  }
  GeneratedPair out;
  out.pair = pair;
  out.gt = gt;
  out.mask = EvalMask::all(pair.source.n());
  const double f = spec.occlusion_fraction;
  const std::size_t n = pair.source.n();
  const std::size_t target_occluded = static_cast<std::size_t>(std::llround(f * static_cast<double>(n)));
  if (target_occluded == 0) return out;

  Rng rng(derive_seed(spec.seed, "occlude"));
  double normal[3];
  unit_vector(rng, normal);

  // Half-space threshold at the requested quantile of the moved source
  // projections.
  std::vector<double> proj(n);
  const Array moved = add(pair.source.coords, gt.vectors);
  for (std::size_t i = 0; i < n; ++i) {
    proj[i] = normal[0] * moved.data[3 * i] + normal[1] * moved.data[3 * i + 1] + normal[2] * moved.data[3 * i + 2];
  }
  std::vector<double> sorted = proj;
  std::sort(sorted.begin(), sorted.end());
  const double threshold = sorted[n - target_occluded];

  for (std::size_t i = 0; i < n; ++i) {
    if (proj[i] >= threshold) out.mask.keep[i] = 0;
  }

  // Drop the target points lying in the same half-space.
  const Array& tc = pair.target.coords;
  std::vector<std::size_t> kept_rows;
  for (std::size_t j = 0; j < tc.rows(); ++j) {
    const double h = normal[0] * tc.data[3 * j] + normal[1] * tc.data[3 * j + 1] + normal[2] * tc.data[3 * j + 2];
    if (h < threshold) kept_rows.push_back(j);
  }
  if (kept_rows.empty()) throw std::invalid_argument("occlude: the half-space would delete every target point");
  out.pair.target = PointCloud(gather_rows(tc, kept_rows), gather_rows(pair.target.feats, kept_rows));
  return out;
}

double distance_to_moved_surface(const SceneObject& obj, const double* point) {
  // Undo the motion, then the surface orientation/offset, and measure in
  // the object's local frame.
  double unmoved[3];
  double shifted[3] = {point[0] - obj.trans[0], point[1] - obj.trans[1], point[2] - obj.trans[2]};
  mat_apply_transposed(obj.rot, shifted, unmoved);
  double local[3];
  double centered[3] = {unmoved[0] - obj.center[0], unmoved[1] - obj.center[1], unmoved[2] - obj.center[2]};
  mat_apply_transposed(obj.orient, centered, local);
  switch (obj.kind) {
    case ShapeKind::kSphere: {
      const double r = std::sqrt(local[0] * local[0] + local[1] * local[1] + local[2] * local[2]);
      return std::abs(r - obj.size);
    }
    case ShapeKind::kBox: {
      const double ax = std::abs(local[0]), ay = std::abs(local[1]), az = std::abs(local[2]);
      const double s = obj.size;
      if (ax <= s && ay <= s && az <= s) {
        return std::min({s - ax, s - ay, s - az});
      }
      const double dx = std::max(ax - s, 0.0), dy = std::max(ay - s, 0.0), dz = std::max(az - s, 0.0);
      return std::sqrt(dx * dx + dy * dy + dz * dz);
    }
    case ShapeKind::kPlane: {
      const double cx = std::clamp(local[0], -obj.size, obj.size);
      const double cy = std::clamp(local[1], -obj.size, obj.size);
      const double dx = local[0] - cx, dy = local[1] - cy;
      return std::sqrt(dx * dx + dy * dy + local[2] * local[2]);
    }
  }
  return 0.0;
}

}  // namespace biflow
