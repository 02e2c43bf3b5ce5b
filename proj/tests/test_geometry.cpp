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

#include <algorithm>
#include <cmath>
#include <limits>

#include "biflow/geometry.hpp"
#include "biflow/rng.hpp"

using namespace biflow;

namespace {

Array random_coords(Rng& rng, std::size_t n, double scale = 1.0) {
  Array a({n, 3});
  for (double& v : a.data) v = rng.uniform(-scale, scale);
  return a;
}

double dist(const Array& a, std::size_t i, const Array& b, std::size_t j) {
  double s = 0.0;
  for (std::size_t d = 0; d < 3; ++d) {
    const double diff = a(i, d) - b(j, d);
    s += diff * diff;
  }
  return std::sqrt(s);
}

// O(n^2 * n_out) greedy max-min reference.
std::vector<std::size_t> fps_oracle(const Array& coords, std::size_t n_out, std::size_t seed_index) {
  std::vector<std::size_t> picks{seed_index};
  while (picks.size() < n_out) {
    double best = -1.0;
    std::size_t best_idx = coords.rows();
    for (std::size_t i = 0; i < coords.rows(); ++i) {
      if (std::find(picks.begin(), picks.end(), i) != picks.end()) continue;
      double min_d = std::numeric_limits<double>::infinity();
      for (std::size_t p : picks) min_d = std::min(min_d, dist(coords, i, coords, p));
      if (min_d > best) {
        best = min_d;
        best_idx = i;
      }
    }
    picks.push_back(best_idx);
  }
  return picks;
}

// Full-sort nearest-neighbor reference.
std::vector<std::size_t> knn_oracle(const Array& queries, std::size_t q, const Array& ref, std::size_t k) {
  std::vector<std::pair<double, std::size_t>> ranked;
  for (std::size_t i = 0; i < ref.rows(); ++i) ranked.emplace_back(dist(queries, q, ref, i), i);
  std::sort(ranked.begin(), ranked.end());
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < k; ++j) out.push_back(ranked[j].second);
  return out;
}

Array line_coords(const std::vector<double>& xs) {
  Array a({xs.size(), 3});
  for (std::size_t i = 0; i < xs.size(); ++i) a(i, 0) = xs[i];
  return a;
}

}  // namespace

TEST_CASE("furthest point sampling picks the far endpoint on a line") {
  const Array coords = line_coords({0, 1, 2, 3});
  const auto picks = furthest_point_sample(coords, 2, 0);
  CHECK(picks == std::vector<std::size_t>{0, 3});
}

TEST_CASE("furthest point sampling exhausts to a permutation") {
  Rng rng(5);
  const Array coords = random_coords(rng, 12);
  auto picks = furthest_point_sample(coords, 12, 0);
  std::sort(picks.begin(), picks.end());
  for (std::size_t i = 0; i < 12; ++i) CHECK(picks[i] == i);
}

TEST_CASE("furthest point sampling matches the brute-force greedy oracle") {
  Rng rng(9);
  for (int rep = 0; rep < 10; ++rep) {
    const Array coords = random_coords(rng, 8);
    CHECK(furthest_point_sample(coords, 3, 0) == fps_oracle(coords, 3, 0));
  }
}

TEST_CASE("furthest point sampling prefix property for n <= 64") {
  // Every prefix pick must attain the maximal min-distance among the
  // remaining candidates.
  Rng rng(41);
  const std::size_t n = 64;
  const Array coords = random_coords(rng, n);
  const std::size_t n_out = 17;
  const auto picks = furthest_point_sample(coords, n_out, 0);
  for (std::size_t m = 1; m < n_out; ++m) {
    double picked_min = std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; p < m; ++p) picked_min = std::min(picked_min, dist(coords, picks[m], coords, picks[p]));
    for (std::size_t cand = 0; cand < n; ++cand) {
      if (std::find(picks.begin(), picks.begin() + static_cast<std::ptrdiff_t>(m + 1), cand) !=
          picks.begin() + static_cast<std::ptrdiff_t>(m + 1)) {
        continue;
      }
      double cand_min = std::numeric_limits<double>::infinity();
      for (std::size_t p = 0; p < m; ++p) cand_min = std::min(cand_min, dist(coords, cand, coords, picks[p]));
      CHECK(cand_min <= picked_min + 1e-12);
    }
  }
}

TEST_CASE("furthest point sampling rejections and duplicates") {
  const Array coords = line_coords({0, 0, 0, 1});
  try {
    furthest_point_sample(coords, 9, 0);
    FAIL("expected a count diagnostic");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("9") != std::string::npos);
    CHECK(msg.find("4") != std::string::npos);
  }
  // Duplicated coordinates still yield distinct indices.
  auto picks = furthest_point_sample(coords, 4, 0);
  std::sort(picks.begin(), picks.end());
  CHECK(picks == std::vector<std::size_t>{0, 1, 2, 3});
}

TEST_CASE("knn grouping: coincident point, line ranking, oracle equality") {
  SUBCASE("coincident query with k=1") {
    Rng rng(2);
    const Array ref = random_coords(rng, 10);
    Array query({1, 3});
    for (std::size_t d = 0; d < 3; ++d) query(0, d) = ref(7, d);
    const NeighborIndex nn = knn_group(query, ref, 1);
    CHECK(nn.at(0, 0) == 7);
  }
  SUBCASE("hand distance ranking on a line") {
    const Array ref = line_coords({0, 10, 20});
    const Array query = line_coords({1});
    const NeighborIndex nn = knn_group(query, ref, 2);
    CHECK(nn.at(0, 0) == 0);
    CHECK(nn.at(0, 1) == 1);
  }
  SUBCASE("matches the exhaustive sort oracle on 50 random points") {
    Rng rng(21);
    const Array ref = random_coords(rng, 50);
    const Array queries = random_coords(rng, 12);
    const NeighborIndex nn = knn_group(queries, ref, 6);
    for (std::size_t q = 0; q < 12; ++q) {
      const auto want = knn_oracle(queries, q, ref, 6);
      for (std::size_t j = 0; j < 6; ++j) CHECK(nn.at(q, j) == want[j]);
    }
  }
  SUBCASE("k beyond the reference is rejected") {
    const Array ref = line_coords({0, 1});
    CHECK_THROWS_AS(knn_group(ref, ref, 3), std::invalid_argument);
  }
}

TEST_CASE("knn grouping is rigid-transform equivariant") {
  Rng rng(33);
  const Array ref = random_coords(rng, 30);
  const Array queries = random_coords(rng, 8);
  const NeighborIndex base = knn_group(queries, ref, 4);
  // Rotation about z by a fixed angle plus a translation.
  const double c = std::cos(0.7), s = std::sin(0.7);
  const double t[3] = {0.3, -1.2, 2.5};
  auto transform = [&](const Array& a) {
    Array out = a;
    for (std::size_t i = 0; i < a.rows(); ++i) {
      const double x = a(i, 0), y = a(i, 1), z = a(i, 2);
      out(i, 0) = c * x - s * y + t[0];
      out(i, 1) = s * x + c * y + t[1];
      out(i, 2) = z + t[2];
    }
    return out;
  };
  const NeighborIndex moved = knn_group(transform(queries), transform(ref), 4);
  CHECK(moved.indices == base.indices);
}

TEST_CASE("interpolation: coincident copy, symmetric midpoint, hand weights") {
  SUBCASE("coincident dense point copies the sparse feature exactly") {
    const PointCloud sparse(line_coords({0, 1, 2}), Array({3, 1}, {5.0, 7.0, 9.0}));
    const Array dense = line_coords({1});
    const Array feats = interpolate(sparse, dense, 2);
    CHECK(feats.data[0] == 7.0);
  }
  SUBCASE("midpoint of two sparse points averages their features") {
    const PointCloud sparse(line_coords({0, 2}), Array({2, 1}, {0.0, 2.0}));
    const Array dense = line_coords({1});
    const Array feats = interpolate(sparse, dense, 2);
    CHECK(feats.data[0] == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("inverse-distance weights at distances 1 and 2") {
    // weights 1 and 1/2 over features 0 and 3 -> (0*1 + 3*0.5) / 1.5 = 1.
    const PointCloud sparse(line_coords({0, 3}), Array({2, 1}, {0.0, 3.0}));
    const Array dense = line_coords({1});
    const Array feats = interpolate(sparse, dense, 2);
    CHECK(feats.data[0] == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("k beyond the sparse cloud is rejected") {
    const PointCloud sparse(line_coords({0, 1}), Array({2, 1}));
    CHECK_THROWS_AS(interpolate(sparse, line_coords({0.5}), 3), std::invalid_argument);
  }
}

TEST_CASE("interpolation is a convex combination") {
  Rng rng(55);
  const std::size_t n_sparse = 20, n_dense = 40, k = 3;
  const PointCloud sparse(random_coords(rng, n_sparse), [&] {
    Array f({n_sparse, 4});
    for (double& v : f.data) v = rng.uniform(-5.0, 5.0);
    return f;
  }());
  const Array dense = random_coords(rng, n_dense);
  const InterpPlan plan = make_interp_plan(sparse.coords, dense, k);
  const Array feats = interpolate(sparse, dense, k);
  for (std::size_t i = 0; i < n_dense; ++i) {
    double wsum = 0.0;
    for (std::size_t j = 0; j < k; ++j) wsum += plan.weights[i * k + j];
    CHECK(wsum == doctest::Approx(1.0).epsilon(1e-12));
    for (std::size_t ch = 0; ch < 4; ++ch) {
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (std::size_t j = 0; j < k; ++j) {
        const double f = sparse.feats(plan.indices[i * k + j], ch);
        lo = std::min(lo, f);
        hi = std::max(hi, f);
      }
      CHECK(feats(i, ch) >= lo - 1e-12);
      CHECK(feats(i, ch) <= hi + 1e-12);
    }
  }
}

TEST_CASE("warp identity, uniform shift, inverse, offsets") {
  Rng rng(60);
  const Array coords = random_coords(rng, 15);
  SUBCASE("zero flow is the identity") {
    const FlowField zero(Array({15, 3}));
    CHECK(warp(coords, zero).data == coords.data);
  }
  SUBCASE("constant flow is a rigid translation preserving offsets") {
    Array v({15, 3});
    for (std::size_t i = 0; i < 15; ++i) {
      v(i, 0) = 0.25;
      v(i, 1) = 0.25;
      v(i, 2) = 0.25;
    }
    const Array moved = warp(coords, FlowField(v));
    for (std::size_t i = 0; i < 15; ++i)
      for (std::size_t d = 0; d < 3; ++d) CHECK(moved(i, d) == doctest::Approx(coords(i, d) + 0.25).epsilon(1e-15));
    for (std::size_t i = 1; i < 15; ++i) {
      for (std::size_t d = 0; d < 3; ++d) {
        CHECK(moved(i, d) - moved(0, d) == doctest::Approx(coords(i, d) - coords(0, d)).epsilon(1e-12));
      }
    }
  }
  SUBCASE("warping by v then -v returns the input") {
    Array v({15, 3});
    for (double& x : v.data) x = rng.uniform(-2.0, 2.0);
    Array neg = v;
    for (double& x : neg.data) x = -x;
    const Array back = warp(warp(coords, FlowField(v)), FlowField(neg));
    for (std::size_t i = 0; i < back.data.size(); ++i) CHECK(std::abs(back.data[i] - coords.data[i]) <= 1e-12);
  }
  SUBCASE("extent mismatch is rejected") {
    CHECK_THROWS_AS(warp(coords, FlowField(Array({7, 3}))), std::invalid_argument);
  }
}
