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

#include "biflow/array.hpp"
#include "biflow/rng.hpp"
#include "biflow/tape.hpp"

using namespace biflow;

namespace {

// Independent brute-force product oracle.
Array matmul_oracle(const Array& x, const Array& w) {
  Array y({x.rows(), w.shape[1]});
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < w.shape[1]; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < x.cols(); ++k) acc += x(i, k) * w(k, j);
      y(i, j) = acc;
    }
  }
  return y;
}

Array random_array(Rng& rng, std::vector<std::size_t> shape, double lo = -1.0, double hi = 1.0) {
  Array a(std::move(shape));
  for (double& v : a.data) v = rng.uniform(lo, hi);
  return a;
}

}  // namespace

TEST_CASE("array constructors enforce the shape/data contract") {
  CHECK_THROWS_AS(Array({0, 2}), std::invalid_argument);
  CHECK_THROWS_AS(Array({2, 2}, {1.0, 2.0, 3.0}), std::invalid_argument);
  const Array a({2, 3});
  CHECK(a.size() == 6);
  CHECK(a.rows() == 2);
  CHECK(a.cols() == 3);
}

TEST_CASE("linear_map identity and scalar cases") {
  const Array x({1, 2}, {2.0, 3.0});
  const Array y = linear_map(x, Array::identity(2));
  CHECK(y.data[0] == 2.0);
  CHECK(y.data[1] == 3.0);

  const Array s = linear_map(Array({1, 1}, {2.0}), Array({1, 1}, {3.0}));
  CHECK(s.data[0] == 6.0);
}

TEST_CASE("linear_map matches the brute-force oracle") {
  Rng rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    const Array x = random_array(rng, {2, 2});
    const Array w = random_array(rng, {2, 2});
    const Array got = linear_map(x, w);
    const Array want = matmul_oracle(x, w);
    for (std::size_t i = 0; i < got.data.size(); ++i) CHECK(got.data[i] == doctest::Approx(want.data[i]).epsilon(1e-12));
  }
}

TEST_CASE("linear_map rejects mismatched shapes naming both") {
  const Array x({2, 3});
  const Array w({4, 2});
  try {
    linear_map(x, w);
    FAIL("expected a shape diagnostic");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[4x2]") != std::string::npos);
  }
}

TEST_CASE("linear_map distributes over column concatenation") {
  // Applying the stacked weight [Wa; Wb] to [u, v] equals Wa u + Wb v.
  Rng rng(11);
  const Array u = random_array(rng, {4, 3});
  const Array v = random_array(rng, {4, 5});
  const Array wa = random_array(rng, {3, 6});
  const Array wb = random_array(rng, {5, 6});
  Array stacked({8, 6});
  std::copy(wa.data.begin(), wa.data.end(), stacked.data.begin());
  std::copy(wb.data.begin(), wb.data.end(), stacked.data.begin() + 18);
  const Array uv = concat_cols({&u, &v});
  const Array combined = linear_map(uv, stacked);
  const Array split = add(linear_map(u, wa), linear_map(v, wb));
  for (std::size_t i = 0; i < combined.data.size(); ++i) {
    CHECK(std::abs(combined.data[i] - split.data[i]) <= 1e-12);
  }
}

TEST_CASE("leaky_relu pointwise values") {
  const Array x({1, 3}, {1.0, 0.0, -1.0});
  const Array y = leaky_relu(x, 0.1);
  CHECK(y.data[0] == 1.0);
  CHECK(y.data[1] == 0.0);
  CHECK(y.data[2] == -0.1);
  CHECK_THROWS_AS(leaky_relu(x, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(leaky_relu(x, -0.2), std::invalid_argument);
}

TEST_CASE("group_max basics and tie routing") {
  SUBCASE("singleton group is the identity") {
    const Array x({3, 2}, {1, 2, 3, 4, 5, 6});
    const GroupMaxResult r = group_max(x, 3, 1);
    CHECK(r.values.data == x.data);
  }
  SUBCASE("hand max per channel") {
    const Array x({2, 2}, {1, 5, 3, 2});  // one group, K=2, C=2
    const GroupMaxResult r = group_max(x, 1, 2);
    CHECK(r.values.data[0] == 3.0);
    CHECK(r.values.data[1] == 5.0);
    CHECK(r.argmax[0] == 1);
    CHECK(r.argmax[1] == 0);
  }
  SUBCASE("ties break to the lowest member index") {
    const Array x({3, 1}, {7.0, 7.0, 7.0});
    const GroupMaxResult r = group_max(x, 1, 3);
    CHECK(r.argmax[0] == 0);
  }
  SUBCASE("empty group dimension is rejected") {
    CHECK_THROWS_AS(group_max(Array({2, 2}), 2, 0), std::invalid_argument);
  }
}

TEST_CASE("group_max is invariant under member permutation") {
  Rng rng(13);
  const std::size_t groups = 4, k = 5, c = 3;
  const Array x = random_array(rng, {groups * k, c});
  const GroupMaxResult base = group_max(x, groups, k);
  for (int rep = 0; rep < 10; ++rep) {
    Array shuffled = x;
    for (std::size_t g = 0; g < groups; ++g) {
      // Fisher-Yates over the k member rows of group g.
      for (std::size_t m = k; m-- > 1;) {
        const std::size_t j = rng.index(m + 1);
        for (std::size_t ch = 0; ch < c; ++ch) std::swap(shuffled((g * k) + m, ch), shuffled((g * k) + j, ch));
      }
    }
    const GroupMaxResult r = group_max(shuffled, groups, k);
    CHECK(r.values.data == base.values.data);
  }
}

TEST_CASE("backward: identity, chained linear, dead branch") {
  SUBCASE("identity chain has gradient one") {
    Tape t;
    const ValueId x = t.leaf(Array::scalar(1.7));
    const auto grads = t.backward(x);
    CHECK(grads[x].data[0] == 1.0);
  }
  SUBCASE("linear then sum gives the weight") {
    Tape t;
    const ValueId x = t.leaf(Array({1, 1}, {0.5}));
    const ValueId w = t.leaf(Array({1, 1}, {2.0}));
    const ValueId y = t.linear(x, w);
    const ValueId s = t.sum_l2_rows(y);
    const auto grads = t.backward(s);
    CHECK(grads[x].data[0] == doctest::Approx(2.0).epsilon(1e-12));
  }
  SUBCASE("unreachable input gets exactly zero") {
    Tape t;
    const ValueId x = t.leaf(Array({1, 1}, {0.5}));
    const ValueId dead = t.leaf(Array({2, 2}, {1, 2, 3, 4}));
    const ValueId s = t.sum_l2_rows(x);
    const auto grads = t.backward(s);
    for (double v : grads[dead].data) CHECK(v == 0.0);
  }
  SUBCASE("non-scalar seed is rejected") {
    Tape t;
    const ValueId x = t.leaf(Array({2, 2}));
    CHECK_THROWS_AS(t.backward(x), std::invalid_argument);
  }
}

TEST_CASE("gradient shapes mirror value shapes after a sweep") {
  Rng rng(3);
  Tape t;
  const ValueId x = t.leaf(random_array(rng, {4, 6}));
  const ValueId w = t.leaf(random_array(rng, {6, 5}));
  const ValueId y = t.leaky_relu(t.linear(x, w), 0.1);
  const ValueId m = t.group_max(y, 2, 2);
  const ValueId s = t.sum_l2_rows(m);
  const auto grads = t.backward(s);
  for (std::size_t id = 0; id < t.node_count(); ++id) {
    CHECK(grads[id].shape == t.value(id).shape);
  }
}

TEST_CASE("grad_check: linear map is exact") {
  Rng rng(17);
  const std::vector<Array> inputs{random_array(rng, {3, 4}), random_array(rng, {4, 2})};
  const double err = grad_check(
      [](Tape& t, const std::vector<Array>& in) {
        const ValueId x = t.leaf(in[0]), w = t.leaf(in[1]);
        return GradCheckBuild{t.sum_l2_rows(t.linear(x, w)), {x, w}};
      },
      inputs, 1e-5);
  CHECK(err <= 1e-8);
}

TEST_CASE("grad_check: activation away from the kink") {
  Rng rng(19);
  Array x({4, 4});
  for (double& v : x.data) {
    const double mag = rng.uniform(0.4, 1.5);
    v = rng.uniform01() < 0.5 ? -mag : mag;
  }
  const double err = grad_check(
      [](Tape& t, const std::vector<Array>& in) {
        const ValueId a = t.leaf(in[0]);
        return GradCheckBuild{t.sum_l2_rows(t.leaky_relu(a, 0.1)), {a}};
      },
      {x}, 1e-5);
  CHECK(err <= 1e-6);
}

TEST_CASE("grad_check: composed linear/activation/max pipeline") {
  Rng rng(23);
  const std::vector<Array> inputs{random_array(rng, {6, 5}), random_array(rng, {5, 4})};
  const double err = grad_check(
      [](Tape& t, const std::vector<Array>& in) {
        const ValueId x = t.leaf(in[0]), w = t.leaf(in[1]);
        const ValueId y = t.group_max(t.leaky_relu(t.linear(x, w), 0.1), 2, 3);
        return GradCheckBuild{t.sum_l2_rows(y), {x, w}};
      },
      inputs, 1e-5);
  CHECK(err <= 1e-4);
}

TEST_CASE("grad_check validates its eps range") {
  const std::vector<Array> inputs{Array::scalar(1.0)};
  auto build = [](Tape& t, const std::vector<Array>& in) {
    const ValueId x = t.leaf(in[0]);
    return GradCheckBuild{t.sum_l2_rows(x), {x}};
  };
  CHECK_THROWS_AS(grad_check(build, inputs, 1e-8), std::invalid_argument);
  CHECK_THROWS_AS(grad_check(build, inputs, 1e-2), std::invalid_argument);
}

TEST_CASE("concat/slice rows round-trip and route gradients") {
  Rng rng(29);
  Tape t;
  const ValueId a = t.leaf(random_array(rng, {2, 3}));
  const ValueId b = t.leaf(random_array(rng, {4, 3}));
  const ValueId cat = t.concat_rows({a, b});
  CHECK(t.value(cat).rows() == 6);
  const ValueId back = t.slice_rows(cat, 2, 4);
  CHECK(t.value(back).data == t.value(b).data);
  const auto grads = t.backward(t.sum_l2_rows(back));
  for (double v : grads[a].data) CHECK(v == 0.0);
  bool any = false;
  for (double v : grads[b].data) any = any || v != 0.0;
  CHECK(any);
}

TEST_CASE("finite outputs on finite inputs across kernels") {
  Rng rng(31);
  const Array x = random_array(rng, {8, 6});
  const Array w = random_array(rng, {6, 4});
  CHECK(linear_map(x, w).all_finite());
  CHECK(leaky_relu(x, 0.1).all_finite());
  CHECK(group_max(x, 4, 2).values.all_finite());
}
