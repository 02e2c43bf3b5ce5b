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

#include "biflow/bench.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <sstream>
#include <stdexcept>

#include "biflow/rng.hpp"

namespace biflow {

namespace {

void check_sizes(std::uint64_t np, std::uint64_t mp, std::uint64_t k, std::uint64_t c_out) {
  if (np == 0 || mp == 0 || k == 0 || c_out == 0) {
    throw std::invalid_argument("bfe op count: sizes must be positive");
  }
}

double quantile(std::vector<double> sorted, double q) {
  const std::size_t n = sorted.size();
  const double pos = q * static_cast<double>(n - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, n - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

}  // namespace

std::uint64_t flops_naive(std::uint64_t np, std::uint64_t mp, std::uint64_t k, std::uint64_t c, std::uint64_t c_out) {
  check_sizes(np, mp, k, c_out);
  return (np + mp) * k * (3 + c + c) * c_out;
}

std::uint64_t flops_decomposed(std::uint64_t np, std::uint64_t mp, std::uint64_t k, std::uint64_t c,
                               std::uint64_t c_out) {
  check_sizes(np, mp, k, c_out);
  return (np + mp) * (k * 3 + c + c) * c_out;
}

OpCountReport op_count_report(std::size_t np, std::size_t mp, std::size_t k, std::size_t c, std::size_t c_out) {
  OpCountReport r;
  r.np = np;
  r.mp = mp;
  r.k = k;
  r.c = c;
  r.c_out = c_out;
  r.naive_ops = flops_naive(np, mp, k, c, c_out);
  r.decomposed_ops = flops_decomposed(np, mp, k, c, c_out);
  r.ratio = static_cast<double>(r.decomposed_ops) / static_cast<double>(r.naive_ops);
  return r;
}

TimingReport time_compare(std::size_t np, std::size_t mp, std::size_t k, std::size_t c, std::size_t c_out,
                          std::size_t repetitions, std::uint64_t seed) {
  if (repetitions < 10) {
    throw std::invalid_argument("time_compare: need >= 10 repetitions, got " + std::to_string(repetitions));
  }
  if (c == 0) throw std::invalid_argument("time_compare: kernels need c >= 1");
  if (const char* threads = std::getenv("BIFLOW_THREADS")) {
    if (std::string(threads) != "1") {
      throw std::runtime_error("time_compare: single-thread contract; refusing with BIFLOW_THREADS=" +
                               std::string(threads));
    }
  }

  // Random instance; coordinates drawn in double for the neighbor tables,
  // then narrowed for the timed kernels.
  Rng rng(derive_seed(seed, "bench"));
  Array p_coords_d({np, 3}), q_coords_d({mp, 3});
  for (double& v : p_coords_d.data) v = rng.uniform(-1.0, 1.0);
  for (double& v : q_coords_d.data) v = rng.uniform(-1.0, 1.0);
  std::vector<float> p_coords(np * 3), q_coords(mp * 3), p_feats(np * c), q_feats(mp * c);
  for (std::size_t i = 0; i < p_coords.size(); ++i) p_coords[i] = static_cast<float>(p_coords_d.data[i]);
  for (std::size_t i = 0; i < q_coords.size(); ++i) q_coords[i] = static_cast<float>(q_coords_d.data[i]);
  for (float& v : p_feats) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  for (float& v : q_feats) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  const double bound = std::sqrt(6.0 / static_cast<double>(3 + 2 * c));
  std::vector<float> w_full((3 + 2 * c) * c_out);
  for (float& v : w_full) v = static_cast<float>(rng.uniform(-bound, bound));
  std::vector<float> w_pos(w_full.begin(), w_full.begin() + static_cast<std::ptrdiff_t>(3 * c_out));
  std::vector<float> w_bi(w_full.begin() + static_cast<std::ptrdiff_t>(3 * c_out),
                          w_full.begin() + static_cast<std::ptrdiff_t>((3 + c) * c_out));
  std::vector<float> w_rep(w_full.begin() + static_cast<std::ptrdiff_t>((3 + c) * c_out), w_full.end());
  const float slope = 0.1f;

  const NeighborIndex nn_pq = knn_group(p_coords_d, q_coords_d, k);
  const NeighborIndex nn_qp = knn_group(q_coords_d, p_coords_d, k);

  auto run_naive = [&] {
    return run_bfe_naive<float>(p_coords, p_feats, q_coords, q_feats, np, mp, k, c, c_out, w_full, slope, nn_pq,
                                nn_qp);
  };
  auto run_dec = [&] {
    return run_bfe_decomposed<float>(p_coords, p_feats, q_coords, q_feats, np, mp, k, c, c_out, w_pos, w_bi, w_rep,
                                     slope, nn_pq, nn_qp);
  };

  // The two variants must agree on the timed inputs before anything gets
  // measured; the association order differs so allow float rounding.
  {
    const BfeKernelResult<float> a = run_naive();
    const BfeKernelResult<float> b = run_dec();
    double max_diff = 0.0, max_mag = 0.0;
    for (std::size_t i = 0; i < a.p_aug.size(); ++i) {
      max_diff = std::max(max_diff, std::abs(static_cast<double>(a.p_aug[i]) - b.p_aug[i]));
      max_mag = std::max(max_mag, std::abs(static_cast<double>(a.p_aug[i])));
    }
    for (std::size_t i = 0; i < a.q_aug.size(); ++i) {
      max_diff = std::max(max_diff, std::abs(static_cast<double>(a.q_aug[i]) - b.q_aug[i]));
      max_mag = std::max(max_mag, std::abs(static_cast<double>(a.q_aug[i])));
    }
    if (max_diff > 1e-3 * std::max(1.0, max_mag)) {
      throw std::runtime_error("time_compare: variants disagree beyond float rounding, max diff " +
                               std::to_string(max_diff));
    }
  }

  TimingReport r;
  r.np = np;
  r.mp = mp;
  r.k = k;
  r.c = c;
  r.c_out = c_out;
  r.repetitions = repetitions;
  r.naive_ops = flops_naive(np, mp, k, c, c_out);
  r.decomposed_ops = flops_decomposed(np, mp, k, c, c_out);
  r.op_ratio = static_cast<double>(r.decomposed_ops) / static_cast<double>(r.naive_ops);

  using clock = std::chrono::steady_clock;
  volatile float sink = 0.0f;  // keeps the timed results alive
  auto time_variant = [&](auto&& fn, double& median_ms, double& iqr_ms) {
    for (int w = 0; w < 5; ++w) {
      auto res = fn();
      sink = sink + res.p_aug[0];
    }
    std::vector<double> times;
    times.reserve(repetitions);
    for (std::size_t rep = 0; rep < repetitions; ++rep) {
      const auto start = clock::now();
      auto res = fn();
      const auto stop = clock::now();
      sink = sink + res.q_aug[0];
      times.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
    }
    std::sort(times.begin(), times.end());
    median_ms = quantile(times, 0.5);
    iqr_ms = quantile(times, 0.75) - quantile(times, 0.25);
  };
  time_variant(run_naive, r.naive_median_ms, r.naive_iqr_ms);
  time_variant(run_dec, r.decomposed_median_ms, r.decomposed_iqr_ms);
  (void)sink;
  return r;
}

std::string timing_csv(const TimingReport& report) {
  std::ostringstream out;
  out << "variant,Np,Mp,K,C,Cout,ops,median_ms,iqr_ms\n";
  char buf[128];
  std::snprintf(buf, sizeof buf, "naive,%zu,%zu,%zu,%zu,%zu,%llu,%.6f,%.6f\n", report.np, report.mp, report.k,
                report.c, report.c_out, static_cast<unsigned long long>(report.naive_ops), report.naive_median_ms,
                report.naive_iqr_ms);
  out << buf;
  std::snprintf(buf, sizeof buf, "decomposed,%zu,%zu,%zu,%zu,%zu,%llu,%.6f,%.6f\n", report.np, report.mp, report.k,
                report.c, report.c_out, static_cast<unsigned long long>(report.decomposed_ops),
                report.decomposed_median_ms, report.decomposed_iqr_ms);
  out << buf;
  return out.str();
}

}  // namespace biflow
