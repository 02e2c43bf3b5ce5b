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

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "biflow/geometry.hpp"

namespace biflow {

// Closed-form multiply-accumulate counts of one bidirectional embedding
// layer over clouds of np and mp points with k-neighbor groups, feature
// width c and output width c_out. Only linear-map MACs are counted;
// grouping, activation and max pooling are excluded.
std::uint64_t flops_naive(std::uint64_t np, std::uint64_t mp, std::uint64_t k, std::uint64_t c, std::uint64_t c_out);
std::uint64_t flops_decomposed(std::uint64_t np, std::uint64_t mp, std::uint64_t k, std::uint64_t c,
                               std::uint64_t c_out);

/// Flat-buffer embedding kernels instrumented with a MAC counter; the
/// counter accumulates the executed inner-product lengths, so it measures
/// the work actually performed rather than re-evaluating the closed form.
/// Neighbor tables are precomputed and shared by both variants.
template <typename T>
struct BfeKernelResult {
  std::vector<T> p_aug;  // np x c_out
  std::vector<T> q_aug;  // mp x c_out
  std::uint64_t macs = 0;
};

template <typename T>
void bfe_naive_direction(const std::vector<T>& ctr_coords, const std::vector<T>& ctr_feats,
                         const std::vector<T>& nbr_coords, const std::vector<T>& nbr_feats, std::size_t n_ctr,
                         std::size_t k, std::size_t c, std::size_t c_out, const std::vector<T>& w_full, T slope,
                         const NeighborIndex& nn, std::vector<T>& out, std::uint64_t& macs) {
  const std::size_t d = 3 + 2 * c;
  std::vector<T> member(c_out);
  for (std::size_t i = 0; i < n_ctr; ++i) {
    T* out_row = out.data() + i * c_out;
    for (std::size_t m = 0; m < k; ++m) {
      const std::size_t j = nn.at(i, m);
      const T off[3] = {nbr_coords[3 * j] - ctr_coords[3 * i], nbr_coords[3 * j + 1] - ctr_coords[3 * i + 1],
                        nbr_coords[3 * j + 2] - ctr_coords[3 * i + 2]};
      const T* nf = nbr_feats.data() + j * c;
      const T* cf = ctr_feats.data() + i * c;
      for (std::size_t o = 0; o < c_out; ++o) {
        T acc = 0;
        const T* w = w_full.data() + o;  // column o, stride c_out
        acc += off[0] * w[0];
        acc += off[1] * w[c_out];
        acc += off[2] * w[2 * c_out];
        const T* wf = w + 3 * c_out;
        for (std::size_t q = 0; q < c; ++q) acc += nf[q] * wf[q * c_out];
        const T* wr = w + (3 + c) * c_out;
        for (std::size_t q = 0; q < c; ++q) acc += cf[q] * wr[q * c_out];
        member[o] = acc >= 0 ? acc : slope * acc;
      }
      macs += d * c_out;
      if (m == 0) {
        std::copy(member.begin(), member.end(), out_row);
      } else {
        for (std::size_t o = 0; o < c_out; ++o) out_row[o] = std::max(out_row[o], member[o]);
      }
    }
  }
}

template <typename T>
BfeKernelResult<T> run_bfe_naive(const std::vector<T>& p_coords, const std::vector<T>& p_feats,
                                 const std::vector<T>& q_coords, const std::vector<T>& q_feats, std::size_t np,
                                 std::size_t mp, std::size_t k, std::size_t c, std::size_t c_out,
                                 const std::vector<T>& w_full, T slope, const NeighborIndex& nn_pq,
                                 const NeighborIndex& nn_qp) {
  BfeKernelResult<T> r;
  r.p_aug.assign(np * c_out, T(0));
  r.q_aug.assign(mp * c_out, T(0));
  bfe_naive_direction(p_coords, p_feats, q_coords, q_feats, np, k, c, c_out, w_full, slope, nn_pq, r.p_aug, r.macs);
  bfe_naive_direction(q_coords, q_feats, p_coords, p_feats, mp, k, c, c_out, w_full, slope, nn_qp, r.q_aug, r.macs);
  return r;
}

template <typename T>
void transform_points(const std::vector<T>& feats, std::size_t n, std::size_t c, std::size_t c_out,
                      const std::vector<T>& w, std::vector<T>& out, std::uint64_t& macs) {
  out.assign(n * c_out, T(0));
  for (std::size_t i = 0; i < n; ++i) {
    const T* f = feats.data() + i * c;
    T* y = out.data() + i * c_out;
    for (std::size_t q = 0; q < c; ++q) {
      const T fv = f[q];
      const T* wrow = w.data() + q * c_out;
      for (std::size_t o = 0; o < c_out; ++o) y[o] += fv * wrow[o];
    }
    macs += c * c_out;
  }
}

template <typename T>
void bfe_decomposed_direction(const std::vector<T>& ctr_coords, const std::vector<T>& ctr_rep,
                              const std::vector<T>& nbr_coords, const std::vector<T>& nbr_bi, std::size_t n_ctr,
                              std::size_t k, std::size_t c_out, const std::vector<T>& w_pos, T slope,
                              const NeighborIndex& nn, std::vector<T>& out, std::uint64_t& macs) {
  std::vector<T> member(c_out);
  for (std::size_t i = 0; i < n_ctr; ++i) {
    T* out_row = out.data() + i * c_out;
    const T* cr = ctr_rep.data() + i * c_out;
    for (std::size_t m = 0; m < k; ++m) {
      const std::size_t j = nn.at(i, m);
      const T off[3] = {nbr_coords[3 * j] - ctr_coords[3 * i], nbr_coords[3 * j + 1] - ctr_coords[3 * i + 1],
                        nbr_coords[3 * j + 2] - ctr_coords[3 * i + 2]};
      const T* nb = nbr_bi.data() + j * c_out;
      for (std::size_t o = 0; o < c_out; ++o) {
        const T acc = off[0] * w_pos[o] + off[1] * w_pos[c_out + o] + off[2] * w_pos[2 * c_out + o] + nb[o] + cr[o];
        member[o] = acc >= 0 ? acc : slope * acc;
      }
      macs += 3 * c_out;
      if (m == 0) {
        std::copy(member.begin(), member.end(), out_row);
      } else {
        for (std::size_t o = 0; o < c_out; ++o) out_row[o] = std::max(out_row[o], member[o]);
      }
    }
  }
}

template <typename T>
BfeKernelResult<T> run_bfe_decomposed(const std::vector<T>& p_coords, const std::vector<T>& p_feats,
                                      const std::vector<T>& q_coords, const std::vector<T>& q_feats, std::size_t np,
                                      std::size_t mp, std::size_t k, std::size_t c, std::size_t c_out,
                                      const std::vector<T>& w_pos, const std::vector<T>& w_bi,
                                      const std::vector<T>& w_rep, T slope, const NeighborIndex& nn_pq,
                                      const NeighborIndex& nn_qp) {
  BfeKernelResult<T> r;
  r.p_aug.assign(np * c_out, T(0));
  r.q_aug.assign(mp * c_out, T(0));
  // Per-point feature transforms once, ahead of grouping.
  std::vector<T> p_rep, p_bi, q_rep, q_bi;
  transform_points(p_feats, np, c, c_out, w_rep, p_rep, r.macs);
  transform_points(p_feats, np, c, c_out, w_bi, p_bi, r.macs);
  transform_points(q_feats, mp, c, c_out, w_rep, q_rep, r.macs);
  transform_points(q_feats, mp, c, c_out, w_bi, q_bi, r.macs);
  bfe_decomposed_direction(p_coords, p_rep, q_coords, q_bi, np, k, c_out, w_pos, slope, nn_pq, r.p_aug, r.macs);
  bfe_decomposed_direction(q_coords, q_rep, p_coords, p_bi, mp, k, c_out, w_pos, slope, nn_qp, r.q_aug, r.macs);
  return r;
}

struct OpCountReport {
  std::uint64_t naive_ops = 0;
  std::uint64_t decomposed_ops = 0;
  double ratio = 0.0;
  std::size_t np = 0, mp = 0, k = 0, c = 0, c_out = 0;
};

OpCountReport op_count_report(std::size_t np, std::size_t mp, std::size_t k, std::size_t c, std::size_t c_out);

struct TimingReport {
  std::size_t np = 0, mp = 0, k = 0, c = 0, c_out = 0;
  std::size_t repetitions = 0;
  double naive_median_ms = 0.0, naive_iqr_ms = 0.0;
  double decomposed_median_ms = 0.0, decomposed_iqr_ms = 0.0;
  std::uint64_t naive_ops = 0, decomposed_ops = 0;
  double op_ratio = 0.0;
};

// Median-of-R wall time of both float32 kernels on one random instance
// with shared precomputed neighbor tables; 5 warmup runs are excluded and
// the variants' outputs are asserted to agree up to float rounding first.
// Refuses to run when BIFLOW_THREADS requests more than one thread.
TimingReport time_compare(std::size_t np, std::size_t mp, std::size_t k, std::size_t c, std::size_t c_out,
                          std::size_t repetitions, std::uint64_t seed);

// CSV rows: variant,Np,Mp,K,C,Cout,ops,median_ms,iqr_ms (with header).
std::string timing_csv(const TimingReport& report);

}  // namespace biflow
