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

#include "biflow/tape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace biflow {

ValueId Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return nodes_.size() - 1;
}

const Tape::Node& Tape::node(ValueId id) const {
  if (id >= nodes_.size()) throw std::out_of_range("tape: value id " + std::to_string(id) + " out of range");
  return nodes_[id];
}

const Array& Tape::value(ValueId id) const { return node(id).value; }

ValueId Tape::leaf(Array value) {
  Node n;
  n.kind = OpKind::kLeaf;
  n.value = std::move(value);
  return push(std::move(n));
}

ValueId Tape::linear(ValueId x, ValueId w) {
  Node n;
  n.kind = OpKind::kLinear;
  n.inputs = {x, w};
  n.value = linear_map(value(x), value(w));
  return push(std::move(n));
}

ValueId Tape::linear(ValueId x, ValueId w, ValueId bias) {
  Node n;
  n.kind = OpKind::kLinear;
  n.inputs = {x, w, bias};
  n.value = linear_map(value(x), value(w), &value(bias));
  return push(std::move(n));
}

ValueId Tape::leaky_relu(ValueId x, double slope) {
  Node n;
  n.kind = OpKind::kLeakyRelu;
  n.inputs = {x};
  n.scalar_param = slope;
  n.value = biflow::leaky_relu(value(x), slope);
  return push(std::move(n));
}

ValueId Tape::group_max(ValueId x, std::size_t groups, std::size_t k) {
  Node n;
  n.kind = OpKind::kGroupMax;
  n.inputs = {x};
  n.groups = groups;
  n.k = k;
  GroupMaxResult r = biflow::group_max(value(x), groups, k);
  n.value = std::move(r.values);
  n.indices = std::move(r.argmax);
  return push(std::move(n));
}

ValueId Tape::gather_rows(ValueId x, std::vector<std::size_t> indices) {
  Node n;
  n.kind = OpKind::kGatherRows;
  n.inputs = {x};
  n.value = biflow::gather_rows(value(x), indices);
  n.indices = std::move(indices);
  return push(std::move(n));
}

ValueId Tape::concat_cols(const std::vector<ValueId>& parts) {
  Node n;
  n.kind = OpKind::kConcatCols;
  n.inputs = parts;
  std::vector<const Array*> ptrs;
  ptrs.reserve(parts.size());
  for (ValueId id : parts) ptrs.push_back(&value(id));
  n.value = biflow::concat_cols(ptrs);
  return push(std::move(n));
}

ValueId Tape::concat_rows(const std::vector<ValueId>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
  Node n;
  n.kind = OpKind::kConcatRows;
  n.inputs = parts;
  const std::size_t c = value(parts[0]).cols();
  std::size_t rows = 0;
  for (ValueId id : parts) {
    const Array& p = value(id);
    if (p.cols() != c) {
      throw std::invalid_argument("concat_rows: column counts disagree, " + shape_str(value(parts[0])) + " vs " +
                                  shape_str(p));
    }
    rows += p.rows();
  }
  Array out({rows, c});
  std::size_t off = 0;
  for (ValueId id : parts) {
    const Array& p = value(id);
    std::copy(p.data.begin(), p.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(off));
    off += p.data.size();
  }
  n.value = std::move(out);
  return push(std::move(n));
}

ValueId Tape::slice_rows(ValueId x, std::size_t start, std::size_t len) {
  const Array& src = value(x);
  if (len == 0 || start + len > src.rows()) {
    throw std::invalid_argument("slice_rows: rows [" + std::to_string(start) + ", " + std::to_string(start + len) +
                                ") out of range for " + shape_str(src));
  }
  Node n;
  n.kind = OpKind::kSliceRows;
  n.inputs = {x};
  n.groups = start;
  n.k = len;
  const std::size_t c = src.cols();
  Array out({len, c});
  std::copy(src.data.begin() + static_cast<std::ptrdiff_t>(start * c),
            src.data.begin() + static_cast<std::ptrdiff_t>((start + len) * c), out.data.begin());
  n.value = std::move(out);
  return push(std::move(n));
}

ValueId Tape::add(ValueId a, ValueId b) {
  Node n;
  n.kind = OpKind::kAdd;
  n.inputs = {a, b};
  n.value = biflow::add(value(a), value(b));
  return push(std::move(n));
}

ValueId Tape::sub(ValueId a, ValueId b) {
  Node n;
  n.kind = OpKind::kSub;
  n.inputs = {a, b};
  n.value = biflow::sub(value(a), value(b));
  return push(std::move(n));
}

ValueId Tape::scale(ValueId x, double c) {
  Node n;
  n.kind = OpKind::kScale;
  n.inputs = {x};
  n.scalar_param = c;
  n.value = biflow::scale(value(x), c);
  return push(std::move(n));
}

ValueId Tape::interp_rows(ValueId x, std::vector<std::size_t> indices, std::vector<double> weights, std::size_t k) {
  Node n;
  n.kind = OpKind::kInterpRows;
  n.inputs = {x};
  n.k = k;
  n.value = biflow::interp_rows(value(x), indices, weights, k);
  n.indices = std::move(indices);
  n.weights = std::move(weights);
  return push(std::move(n));
}

ValueId Tape::sum_l2_rows(ValueId x) {
  Node n;
  n.kind = OpKind::kSumL2Rows;
  n.inputs = {x};
  std::vector<double> norms;
  const double total = biflow::sum_l2_rows(value(x), &norms);
  n.value = Array::scalar(total);
  n.weights = std::move(norms);
  return push(std::move(n));
}

std::vector<Array> Tape::backward(ValueId seed) const {
  const Node& seed_node = node(seed);
  if (seed_node.value.size() != 1) {
    throw std::invalid_argument("backward: seed must be scalar-valued, got " + shape_str(seed_node.value));
  }
  std::vector<Array> grads;
  grads.reserve(nodes_.size());
  for (const Node& n : nodes_) grads.emplace_back(n.value.shape);
  grads[seed].data[0] = 1.0;

  for (std::size_t id = seed + 1; id-- > 0;) {
    const Node& n = nodes_[id];
    const Array& g = grads[id];
    switch (n.kind) {
      case OpKind::kLeaf:
        break;
      case OpKind::kLinear: {
        const Array& x = nodes_[n.inputs[0]].value;
        const Array& w = nodes_[n.inputs[1]].value;
        matmul_nt_acc(g, w, grads[n.inputs[0]]);
        matmul_tn_acc(x, g, grads[n.inputs[1]]);
        if (n.inputs.size() == 3) {
          Array& gb = grads[n.inputs[2]];
          const std::size_t rows = g.rows(), cols = g.cols();
          for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) gb.data[j] += g.data[i * cols + j];
        }
        break;
      }
      case OpKind::kLeakyRelu: {
        const Array& x = nodes_[n.inputs[0]].value;
        Array& gx = grads[n.inputs[0]];
        for (std::size_t i = 0; i < x.data.size(); ++i) {
          gx.data[i] += g.data[i] * (x.data[i] >= 0.0 ? 1.0 : n.scalar_param);
        }
        break;
      }
      case OpKind::kGroupMax: {
        Array& gx = grads[n.inputs[0]];
        const std::size_t c = n.value.cols();
        for (std::size_t grp = 0; grp < n.groups; ++grp) {
          for (std::size_t j = 0; j < c; ++j) {
            const std::size_t winner = n.indices[grp * c + j];
            gx.data[(grp * n.k + winner) * c + j] += g.data[grp * c + j];
          }
        }
        break;
      }
      case OpKind::kGatherRows: {
        Array& gx = grads[n.inputs[0]];
        const std::size_t c = n.value.cols();
        for (std::size_t i = 0; i < n.indices.size(); ++i) {
          const std::size_t dst = n.indices[i];
          for (std::size_t j = 0; j < c; ++j) gx.data[dst * c + j] += g.data[i * c + j];
        }
        break;
      }
      case OpKind::kConcatCols: {
        const std::size_t rows = n.value.rows(), total = n.value.cols();
        std::size_t off = 0;
        for (ValueId part : n.inputs) {
          Array& gp = grads[part];
          const std::size_t c = gp.cols();
          for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < c; ++j) gp.data[i * c + j] += g.data[i * total + off + j];
          off += c;
        }
        break;
      }
      case OpKind::kConcatRows: {
        std::size_t off = 0;
        for (ValueId part : n.inputs) {
          Array& gp = grads[part];
          for (std::size_t i = 0; i < gp.data.size(); ++i) gp.data[i] += g.data[off + i];
          off += gp.data.size();
        }
        break;
      }
      case OpKind::kSliceRows: {
        Array& gx = grads[n.inputs[0]];
        const std::size_t c = n.value.cols();
        const std::size_t off = n.groups * c;
        for (std::size_t i = 0; i < g.data.size(); ++i) gx.data[off + i] += g.data[i];
        break;
      }
      case OpKind::kAdd: {
        Array& ga = grads[n.inputs[0]];
        Array& gb = grads[n.inputs[1]];
        for (std::size_t i = 0; i < g.data.size(); ++i) {
          ga.data[i] += g.data[i];
          gb.data[i] += g.data[i];
        }
        break;
      }
      case OpKind::kSub: {
        Array& ga = grads[n.inputs[0]];
        Array& gb = grads[n.inputs[1]];
        for (std::size_t i = 0; i < g.data.size(); ++i) {
          ga.data[i] += g.data[i];
          gb.data[i] -= g.data[i];
        }
        break;
      }
      case OpKind::kScale: {
        Array& gx = grads[n.inputs[0]];
        for (std::size_t i = 0; i < g.data.size(); ++i) gx.data[i] += n.scalar_param * g.data[i];
        break;
      }
      case OpKind::kInterpRows: {
        Array& gx = grads[n.inputs[0]];
        const std::size_t c = n.value.cols();
        const std::size_t out_rows = n.value.rows();
        for (std::size_t i = 0; i < out_rows; ++i) {
          for (std::size_t j = 0; j < n.k; ++j) {
            const std::size_t src = n.indices[i * n.k + j];
            const double w = n.weights[i * n.k + j];
            if (w == 0.0) continue;
            for (std::size_t ch = 0; ch < c; ++ch) gx.data[src * c + ch] += w * g.data[i * c + ch];
          }
        }
        break;
      }
      case OpKind::kSumL2Rows: {
        const Array& x = nodes_[n.inputs[0]].value;
        Array& gx = grads[n.inputs[0]];
        const double gs = g.data[0];
        const std::size_t rows = x.rows(), c = x.cols();
        for (std::size_t i = 0; i < rows; ++i) {
          const double norm = n.weights[i];
          if (norm == 0.0) continue;  // subgradient pinned to zero at the kink
          const double s = gs / norm;
          for (std::size_t j = 0; j < c; ++j) gx.data[i * c + j] += s * x.data[i * c + j];
        }
        break;
      }
    }
  }
  return grads;
}

double grad_check(const std::function<GradCheckBuild(Tape&, const std::vector<Array>&)>& build,
                  const std::vector<Array>& inputs, double eps) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) {
    throw std::invalid_argument("grad_check: eps must be in [1e-7, 1e-3], got " + std::to_string(eps));
  }
  Tape tape;
  const GradCheckBuild b = build(tape, inputs);
  if (tape.value(b.seed).size() != 1) {
    throw std::invalid_argument("grad_check: function must be scalar-valued");
  }
  if (b.inputs.size() != inputs.size()) {
    throw std::invalid_argument("grad_check: builder registered a different number of inputs");
  }
  const std::vector<Array> grads = tape.backward(b.seed);

  auto eval = [&](const std::vector<Array>& at) {
    Tape t;
    const GradCheckBuild bb = build(t, at);
    return t.value(bb.seed).data[0];
  };

  double max_err = 0.0;
  std::vector<Array> probe = inputs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (std::size_t c = 0; c < inputs[i].data.size(); ++c) {
      const double saved = probe[i].data[c];
      probe[i].data[c] = saved + eps;
      const double fp = eval(probe);
      probe[i].data[c] = saved - eps;
      const double fm = eval(probe);
      probe[i].data[c] = saved;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double analytic = grads[b.inputs[i]].data[c];
      const double err = std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
      if (err > max_err) max_err = err;
    }
  }
  return max_err;
}

}  // namespace biflow
