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

#include "biflow/array.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace biflow {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

void check_shape_valid(const std::vector<std::size_t>& shape) {
  if (shape.empty()) throw std::invalid_argument("array shape must have at least one extent");
  for (std::size_t e : shape) {
    if (e == 0) throw std::invalid_argument("array shape extents must be positive, got " + shape_str(shape));
  }
}

}  // namespace

Array::Array(std::vector<std::size_t> shape_in) : shape(std::move(shape_in)) {
  check_shape_valid(shape);
  data.assign(shape_product(shape), 0.0);
}

Array::Array(std::vector<std::size_t> shape_in, std::vector<double> data_in)
    : shape(std::move(shape_in)), data(std::move(data_in)) {
  check_shape_valid(shape);
  if (data.size() != shape_product(shape)) {
    std::ostringstream msg;
    msg << "array data length " << data.size() << " does not match shape " << shape_str(shape);
    throw std::invalid_argument(msg.str());
  }
}

Array Array::scalar(double v) { return Array({1}, {v}); }

Array Array::identity(std::size_t n) {
  Array a({n, n});
  for (std::size_t i = 0; i < n; ++i) a(i, i) = 1.0;
  return a;
}

std::size_t Array::rows() const { return shape.empty() ? 0 : shape[0]; }

std::size_t Array::cols() const {
  if (shape.size() < 2) return 1;
  std::size_t c = 1;
  for (std::size_t i = 1; i < shape.size(); ++i) c *= shape[i];
  return c;
}

bool Array::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::ostringstream s;
  s << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s << "x";
    s << shape[i];
  }
  s << "]";
  return s.str();
}

std::string shape_str(const Array& a) { return shape_str(a.shape); }

Array linear_map(const Array& x, const Array& w, const Array* bias) {
  if (w.rank() != 2) throw std::invalid_argument("linear_map: weight must be 2-d, got " + shape_str(w));
  const std::size_t n = x.rows();
  const std::size_t a = x.cols();
  const std::size_t b = w.shape[1];
  if (a != w.shape[0]) {
    throw std::invalid_argument("linear_map: inner extents disagree, x " + shape_str(x) + " vs w " + shape_str(w));
  }
  if (bias && (bias->size() != b)) {
    throw std::invalid_argument("linear_map: bias " + shape_str(*bias) + " does not match output width " +
                                std::to_string(b));
  }
  Array y({n, b});
  const double* xp = x.data.data();
  const double* wp = w.data.data();
  double* yp = y.data.data();
  for (std::size_t i = 0; i < n; ++i) {
    double* yrow = yp + i * b;
    if (bias) {
      const double* bp = bias->data.data();
      for (std::size_t j = 0; j < b; ++j) yrow[j] = bp[j];
    }
    const double* xrow = xp + i * a;
    for (std::size_t k = 0; k < a; ++k) {
      const double xv = xrow[k];
      const double* wrow = wp + k * b;
      for (std::size_t j = 0; j < b; ++j) yrow[j] += xv * wrow[j];
    }
  }
  return y;
}

void matmul_nt_acc(const Array& a, const Array& b, Array& out) {
  // out[i][j] += sum_k a[i][k] * b[j][k]; a [n x c], b [m x c], out [n x m]
  const std::size_t n = a.rows(), c = a.cols(), m = b.rows();
  if (b.cols() != c || out.rows() != n || out.cols() != m) {
    throw std::invalid_argument("matmul_nt_acc: shape mismatch " + shape_str(a) + ", " + shape_str(b) + ", " +
                                shape_str(out));
  }
  const double* ap = a.data.data();
  const double* bp = b.data.data();
  double* op = out.data.data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double acc = 0.0;
      const double* arow = ap + i * c;
      const double* brow = bp + j * c;
      for (std::size_t k = 0; k < c; ++k) acc += arow[k] * brow[k];
      op[i * m + j] += acc;
    }
  }
}

void matmul_tn_acc(const Array& a, const Array& b, Array& out) {
  // out[k][j] += sum_i a[i][k] * b[i][j]; a [n x c], b [n x m], out [c x m]
  const std::size_t n = a.rows(), c = a.cols(), m = b.cols();
  if (b.rows() != n || out.rows() != c || out.cols() != m) {
    throw std::invalid_argument("matmul_tn_acc: shape mismatch " + shape_str(a) + ", " + shape_str(b) + ", " +
                                shape_str(out));
  }
  const double* ap = a.data.data();
  const double* bp = b.data.data();
  double* op = out.data.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double* arow = ap + i * c;
    const double* brow = bp + i * m;
    for (std::size_t k = 0; k < c; ++k) {
      const double av = arow[k];
      if (av == 0.0) continue;
      double* orow = op + k * m;
      for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
    }
  }
}

Array leaky_relu(const Array& x, double slope) {
  if (!(slope >= 0.0 && slope < 1.0)) {
    throw std::invalid_argument("leaky_relu: slope must be in [0, 1), got " + std::to_string(slope));
  }
  Array y = x;
  for (double& v : y.data) {
    if (v < 0.0) v *= slope;
  }
  return y;
}

GroupMaxResult group_max(const Array& values, std::size_t groups, std::size_t k) {
  if (k == 0) throw std::invalid_argument("group_max: empty group dimension");
  if (values.rows() != groups * k) {
    std::ostringstream msg;
    msg << "group_max: expected " << groups << "*" << k << " rows, got " << shape_str(values);
    throw std::invalid_argument(msg.str());
  }
  const std::size_t c = values.cols();
  GroupMaxResult r{Array({groups, c}), std::vector<std::size_t>(groups * c, 0)};
  const double* vp = values.data.data();
  double* op = r.values.data.data();
  for (std::size_t g = 0; g < groups; ++g) {
    const double* block = vp + g * k * c;
    double* orow = op + g * c;
    std::size_t* arow = r.argmax.data() + g * c;
    for (std::size_t j = 0; j < c; ++j) orow[j] = block[j];
    for (std::size_t m = 1; m < k; ++m) {
      const double* mrow = block + m * c;
      for (std::size_t j = 0; j < c; ++j) {
        if (mrow[j] > orow[j]) {
          orow[j] = mrow[j];
          arow[j] = m;
        }
      }
    }
  }
  return r;
}

Array gather_rows(const Array& x, const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw std::invalid_argument("gather_rows: empty index list");
  const std::size_t n = x.rows(), c = x.cols();
  Array y({indices.size(), c});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t src = indices[i];
    if (src >= n) {
      throw std::invalid_argument("gather_rows: index " + std::to_string(src) + " out of range for " + shape_str(x));
    }
    for (std::size_t j = 0; j < c; ++j) y.data[i * c + j] = x.data[src * c + j];
  }
  return y;
}

Array concat_cols(const std::vector<const Array*>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
  const std::size_t n = parts[0]->rows();
  std::size_t total = 0;
  for (const Array* p : parts) {
    if (p->rows() != n) {
      throw std::invalid_argument("concat_cols: row counts disagree, " + shape_str(*parts[0]) + " vs " +
                                  shape_str(*p));
    }
    total += p->cols();
  }
  Array y({n, total});
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t off = 0;
    for (const Array* p : parts) {
      const std::size_t c = p->cols();
      for (std::size_t j = 0; j < c; ++j) y.data[i * total + off + j] = p->data[i * c + j];
      off += c;
    }
  }
  return y;
}

Array add(const Array& a, const Array& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("add: shape mismatch " + shape_str(a) + " vs " + shape_str(b));
  Array y = a;
  for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] += b.data[i];
  return y;
}

Array sub(const Array& a, const Array& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("sub: shape mismatch " + shape_str(a) + " vs " + shape_str(b));
  Array y = a;
  for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] -= b.data[i];
  return y;
}

Array scale(const Array& x, double c) {
  Array y = x;
  for (double& v : y.data) v *= c;
  return y;
}

Array interp_rows(const Array& x, const std::vector<std::size_t>& indices, const std::vector<double>& weights,
                  std::size_t k) {
  if (k == 0) throw std::invalid_argument("interp_rows: k must be positive");
  if (indices.size() != weights.size() || indices.size() % k != 0) {
    throw std::invalid_argument("interp_rows: index/weight table does not factor into rows of " + std::to_string(k));
  }
  const std::size_t out_rows = indices.size() / k;
  const std::size_t c = x.cols();
  Array y({out_rows, c});
  for (std::size_t i = 0; i < out_rows; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t src = indices[i * k + j];
      const double w = weights[i * k + j];
      if (src >= x.rows()) {
        throw std::invalid_argument("interp_rows: index " + std::to_string(src) + " out of range for " + shape_str(x));
      }
      if (w == 0.0) continue;
      for (std::size_t ch = 0; ch < c; ++ch) y.data[i * c + ch] += w * x.data[src * c + ch];
    }
  }
  return y;
}

double sum_l2_rows(const Array& x, std::vector<double>* row_norms) {
  const std::size_t n = x.rows(), c = x.cols();
  if (row_norms) row_norms->assign(n, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double v = x.data[i * c + j];
      sq += v * v;
    }
    const double norm = std::sqrt(sq);
    if (row_norms) (*row_norms)[i] = norm;
    total += norm;
  }
  return total;
}

}  // namespace biflow
