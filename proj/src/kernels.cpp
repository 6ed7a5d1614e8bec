// Copyright 2026 The UniEnc Authors. All Rights Reserved.
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

#include "unienc/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "unienc/error.hpp"

namespace unienc::kernels {
namespace {

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw ContractViolation(std::string(op) + ": expected matrix, got " +
                            shape_string(t.dims()));
  }
}

void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw ContractViolation(std::string(op) + ": incompatible shapes " +
                          shape_string(a.dims()) + " and " +
                          shape_string(b.dims()));
}

}  // namespace

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) throw DomainError("log_sum_exp: empty input");
  const double m = *std::max_element(values.begin(), values.end());
  if (m == -std::numeric_limits<double>::infinity()) return m;
  double s = 0.0;
  for (double v : values) s += std::exp(v - m);
  return m + std::log(s);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  if (a.cols() != b.rows()) shape_error("matmul", a, b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor c = Tensor::matrix(m, n);
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.data();
  // i-k-j order: every C(i,j) accumulates over k in the same order whatever
  // the number of rows, so results are row-independent and bit-stable.
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = pc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

void matmul_nt_acc(const Tensor& a, const Tensor& b, Tensor& out) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  // Transpose b once so the inner loop runs over contiguous rows.
  std::vector<double> bt(k * n);
  const double* pb = b.data();
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = pb[j * k + p];
  }
  const double* pa = a.data();
  double* po = out.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = po + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      const double* brow = bt.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  if (a.cols() != b.cols()) shape_error("matmul_nt", a, b);
  Tensor c = Tensor::matrix(a.rows(), b.rows());
  matmul_nt_acc(a, b, c);
  return c;
}

void matmul_tn_acc(const Tensor& a, const Tensor& b, Tensor& out) {
  const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = pa + p * m;
    const double* brow = pb + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* orow = po + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_tn");
  require_matrix(b, "matmul_tn");
  if (a.rows() != b.rows()) shape_error("matmul_tn", a, b);
  Tensor c = Tensor::matrix(a.cols(), b.cols());
  matmul_tn_acc(a, b, c);
  return c;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_matrix(x, "add_bias");
  if (bias.size() != x.cols()) shape_error("add_bias", x, bias);
  Tensor y = x;
  for (std::size_t r = 0; r < y.rows(); ++r) {
    auto row = y.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += bias[c];
  }
  return y;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias) {
  require_matrix(x, "layer_norm");
  const std::size_t n = x.cols();
  if (gain.size() != n || bias.size() != n) shape_error("layer_norm", x, gain);
  Tensor y = Tensor::matrix(x.rows(), n);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto in = x.row(r);
    auto out = y.row(r);
    double mean = 0.0;
    for (double v : in) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : in) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    const double inv =
        var < kZeroVariance ? 0.0 : 1.0 / std::sqrt(var + kLayerNormEps);
    for (std::size_t c = 0; c < n; ++c) {
      out[c] = (in[c] - mean) * inv * gain[c] + bias[c];
    }
  }
  return y;
}

double gelu(double x) {
  return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
}

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf =
      std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

Tensor gelu(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.values()) v = gelu(v);
  return y;
}

Tensor relu(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.values()) v = std::max(v, 0.0);
  return y;
}

Tensor softmax_rows(const Tensor& x) {
  require_matrix(x, "softmax_rows");
  Tensor y = x;
  for (std::size_t r = 0; r < y.rows(); ++r) {
    auto row = y.row(r);
    if (row.empty()) continue;
    const double m = *std::max_element(row.begin(), row.end());
    double s = 0.0;
    for (double& v : row) {
      v = std::exp(v - m);
      s += v;
    }
    for (double& v : row) v /= s;
  }
  return y;
}

Tensor log_softmax_rows(const Tensor& x) {
  require_matrix(x, "log_softmax_rows");
  Tensor y = x;
  for (std::size_t r = 0; r < y.rows(); ++r) {
    auto row = y.row(r);
    if (row.empty()) continue;
    const double lse = log_sum_exp(row);
    for (double& v : row) v -= lse;
  }
  return y;
}

AttentionMask AttentionMask::all_pass(std::size_t queries, std::size_t keys) {
  return {queries, keys, std::vector<char>(queries * keys, 1)};
}

Tensor masked_scaled_dot_attention(const Tensor& q, const Tensor& k,
                                   const Tensor& v,
                                   const AttentionMask& mask) {
  require_matrix(q, "attention");
  require_matrix(k, "attention");
  require_matrix(v, "attention");
  if (q.cols() != k.cols()) shape_error("attention", q, k);
  if (k.rows() != v.rows()) shape_error("attention", k, v);
  if (!mask.empty() &&
      (mask.queries != q.rows() || mask.keys != k.rows() ||
       mask.allowed.size() != q.rows() * k.rows())) {
    throw ContractViolation("attention: mask does not match score matrix");
  }
  Tensor scores = matmul_nt(q, k);
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    for (std::size_t j = 0; j < scores.cols(); ++j) {
      scores(i, j) *= scale;
      if (!mask.allows(i, j)) scores(i, j) += kMaskedScore;
    }
  }
  return matmul(softmax_rows(scores), v);
}

Tensor sinusoidal_positions(std::size_t count, std::size_t dim) {
  Tensor pe = Tensor::matrix(count, dim);
  for (std::size_t pos = 0; pos < count; ++pos) {
    for (std::size_t i = 0; i < dim; ++i) {
      const double freq = std::pow(
          10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(dim));
      const double angle = static_cast<double>(pos) * freq;
      pe(pos, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

}  // namespace unienc::kernels
