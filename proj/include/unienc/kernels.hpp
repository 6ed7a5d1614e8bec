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

#pragma once

#include <span>
#include <vector>

#include "unienc/tensor.hpp"

// Pure dense kernels. None of these record gradients; see tape.hpp for the
// differentiable wrappers.
namespace unienc::kernels {

inline constexpr double kMaskedScore = -1e30;
inline constexpr double kLayerNormEps = 1e-5;
inline constexpr double kZeroVariance = 1e-12;

// log(sum(exp(v))) with max shift. -inf for all -inf input.
double log_sum_exp(std::span<const double> values);

// C = A * B for A [m,k], B [k,n].
Tensor matmul(const Tensor& a, const Tensor& b);
// C = A * B^T for A [m,k], B [n,k].
Tensor matmul_nt(const Tensor& a, const Tensor& b);
// C = A^T * B for A [k,m], B [k,n].
Tensor matmul_tn(const Tensor& a, const Tensor& b);

// In-place accumulating variants used by backward passes.
void matmul_nt_acc(const Tensor& a, const Tensor& b, Tensor& out);
void matmul_tn_acc(const Tensor& a, const Tensor& b, Tensor& out);

// x [m,n] + bias [n] broadcast over rows.
Tensor add_bias(const Tensor& x, const Tensor& bias);

// Row-wise normalization, then gain/bias. Rows with variance below
// kZeroVariance normalize to 0.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias);

double gelu(double x);
double gelu_grad(double x);
Tensor gelu(const Tensor& x);
Tensor relu(const Tensor& x);

Tensor softmax_rows(const Tensor& x);
Tensor log_softmax_rows(const Tensor& x);

// Attention mask: allowed[i * n_k + j] says whether query i may read key j.
// An empty mask allows everything.
struct AttentionMask {
  std::size_t queries = 0;
  std::size_t keys = 0;
  std::vector<char> allowed;

  bool empty() const { return allowed.empty(); }
  bool allows(std::size_t q, std::size_t k) const {
    return allowed.empty() || allowed[q * keys + k] != 0;
  }
  static AttentionMask all_pass(std::size_t queries, std::size_t keys);
};

// Single-head softmax(q k^T / sqrt(d) + mask) v. Masked scores receive
// kMaskedScore before the softmax.
Tensor masked_scaled_dot_attention(const Tensor& q, const Tensor& k,
                                   const Tensor& v,
                                   const AttentionMask& mask = {});

// Sinusoidal position encodings for positions 0..count-1, width `dim`.
Tensor sinusoidal_positions(std::size_t count, std::size_t dim);

}  // namespace unienc::kernels
