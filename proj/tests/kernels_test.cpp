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

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "unienc/error.hpp"
#include "unienc/kernels.hpp"
#include "unienc/tensor.hpp"

namespace unienc {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

TEST(LogSumExp, TwoZeros) {
  const double v[] = {0.0, 0.0};
  EXPECT_NEAR(kernels::log_sum_exp(v), std::log(2.0), 1e-15);
}

TEST(LogSumExp, NegativeInfinityIsAbsorbed) {
  const double v[] = {-kInf, 1.25};
  EXPECT_EQ(kernels::log_sum_exp(v), 1.25);
}

TEST(LogSumExp, LargeNegativeArguments) {
  const double v[] = {-1000.5, -1001.5};
  EXPECT_NEAR(kernels::log_sum_exp(v), -1000.5 + std::log1p(std::exp(-1.0)), 1e-12);
  EXPECT_NEAR(kernels::log_sum_exp(v), -1000.18673, 1e-5);
}

TEST(LogSumExp, AllNegativeInfinity) {
  const double v[] = {-kInf, -kInf};
  EXPECT_EQ(kernels::log_sum_exp(v), -kInf);
}

TEST(LogSumExp, EmptyInputThrows) {
  EXPECT_THROW(kernels::log_sum_exp(std::span<const double>{}), DomainError);
}

TEST(Matmul, SmallProduct) {
  const Tensor a = Tensor::from_rows({{1, 2}, {3, 4}});
  const Tensor b = Tensor::from_rows({{5, 6, 7}, {8, 9, 10}});
  const Tensor c = kernels::matmul(a, b);
  EXPECT_EQ(c, Tensor::from_rows({{21, 24, 27}, {47, 54, 61}}));
  EXPECT_EQ(kernels::matmul_nt(a, kernels::matmul_tn(b, Tensor::from_rows({{1, 0}, {0, 1}}))),
            c);
}

TEST(Matmul, TransposedVariantsAgree) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  Tensor a = Tensor::matrix(5, 7), b = Tensor::matrix(7, 4);
  for (double& v : a.values()) v = u(rng);
  for (double& v : b.values()) v = u(rng);
  Tensor bt = Tensor::matrix(4, 7), at = Tensor::matrix(7, 5);
  for (std::size_t i = 0; i < 7; ++i) {
    for (std::size_t j = 0; j < 4; ++j) bt(j, i) = b(i, j);
    for (std::size_t j = 0; j < 5; ++j) at(i, j) = a(j, i);
  }
  const Tensor ref = kernels::matmul(a, b);
  const Tensor nt = kernels::matmul_nt(a, bt);
  const Tensor tn = kernels::matmul_tn(at, b);
  for (std::size_t i = 0; i < ref.size(); ++i) {
    EXPECT_NEAR(nt[i], ref[i], 1e-14);
    EXPECT_NEAR(tn[i], ref[i], 1e-14);
  }
  Tensor acc = ref;
  kernels::matmul_nt_acc(a, bt, acc);
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(acc[i], 2 * ref[i], 1e-13);
}

TEST(Softmax, SymmetricRow) {
  const Tensor s = kernels::softmax_rows(Tensor::from_rows({{0, 0}}));
  EXPECT_EQ(s, Tensor::from_rows({{0.5, 0.5}}));
}

TEST(Softmax, LogSoftmaxRowsNormalize) {
  const Tensor lp = kernels::log_softmax_rows(Tensor::from_rows({{1, 2, 3}, {-500, 0, 700}}));
  for (std::size_t r = 0; r < lp.rows(); ++r) {
    EXPECT_NEAR(kernels::log_sum_exp(lp.row(r)), 0.0, 1e-12);
  }
}

TEST(LayerNorm, ConstantRowNormalizesToZero) {
  const Tensor x = Tensor::from_rows({{3, 3, 3, 3}});
  const Tensor gain = Tensor({4}, {1, 1, 1, 1});
  const Tensor bias = Tensor({4});
  EXPECT_EQ(kernels::layer_norm(x, gain, bias), Tensor::from_rows({{0, 0, 0, 0}}));
}

TEST(LayerNorm, UnitVarianceOutput) {
  const Tensor x = Tensor::from_rows({{1, 2, 3, 4}});
  const Tensor y = kernels::layer_norm(x, Tensor({4}, {1, 1, 1, 1}), Tensor({4}));
  double mean = 0, var = 0;
  for (double v : y.values()) mean += v / 4;
  for (double v : y.values()) var += (v - mean) * (v - mean) / 4;
  EXPECT_NEAR(mean, 0.0, 1e-12);
  EXPECT_NEAR(var, 1.25 / (1.25 + kernels::kLayerNormEps), 1e-12);
}

TEST(Gelu, KnownValues) {
  EXPECT_EQ(kernels::gelu(0.0), 0.0);
  EXPECT_NEAR(kernels::gelu(1.0), 0.8413447460685429, 1e-14);
  EXPECT_NEAR(kernels::gelu(-1.0), -0.15865525393145707, 1e-14);
  for (double x : {-2.0, -0.3, 0.0, 0.7, 3.0}) {
    const double h = 1e-5;
    const double fd = (kernels::gelu(x + h) - kernels::gelu(x - h)) / (2 * h);
    EXPECT_NEAR(kernels::gelu_grad(x), fd, 1e-9);
  }
}

TEST(Attention, OneAllowedKeyCopiesItsValue) {
  const Tensor q = Tensor::from_rows({{0.3, -1.0}, {2.0, 0.5}});
  const Tensor k = Tensor::from_rows({{1, 0}, {0, 1}, {1, 1}});
  const Tensor v = Tensor::from_rows({{1, 2}, {3, 4}, {5, 6}});
  kernels::AttentionMask mask{2, 3, {0, 0, 1, 0, 1, 0}};
  const Tensor out = kernels::masked_scaled_dot_attention(q, k, v, mask);
  EXPECT_EQ(out, Tensor::from_rows({{5, 6}, {3, 4}}));
}

TEST(Attention, EmptyMaskEqualsAllPass) {
  const Tensor q = Tensor::from_rows({{0.3, -1.0}});
  const Tensor k = Tensor::from_rows({{1, 0}, {0, 1}});
  const Tensor v = Tensor::from_rows({{1, 2}, {3, 4}});
  EXPECT_EQ(kernels::masked_scaled_dot_attention(q, k, v),
            kernels::masked_scaled_dot_attention(q, k, v, kernels::AttentionMask::all_pass(1, 2)));
}

TEST(Positions, SinusoidTable) {
  const Tensor p = kernels::sinusoidal_positions(3, 4);
  EXPECT_EQ(p.rows(), 3u);
  EXPECT_EQ(p(0, 0), 0.0);
  EXPECT_EQ(p(0, 1), 1.0);
  EXPECT_NEAR(p(1, 0), std::sin(1.0), 1e-15);
  EXPECT_NEAR(p(1, 1), std::cos(1.0), 1e-15);
}

TEST(TensorShape, RankAndAccessors) {
  const Tensor s = Tensor::scalar(2.5);
  EXPECT_EQ(s.rank(), 0u);
  EXPECT_EQ(s.item(), 2.5);
  Tensor m = Tensor::matrix(2, 3);
  m(1, 2) = 7;
  EXPECT_EQ(m[5], 7);
  EXPECT_EQ(m.reshaped({3, 2})(2, 1), 7);
  EXPECT_EQ(shape_string(m.dims()), "[2,3]");
}

}  // namespace
}  // namespace unienc
