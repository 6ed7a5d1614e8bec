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

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace unienc {

// Dense row-major float64 tensor. Rank 0 is a scalar holding one value.
class Tensor {
 public:
  Tensor() : data_(1, 0.0) {}
  explicit Tensor(std::vector<std::size_t> dims);
  Tensor(std::vector<std::size_t> dims, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor({}, {v}); }
  static Tensor matrix(std::size_t rows, std::size_t cols) {
    return Tensor({rows, cols});
  }
  // Build a [rows.size(), cols] matrix from nested initializers (tests).
  static Tensor from_rows(const std::vector<std::vector<double>>& rows);

  std::size_t rank() const { return dims_.size(); }
  const std::vector<std::size_t>& dims() const { return dims_; }
  std::size_t dim(std::size_t i) const { return dims_.at(i); }
  std::size_t size() const { return data_.size(); }

  // Matrix view helpers; require rank 2.
  std::size_t rows() const;
  std::size_t cols() const;

  double& operator()(std::size_t r, std::size_t c) {
    return data_[r * dims_[1] + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * dims_[1] + c];
  }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  std::span<double> row(std::size_t r) {
    return {data_.data() + r * dims_[1], dims_[1]};
  }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * dims_[1], dims_[1]};
  }

  double item() const;
  void fill(double v);
  Tensor reshaped(std::vector<std::size_t> dims) const;

  bool operator==(const Tensor& other) const = default;

 private:
  std::vector<std::size_t> dims_;
  std::vector<double> data_;
};

std::string shape_string(const std::vector<std::size_t>& dims);
std::size_t element_count(const std::vector<std::size_t>& dims);

}  // namespace unienc
