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

#include "unienc/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "unienc/error.hpp"

namespace unienc {

std::size_t element_count(const std::vector<std::size_t>& dims) {
  std::size_t n = 1;
  for (std::size_t d : dims) n *= d;
  return n;
}

std::string shape_string(const std::vector<std::size_t>& dims) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) os << ',';
    os << dims[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(std::vector<std::size_t> dims)
    : dims_(std::move(dims)), data_(element_count(dims_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> dims, std::vector<double> data)
    : dims_(std::move(dims)), data_(std::move(data)) {
  if (element_count(dims_) != data_.size()) {
    throw ContractViolation("tensor: shape " + shape_string(dims_) +
                            " does not hold " + std::to_string(data_.size()) +
                            " values");
  }
}

Tensor Tensor::from_rows(const std::vector<std::vector<double>>& rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows[0].size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ContractViolation("tensor: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

std::size_t Tensor::rows() const {
  if (dims_.size() != 2) {
    throw ContractViolation("tensor: expected a matrix, got " +
                            shape_string(dims_));
  }
  return dims_[0];
}

std::size_t Tensor::cols() const {
  if (dims_.size() != 2) {
    throw ContractViolation("tensor: expected a matrix, got " +
                            shape_string(dims_));
  }
  return dims_[1];
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw ContractViolation("tensor: item() on " + shape_string(dims_));
  }
  return data_[0];
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor Tensor::reshaped(std::vector<std::size_t> dims) const {
  return Tensor(std::move(dims), data_);
}

}  // namespace unienc
