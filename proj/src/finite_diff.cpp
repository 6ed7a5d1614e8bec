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

#include "unienc/finite_diff.hpp"

#include <algorithm>
#include <cmath>

#include "unienc/error.hpp"

namespace unienc {
namespace {

double checked(double v, const std::string& where) {
  if (!std::isfinite(v)) {
    throw NumericalError("finite_diff_grad: non-finite loss at " + where);
  }
  return v;
}

}  // namespace

std::vector<double> finite_diff_grad(
    const std::function<double(std::span<const double>)>& loss_fn,
    std::vector<double> params, double eps) {
  if (!(eps > 0.0)) throw DomainError("finite_diff_grad: eps must be > 0");
  std::vector<double> grad(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double x = params[i];
    const std::string where = "coordinate " + std::to_string(i);
    params[i] = x + eps;
    const double hi = checked(loss_fn(params), where);
    params[i] = x - eps;
    const double lo = checked(loss_fn(params), where);
    params[i] = x;
    grad[i] = (hi - lo) / (2.0 * eps);
  }
  return grad;
}

std::vector<Tensor> finite_diff_grad(
    const std::function<double(const ParameterStore&)>& loss_fn,
    ParameterStore& store, double eps) {
  if (!(eps > 0.0)) throw DomainError("finite_diff_grad: eps must be > 0");
  std::vector<Tensor> grads;
  grads.reserve(store.size());
  for (ParameterStore::Id id = 0; id < store.size(); ++id) {
    Tensor g(store[id].value.dims());
    for (std::size_t i = 0; i < g.size(); ++i) {
      double& slot = store[id].value[i];
      const double x = slot;
      const std::string where = store[id].name + "[" + std::to_string(i) + "]";
      slot = x + eps;
      const double hi = checked(loss_fn(store), where);
      slot = x - eps;
      const double lo = checked(loss_fn(store), where);
      slot = x;
      g[i] = (hi - lo) / (2.0 * eps);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

}  // namespace unienc
