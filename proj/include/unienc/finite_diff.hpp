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

#include <functional>
#include <span>
#include <vector>

#include "unienc/tape.hpp"

namespace unienc {

// Central differences (f(x+eps) - f(x-eps)) / 2eps for every coordinate.
// Throws NumericalError naming the coordinate if a probe is non-finite.
std::vector<double> finite_diff_grad(
    const std::function<double(std::span<const double>)>& loss_fn,
    std::vector<double> params, double eps);

// Same oracle over every scalar of a parameter store. `loss_fn` reads the
// store it is handed; values are restored after each probe.
std::vector<Tensor> finite_diff_grad(
    const std::function<double(const ParameterStore&)>& loss_fn,
    ParameterStore& store, double eps);

// Gradient magnitudes below this are compared absolutely in gradient
// checks; central-difference round-off sits around 1e-10 at eps 1e-5.
inline constexpr double kGradCheckFloor = 1e-5;

// |a - b| / max(|a|, |b|, floor).
double relative_error(double analytic, double numeric, double floor = 1e-6);

}  // namespace unienc
