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

// Brute-force references used by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "unienc/ctc.hpp"
#include "unienc/kernels.hpp"
#include "unienc/tensor.hpp"

namespace unienc::oracle {

// Calls fn(labels) for every label sequence of length T over alphabet K.
inline void for_each_path(std::size_t frames, std::size_t alphabet,
                          const std::function<void(const std::vector<int>&)>& fn) {
  std::vector<int> labels(frames, 0);
  while (true) {
    fn(labels);
    std::size_t i = 0;
    while (i < frames && ++labels[i] == static_cast<int>(alphabet)) labels[i++] = 0;
    if (i == frames) return;
  }
}

struct PathStats {
  double log_total = -std::numeric_limits<double>::infinity();
  double best = -std::numeric_limits<double>::infinity();
  std::size_t count = 0;
};

// Sum and max of path log-probabilities over every alignment of `target`.
inline PathStats enumerate_ctc(const Tensor& log_probs, const std::vector<int>& target) {
  std::vector<double> scores;
  PathStats stats;
  for_each_path(log_probs.rows(), log_probs.cols(), [&](const std::vector<int>& labels) {
    if (ctc::collapse(labels) != target) return;
    double s = 0.0;
    for (std::size_t t = 0; t < labels.size(); ++t) s += log_probs(t, static_cast<std::size_t>(labels[t]));
    scores.push_back(s);
    stats.best = std::max(stats.best, s);
  });
  stats.count = scores.size();
  if (!scores.empty()) stats.log_total = kernels::log_sum_exp(scores);
  return stats;
}

// Random normalized T x K log-prob matrix.
inline Tensor random_log_probs(std::size_t frames, std::size_t alphabet, std::mt19937_64& rng,
                               double spread = 2.0) {
  std::normal_distribution<double> normal(0.0, spread);
  Tensor logits = Tensor::matrix(frames, alphabet);
  for (double& v : logits.values()) v = normal(rng);
  return kernels::log_softmax_rows(logits);
}

// Top-down recursive edit distance with memoization; shares no code with
// the scorer's bottom-up table.
template <typename T>
std::size_t edit_distance(const std::vector<T>& a, const std::vector<T>& b) {
  std::vector<std::vector<long>> memo(a.size() + 1, std::vector<long>(b.size() + 1, -1));
  std::function<std::size_t(std::size_t, std::size_t)> go = [&](std::size_t i, std::size_t j) {
    if (i == a.size()) return b.size() - j;
    if (j == b.size()) return a.size() - i;
    if (memo[i][j] >= 0) return static_cast<std::size_t>(memo[i][j]);
    std::size_t best = go(i + 1, j + 1) + (a[i] == b[j] ? 0 : 1);
    best = std::min(best, go(i + 1, j) + 1);
    best = std::min(best, go(i, j + 1) + 1);
    memo[i][j] = static_cast<long>(best);
    return best;
  };
  return go(0, 0);
}

}  // namespace unienc::oracle
