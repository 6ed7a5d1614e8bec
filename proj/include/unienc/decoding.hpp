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

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "unienc/model.hpp"

namespace unienc {

// Branching schedule for iterative decoding: iteration n draws
// samples[n] alignments per live branch with confidence threshold
// thresholds[n]. Total hypotheses = product of samples.
struct DecodeSchedule {
  std::vector<std::size_t> samples{25, 2};
  std::vector<double> thresholds{0.9, 0.9};

  // "25,2" with one threshold for every iteration.
  static DecodeSchedule parse(std::string_view spec, double threshold);

  std::size_t iterations() const { return samples.size(); }
  std::size_t total_branches() const;
  // Whether any iteration can draw a non-greedy label.
  bool samples_randomly() const;
  void validate() const;
  std::string to_string() const;
};

struct Hypothesis {
  std::vector<int> tokens;
  double score = -std::numeric_limits<double>::infinity();
  // Sample index chosen at each iteration.
  std::vector<std::size_t> trace;
  std::vector<double> token_log_probs;
};

using Ranker = std::function<double(const Hypothesis&)>;

// Length-normalized CE log-probability; -inf for an empty hypothesis.
double rank(const Hypothesis& hyp);

struct DecodeResult {
  // Sorted by score, descending; ties keep branch order.
  std::vector<Hypothesis> hypotheses;
  // The selected transcript: the top hypothesis, or the greedy CTC output
  // when every branch came out empty (fell_back).
  Hypothesis best;
  bool fell_back = false;
  std::size_t pass2_forwards = 0;
};

struct DecodeOptions {
  std::uint64_t seed = 0;
  Ranker ranker = rank;
  // Worker threads for branch forwards; results do not depend on it.
  std::size_t jobs = 1;
};

DecodeResult decode_utterance(const Model& model, const Tensor& features,
                              const DecodeSchedule& schedule, const DecodeOptions& options = {});

// Pass 1, greedy CTC, collapse. Score is the greedy path log-prob.
Hypothesis decode_greedy_ctc(const Model& model, const Tensor& features);

}  // namespace unienc
