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

#include "unienc/tape.hpp"
#include "unienc/tensor.hpp"

// Alignment machinery: CTC loss, forced alignment, greedy decoding,
// error-based alignment sampling and segment extraction. Label id 0 is the
// blank everywhere; real tokens are 1..V.
namespace unienc::ctc {

inline constexpr int kBlank = 0;

using TokenSeq = std::vector<int>;

struct Alignment {
  std::vector<int> labels;  // one label per frame
  double score = 0.0;       // path log-probability under its lattice

  std::size_t frames() const { return labels.size(); }
};

// T x (V+1) frame log-posteriors. Rows are validated to be normalized.
class LogProbLattice {
 public:
  explicit LogProbLattice(Tensor values);

  std::size_t frames() const { return values_.rows(); }
  // Real tokens, blank excluded.
  std::size_t vocab_size() const { return values_.cols() - 1; }
  double operator()(std::size_t t, std::size_t k) const { return values_(t, k); }
  const Tensor& values() const { return values_; }

 private:
  Tensor values_;
};

struct Span {
  std::size_t start = 0;
  std::size_t end = 0;  // exclusive

  std::size_t length() const { return end - start; }
  bool operator==(const Span&) const = default;
};

// Per-token half-open frame spans that partition [0, frames).
struct SegmentBoundaries {
  std::vector<Span> spans;
  std::size_t frames = 0;

  std::size_t tokens() const { return spans.size(); }
};

// Merge adjacent repeats, then drop blanks.
TokenSeq collapse(std::span<const int> labels);
inline TokenSeq collapse(const Alignment& a) { return collapse(a.labels); }

// Minimum frame count able to carry `target`: U + adjacent equal pairs.
std::size_t required_frames(std::span<const int> target);

struct CtcLossResult {
  double nll = 0.0;
  // dNLL / dlogits, i.e. softmax - occupancy. Each row sums to zero.
  Tensor grad_logits;
  // Posterior label occupancy gamma[t][k].
  Tensor occupancy;
};

// Forward-backward over the 2U+1 extended-label trellis in log domain.
// Throws CtcInfeasible when frames < required_frames(target).
CtcLossResult ctc_loss(const LogProbLattice& lattice, std::span<const int> target);

// Best path among the alignments collapsing to `target`. Ties prefer the
// path that enters later trellis states earlier (earliest emission).
Alignment viterbi_align(const LogProbLattice& lattice, std::span<const int> target);

struct GreedyResult {
  Alignment alignment;
  std::vector<double> confidence;  // exp(max log-prob) per frame
};

// Per-frame argmax, lowest label id wins ties.
GreedyResult greedy_decode(const LogProbLattice& lattice);

// Error-based sampled alignments: frames whose greedy confidence is at least
// `threshold` keep the argmax, the rest draw from the full frame posterior.
// A sample collapsing to nothing is redrawn once, then replaced by the greedy
// alignment.
std::vector<Alignment> esa_sample(const LogProbLattice& lattice, double threshold,
                                  std::size_t count, Rng& rng);

// Token u owns the frames up to and including its last emission; leading
// blanks attach forward and trailing blanks to the last token.
SegmentBoundaries segment_boundaries(std::span<const int> labels);
inline SegmentBoundaries segment_boundaries(const Alignment& a) {
  return segment_boundaries(a.labels);
}

// Differentiable CTC negative log-likelihood over a log-prob matrix on a tape.
Var ctc_loss_op(Var log_probs, std::span<const int> target);

}  // namespace unienc::ctc
