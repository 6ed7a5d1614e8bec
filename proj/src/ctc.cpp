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

#include "unienc/ctc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "unienc/error.hpp"
#include "unienc/kernels.hpp"

namespace unienc::ctc {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  return a > b ? a + std::log1p(std::exp(b - a)) : b + std::log1p(std::exp(a - b));
}

void check_target(std::span<const int> target, std::size_t vocab) {
  if (target.empty()) throw DomainError("ctc: empty target");
  for (int y : target) {
    if (y <= kBlank || static_cast<std::size_t>(y) > vocab) {
      throw ContractViolation("ctc: target id " + std::to_string(y) +
                              " outside 1.." + std::to_string(vocab));
    }
  }
}

// Extended label sequence: blank, y1, blank, y2, ..., yU, blank.
std::vector<int> extend(std::span<const int> target) {
  std::vector<int> ext(2 * target.size() + 1, kBlank);
  for (std::size_t u = 0; u < target.size(); ++u) ext[2 * u + 1] = target[u];
  return ext;
}

// Whether state s may be entered from s-2 (skipping a blank).
inline bool can_skip(const std::vector<int>& ext, std::size_t s) {
  return s >= 2 && ext[s] != kBlank && ext[s] != ext[s - 2];
}

struct ForwardBackward {
  double log_z = kNegInf;
  Tensor occupancy;  // T x (V+1)
};

ForwardBackward forward_backward(const Tensor& lp, std::span<const int> target) {
  const std::size_t T = lp.rows();
  const std::size_t K = lp.cols();
  check_target(target, K - 1);
  const std::size_t need = required_frames(target);
  if (T < need) throw CtcInfeasible(T, need);

  const std::vector<int> ext = extend(target);
  const std::size_t S = ext.size();
  // alpha includes the emission at t; beta covers frames after t only.
  std::vector<double> alpha(T * S, kNegInf), beta(T * S, kNegInf);
  alpha[0] = lp(0, ext[0]);
  alpha[1] = lp(0, ext[1]);
  for (std::size_t t = 1; t < T; ++t) {
    const double* prev = &alpha[(t - 1) * S];
    double* cur = &alpha[t * S];
    for (std::size_t s = 0; s < S; ++s) {
      double acc = prev[s];
      if (s >= 1) acc = log_add(acc, prev[s - 1]);
      if (can_skip(ext, s)) acc = log_add(acc, prev[s - 2]);
      cur[s] = acc == kNegInf ? kNegInf : acc + lp(t, ext[s]);
    }
  }
  beta[(T - 1) * S + S - 1] = 0.0;
  beta[(T - 1) * S + S - 2] = 0.0;
  for (std::size_t t = T - 1; t-- > 0;) {
    const double* next = &beta[(t + 1) * S];
    double* cur = &beta[t * S];
    for (std::size_t s = 0; s < S; ++s) {
      double acc = next[s] + lp(t + 1, ext[s]);
      if (s + 1 < S) acc = log_add(acc, next[s + 1] + lp(t + 1, ext[s + 1]));
      if (s + 2 < S && can_skip(ext, s + 2)) {
        acc = log_add(acc, next[s + 2] + lp(t + 1, ext[s + 2]));
      }
      cur[s] = acc;
    }
  }

  ForwardBackward out;
  out.log_z = log_add(alpha[(T - 1) * S + S - 1], alpha[(T - 1) * S + S - 2]);
  if (!std::isfinite(out.log_z)) {
    throw NumericalError("ctc: target has zero probability under the lattice");
  }
  out.occupancy = Tensor::matrix(T, K);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t s = 0; s < S; ++s) {
      const double a = alpha[t * S + s];
      const double b = beta[t * S + s];
      if (a == kNegInf || b == kNegInf) continue;
      out.occupancy(t, ext[s]) += std::exp(a + b - out.log_z);
    }
  }
  return out;
}

}  // namespace

LogProbLattice::LogProbLattice(Tensor values) : values_(std::move(values)) {
  if (values_.rank() != 2 || values_.cols() < 2) {
    throw ContractViolation("lattice: expected T x (V+1) with V >= 1, got " +
                            shape_string(values_.dims()));
  }
  for (std::size_t t = 0; t < values_.rows(); ++t) {
    const double lse = kernels::log_sum_exp(values_.row(t));
    if (!(std::abs(lse) <= 1e-8)) {
      throw ContractViolation("lattice: row " + std::to_string(t) +
                              " is not a log-distribution (lse=" +
                              std::to_string(lse) + ")");
    }
  }
}

TokenSeq collapse(std::span<const int> labels) {
  TokenSeq out;
  int prev = -1;
  for (int l : labels) {
    if (l != prev && l != kBlank) out.push_back(l);
    prev = l;
  }
  return out;
}

std::size_t required_frames(std::span<const int> target) {
  std::size_t n = target.size();
  for (std::size_t i = 1; i < target.size(); ++i) {
    if (target[i] == target[i - 1]) ++n;
  }
  return n;
}

CtcLossResult ctc_loss(const LogProbLattice& lattice, std::span<const int> target) {
  ForwardBackward fb = forward_backward(lattice.values(), target);
  CtcLossResult res;
  res.nll = -fb.log_z;
  res.grad_logits = Tensor::matrix(lattice.frames(), lattice.vocab_size() + 1);
  for (std::size_t t = 0; t < lattice.frames(); ++t) {
    for (std::size_t k = 0; k <= lattice.vocab_size(); ++k) {
      res.grad_logits(t, k) = std::exp(lattice(t, k)) - fb.occupancy(t, k);
    }
  }
  res.occupancy = std::move(fb.occupancy);
  return res;
}

Alignment viterbi_align(const LogProbLattice& lattice, std::span<const int> target) {
  const Tensor& lp = lattice.values();
  const std::size_t T = lp.rows();
  check_target(target, lattice.vocab_size());
  const std::size_t need = required_frames(target);
  if (T < need) throw CtcInfeasible(T, need);

  const std::vector<int> ext = extend(target);
  const std::size_t S = ext.size();
  std::vector<double> delta(T * S, kNegInf);
  // back[t*S+s] = predecessor state at t-1.
  std::vector<std::uint32_t> back(T * S, 0);
  delta[0] = lp(0, ext[0]);
  delta[1] = lp(0, ext[1]);
  for (std::size_t t = 1; t < T; ++t) {
    const double* prev = &delta[(t - 1) * S];
    for (std::size_t s = 0; s < S; ++s) {
      // Candidates in preference order: stay, advance one, skip. Only a
      // strictly better score displaces an earlier candidate.
      double best = prev[s];
      std::size_t arg = s;
      if (s >= 1 && prev[s - 1] > best) {
        best = prev[s - 1];
        arg = s - 1;
      }
      if (can_skip(ext, s) && prev[s - 2] > best) {
        best = prev[s - 2];
        arg = s - 2;
      }
      delta[t * S + s] = best == kNegInf ? kNegInf : best + lp(t, ext[s]);
      back[t * S + s] = static_cast<std::uint32_t>(arg);
    }
  }
  std::size_t state = S - 1;
  if (delta[(T - 1) * S + S - 2] > delta[(T - 1) * S + S - 1]) state = S - 2;

  Alignment out;
  out.score = delta[(T - 1) * S + state];
  if (out.score == kNegInf) {
    throw NumericalError("ctc: target has zero probability under the lattice");
  }
  out.labels.resize(T);
  for (std::size_t t = T; t-- > 0;) {
    out.labels[t] = ext[state];
    if (t > 0) state = back[t * S + state];
  }
  return out;
}

GreedyResult greedy_decode(const LogProbLattice& lattice) {
  GreedyResult res;
  const std::size_t T = lattice.frames();
  const std::size_t K = lattice.vocab_size() + 1;
  res.alignment.labels.resize(T);
  res.confidence.resize(T);
  double score = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < K; ++k) {
      if (lattice(t, k) > lattice(t, best)) best = k;
    }
    res.alignment.labels[t] = static_cast<int>(best);
    res.confidence[t] = std::exp(lattice(t, best));
    score += lattice(t, best);
  }
  res.alignment.score = score;
  return res;
}

namespace {

Alignment draw(const LogProbLattice& lattice, const GreedyResult& greedy,
               double threshold, Rng& rng) {
  const std::size_t K = lattice.vocab_size() + 1;
  Alignment a = greedy.alignment;
  double score = 0.0;
  for (std::size_t t = 0; t < a.labels.size(); ++t) {
    if (greedy.confidence[t] < threshold) {
      const double u = uniform01(rng);
      double cum = 0.0;
      std::size_t pick = K - 1;
      for (std::size_t k = 0; k < K; ++k) {
        cum += std::exp(lattice(t, k));
        if (u < cum) {
          pick = k;
          break;
        }
      }
      a.labels[t] = static_cast<int>(pick);
    }
    score += lattice(t, static_cast<std::size_t>(a.labels[t]));
  }
  a.score = score;
  return a;
}

}  // namespace

std::vector<Alignment> esa_sample(const LogProbLattice& lattice, double threshold,
                                  std::size_t count, Rng& rng) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw DomainError("esa_sample: threshold must lie in [0, 1]");
  }
  if (count == 0) throw DomainError("esa_sample: sample count must be positive");
  const GreedyResult greedy = greedy_decode(lattice);
  std::vector<Alignment> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Alignment a = draw(lattice, greedy, threshold, rng);
    if (collapse(a).empty()) a = draw(lattice, greedy, threshold, rng);
    if (collapse(a).empty()) a = greedy.alignment;
    out.push_back(std::move(a));
  }
  return out;
}

SegmentBoundaries segment_boundaries(std::span<const int> labels) {
  SegmentBoundaries b;
  b.frames = labels.size();
  // Last emission frame of every token.
  std::vector<std::size_t> last;
  int prev = -1;
  for (std::size_t t = 0; t < labels.size(); ++t) {
    const int l = labels[t];
    if (l != kBlank) {
      if (l != prev) {
        last.push_back(t);
      } else {
        last.back() = t;
      }
    }
    prev = l;
  }
  if (last.empty()) throw DomainError("segment_boundaries: alignment has no tokens");
  std::size_t start = 0;
  for (std::size_t u = 0; u < last.size(); ++u) {
    const std::size_t end = (u + 1 == last.size()) ? labels.size() : last[u] + 1;
    b.spans.push_back({start, end});
    start = end;
  }
  return b;
}

Var ctc_loss_op(Var log_probs, std::span<const int> target) {
  ForwardBackward fb = forward_backward(log_probs.value(), target);
  return log_probs.tape->push(
      Tensor::scalar(-fb.log_z), {log_probs},
      [log_probs, occ = std::move(fb.occupancy)](Tape& tp, const Tensor& g) {
        Tensor& gl = tp.grad_buffer(log_probs);
        for (std::size_t i = 0; i < gl.size(); ++i) gl[i] -= g[0] * occ[i];
      });
}

}  // namespace unienc::ctc
