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

#include "unienc/decoding.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <mutex>
#include <thread>

#include "unienc/error.hpp"

namespace unienc {

DecodeSchedule DecodeSchedule::parse(std::string_view spec, double threshold) {
  DecodeSchedule s;
  s.samples.clear();
  std::string item;
  std::istringstream is{std::string(spec)};
  while (std::getline(is, item, ',')) {
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    while (used < item.size() && item[used] == ' ') ++used;
    if (item.empty() || used != item.size() || v < 1) {
      throw ConfigError("schedule: '" + std::string(spec) +
                        "' must be a comma-separated list of positive integers");
    }
    s.samples.push_back(static_cast<std::size_t>(v));
  }
  s.thresholds.assign(s.samples.size(), threshold);
  s.validate();
  return s;
}

std::size_t DecodeSchedule::total_branches() const {
  std::size_t n = 1;
  for (std::size_t s : samples) n *= s;
  return n;
}

bool DecodeSchedule::samples_randomly() const {
  for (double t : thresholds) {
    if (t > 0.0) return true;
  }
  return false;
}

void DecodeSchedule::validate() const {
  if (samples.empty()) throw ConfigError("schedule: needs at least one iteration");
  if (thresholds.size() != samples.size()) {
    throw ConfigError("schedule: one threshold per iteration required");
  }
  for (std::size_t s : samples) {
    if (s < 1) throw ConfigError("schedule: sample counts must be >= 1");
  }
  for (double t : thresholds) {
    if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("schedule: thresholds must lie in [0, 1]");
  }
}

std::string DecodeSchedule::to_string() const {
  std::string out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(samples[i]);
  }
  return out;
}

double rank(const Hypothesis& hyp) {
  if (hyp.token_log_probs.empty()) return -std::numeric_limits<double>::infinity();
  double s = 0.0;
  for (double lp : hyp.token_log_probs) s += lp;
  return s / static_cast<double>(hyp.token_log_probs.size());
}

namespace {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Sampler seed of a branch, a function of its position in the tree only.
std::uint64_t branch_seed(std::uint64_t seed, const std::vector<std::size_t>& trace) {
  std::uint64_t h = mix(seed);
  for (std::size_t i : trace) h = mix(h ^ (static_cast<std::uint64_t>(i) + 1));
  return mix(h ^ trace.size());
}

struct Branch {
  std::vector<std::size_t> trace;
  Tensor frame_out;  // frames the next TAE is pooled from
  Tensor lattice;    // CTC log-probs over frame_out
  Tensor token_out;
};

template <typename Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> workers;
  std::exception_ptr error;
  std::mutex error_mu;
  for (std::size_t w = 0; w < std::min(jobs, n); ++w) {
    workers.emplace_back([&] {
      for (std::size_t i; (i = next++) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace

DecodeResult decode_utterance(const Model& model, const Tensor& features,
                              const DecodeSchedule& schedule, const DecodeOptions& options) {
  schedule.validate();
  Tensor hidden;
  std::vector<Branch> level(1);
  {
    Tape tape(false);
    Var h = model.conv_frontend(tape, features);
    EncoderOutput p1 = model.encode_pass1(tape, h);
    hidden = h.value();
    level[0].frame_out = p1.frame_out.value();
    level[0].lattice = model.ctc_head(tape, p1.frame_out).value();
  }

  DecodeResult result;
  for (std::size_t n = 0; n < schedule.iterations(); ++n) {
    const std::size_t fan = schedule.samples[n];
    const bool last = n + 1 == schedule.iterations();
    std::vector<Branch> next(level.size() * fan);
    // Sampling per parent is sequential within that parent's own stream.
    std::vector<std::vector<ctc::Alignment>> drawn(level.size());
    for (std::size_t b = 0; b < level.size(); ++b) {
      Rng rng(branch_seed(options.seed, level[b].trace));
      drawn[b] = ctc::esa_sample(ctc::LogProbLattice(level[b].lattice),
                                 schedule.thresholds[n], fan, rng);
    }
    parallel_for(next.size(), options.jobs, [&](std::size_t i) {
      const Branch& parent = level[i / fan];
      const ctc::Alignment& ali = drawn[i / fan][i % fan];
      Branch& child = next[i];
      child.trace = parent.trace;
      child.trace.push_back(i % fan);
      Tape tape(false);
      Var h = tape.constant(hidden);
      Var tae = model.empty_tae(tape);
      if (!ctc::collapse(ali).empty()) {
        tae = model.extract_tae(tape, tape.constant(parent.frame_out),
                                ctc::segment_boundaries(ali));
      }
      EncoderOutput out = model.encode_pass2(tape, h, tae);
      child.token_out = out.token_out.value();
      if (!last) {
        child.frame_out = out.frame_out.value();
        child.lattice = model.ctc_head(tape, out.frame_out).value();
      }
    });
    result.pass2_forwards += next.size();
    level = std::move(next);
  }

  result.hypotheses.resize(level.size());
  for (std::size_t i = 0; i < level.size(); ++i) {
    Hypothesis& hyp = result.hypotheses[i];
    hyp.trace = level[i].trace;
    if (level[i].token_out.rows() > 0) {
      Tape tape(false);
      const Tensor lp = model.ce_head(tape, tape.constant(level[i].token_out)).value();
      for (std::size_t u = 0; u < lp.rows(); ++u) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < lp.cols(); ++c) {
          if (lp(u, c) > lp(u, best)) best = c;
        }
        hyp.tokens.push_back(static_cast<int>(best) + 1);
        hyp.token_log_probs.push_back(lp(u, best));
      }
    }
    hyp.score = options.ranker(hyp);
  }
  std::stable_sort(result.hypotheses.begin(), result.hypotheses.end(),
                   [](const Hypothesis& a, const Hypothesis& b) { return a.score > b.score; });

  const bool all_empty = std::all_of(result.hypotheses.begin(), result.hypotheses.end(),
                                     [](const Hypothesis& h) { return h.tokens.empty(); });
  if (all_empty) {
    result.fell_back = true;
    result.best = decode_greedy_ctc(model, features);
  } else {
    result.best = result.hypotheses.front();
  }
  return result;
}

Hypothesis decode_greedy_ctc(const Model& model, const Tensor& features) {
  Tape tape(false);
  Var h = model.conv_frontend(tape, features);
  EncoderOutput p1 = model.encode_pass1(tape, h);
  const ctc::LogProbLattice lattice(model.ctc_head(tape, p1.frame_out).value());
  const ctc::GreedyResult greedy = ctc::greedy_decode(lattice);
  Hypothesis hyp;
  hyp.tokens = ctc::collapse(greedy.alignment);
  hyp.score = greedy.alignment.score;
  return hyp;
}

}  // namespace unienc
