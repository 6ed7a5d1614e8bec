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

#include <algorithm>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "unienc/data.hpp"

namespace unienc::eval {

struct EditCounts {
  std::size_t substitutions = 0;
  std::size_t deletions = 0;
  std::size_t insertions = 0;
  std::size_t reference_length = 0;

  std::size_t errors() const { return substitutions + deletions + insertions; }
};

// Unit-cost Levenshtein alignment. The backtrace prefers substitution (or
// match), then insertion, then deletion; this only affects the breakdown.
template <typename T>
EditCounts edit_counts(std::span<const T> ref, std::span<const T> hyp) {
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<std::size_t> cost((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return cost[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t diag = at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      at(i, j) = std::min({diag, at(i, j - 1) + 1, at(i - 1, j) + 1});
    }
  }
  EditCounts c;
  c.reference_length = n;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const bool same = ref[i - 1] == hyp[j - 1];
      if (at(i, j) == at(i - 1, j - 1) + (same ? 0 : 1)) {
        if (!same) ++c.substitutions;
        --i;
        --j;
        continue;
      }
    }
    if (j > 0 && at(i, j) == at(i, j - 1) + 1) {
      ++c.insertions;
      --j;
    } else {
      ++c.deletions;
      --i;
    }
  }
  return c;
}

struct UtteranceScore {
  std::string id;
  EditCounts counts;
};

struct ScoreReport {
  std::size_t substitutions = 0;
  std::size_t deletions = 0;
  std::size_t insertions = 0;
  std::size_t reference_length = 0;
  double wer = 0.0;  // (S + D + I) / N over the corpus
  std::vector<UtteranceScore> per_utterance;

  std::string to_text() const;
  std::string to_tsv() const;
};

using Transcripts = std::map<std::string, std::vector<std::string>>;

// Corpus WER. Tokens equal to `unknown` are removed from both sides first.
// Throws ContractViolation listing ids present on one side only.
ScoreReport wer(const Transcripts& refs, const Transcripts& hyps,
                const std::string& unknown = std::string(data::kUnknownSymbol));

// Convenience overload over token ids; `unknown_id` < 0 disables stripping.
ScoreReport wer(const std::map<std::string, std::vector<int>>& refs,
                const std::map<std::string, std::vector<int>>& hyps, int unknown_id);

struct RtfReport {
  double wall_seconds = 0.0;
  double audio_seconds = 0.0;
  double rtf = 0.0;
};

// Times `decode_fn` over the whole set `repeats` times and keeps the median
// total wall clock. Throws DomainError when the audio duration is zero.
RtfReport rtf(const std::function<void(const data::Utterance&)>& decode_fn,
              std::span<const data::Utterance> utts, std::size_t repeats = 3);

}  // namespace unienc::eval
