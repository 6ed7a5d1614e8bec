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

#include "unienc/eval.hpp"

#include <algorithm>
#include <chrono>
#include <limits>
#include <sstream>

#include "unienc/error.hpp"

namespace unienc::eval {

std::string ScoreReport::to_text() const {
  std::ostringstream os;
  os << "wer " << wer << '\n'
     << "substitutions " << substitutions << '\n'
     << "deletions " << deletions << '\n'
     << "insertions " << insertions << '\n'
     << "reference_tokens " << reference_length << '\n'
     << "utterances " << per_utterance.size() << '\n';
  return os.str();
}

std::string ScoreReport::to_tsv() const {
  std::ostringstream os;
  os << "id\tsub\tdel\tins\tref\n";
  for (const auto& u : per_utterance) {
    os << u.id << '\t' << u.counts.substitutions << '\t' << u.counts.deletions << '\t'
       << u.counts.insertions << '\t' << u.counts.reference_length << '\n';
  }
  return os.str();
}

namespace {

template <typename Map, typename Strip>
ScoreReport score(const Map& refs, const Map& hyps, Strip strip) {
  std::vector<std::string> missing;
  for (const auto& [id, _] : refs) {
    if (!hyps.count(id)) missing.push_back("hyp missing " + id);
  }
  for (const auto& [id, _] : hyps) {
    if (!refs.count(id)) missing.push_back("ref missing " + id);
  }
  if (!missing.empty()) {
    std::string msg = "wer: utterance ids differ:";
    for (const auto& m : missing) msg += " [" + m + "]";
    throw ContractViolation(msg);
  }
  ScoreReport rep;
  for (const auto& [id, ref_raw] : refs) {
    const auto ref = strip(ref_raw);
    const auto hyp = strip(hyps.at(id));
    using T = typename decltype(ref)::value_type;
    const EditCounts c = edit_counts<T>(ref, hyp);
    rep.substitutions += c.substitutions;
    rep.deletions += c.deletions;
    rep.insertions += c.insertions;
    rep.reference_length += c.reference_length;
    rep.per_utterance.push_back({id, c});
  }
  const std::size_t errors = rep.substitutions + rep.deletions + rep.insertions;
  if (rep.reference_length > 0) {
    rep.wer = static_cast<double>(errors) / static_cast<double>(rep.reference_length);
  } else {
    rep.wer = errors == 0 ? 0.0 : std::numeric_limits<double>::infinity();
  }
  return rep;
}

}  // namespace

ScoreReport wer(const Transcripts& refs, const Transcripts& hyps, const std::string& unknown) {
  return score(refs, hyps, [&](const std::vector<std::string>& seq) {
    std::vector<std::string> out;
    for (const auto& t : seq) {
      if (t != unknown) out.push_back(t);
    }
    return out;
  });
}

ScoreReport wer(const std::map<std::string, std::vector<int>>& refs,
                const std::map<std::string, std::vector<int>>& hyps, int unknown_id) {
  return score(refs, hyps, [&](const std::vector<int>& seq) {
    std::vector<int> out;
    for (int t : seq) {
      if (unknown_id < 0 || t != unknown_id) out.push_back(t);
    }
    return out;
  });
}

RtfReport rtf(const std::function<void(const data::Utterance&)>& decode_fn,
              std::span<const data::Utterance> utts, std::size_t repeats) {
  RtfReport rep;
  for (const auto& u : utts) rep.audio_seconds += u.duration;
  if (!(rep.audio_seconds > 0.0)) throw DomainError("rtf: dataset has no audio duration");
  if (repeats == 0) repeats = 1;
  std::vector<double> walls;
  for (std::size_t r = 0; r < repeats; ++r) {
    const auto start = std::chrono::steady_clock::now();
    for (const auto& u : utts) decode_fn(u);
    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - start;
    walls.push_back(dt.count());
  }
  std::sort(walls.begin(), walls.end());
  rep.wall_seconds = walls[walls.size() / 2];
  rep.rtf = rep.wall_seconds / rep.audio_seconds;
  return rep;
}

}  // namespace unienc::eval
