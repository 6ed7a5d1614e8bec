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
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "unienc/tensor.hpp"

namespace unienc::data {

inline constexpr std::string_view kBlankSymbol = "<blank>";
inline constexpr std::string_view kUnknownSymbol = "<unk>";

// Token inventory. Id 0 is the blank; `<unk>`, when present, is the unknown.
class Vocab {
 public:
  Vocab() = default;
  // Throws ParseError (1-based line) on a missing blank or duplicates.
  explicit Vocab(std::vector<std::string> tokens);

  // Entries including the blank.
  std::size_t size() const { return tokens_.size(); }
  // Real tokens (blank excluded); the model's vocab_size.
  std::size_t real_tokens() const { return tokens_.empty() ? 0 : tokens_.size() - 1; }

  std::optional<int> find(std::string_view token) const;
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::optional<int> unknown_id() const { return unknown_; }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
  std::optional<int> unknown_;
};

Vocab load_vocab(const std::filesystem::path& path);
void save_vocab(const std::filesystem::path& path, const Vocab& vocab);

struct Tokenized {
  std::vector<int> ids;
  // Out-of-vocabulary symbols. They map to `<unk>` when the vocab has one
  // and are dropped otherwise.
  std::size_t unknown_count = 0;
};

// Whitespace-separated symbols.
Tokenized tokenize(std::string_view text, const Vocab& vocab);
std::string detokenize(std::span<const int> ids, const Vocab& vocab);

struct Utterance {
  std::string id;
  Tensor features;  // [raw_frames, feat_dim]
  std::vector<int> transcript;
  std::optional<std::vector<int>> gold_alignment;
  double duration = 0.0;  // seconds

  std::size_t raw_frames() const { return features.rows(); }
};

// FEAT files: "FEAT", u32 frames, u32 dims, frames*dims float32 LE row-major.
struct FeatureHeader {
  std::uint32_t frames = 0;
  std::uint32_t dims = 0;
};
void write_features(const std::filesystem::path& path, const Tensor& features);
Tensor read_features(const std::filesystem::path& path);
FeatureHeader read_feature_header(const std::filesystem::path& path);

// Tab-separated records: id, feature path (relative to the manifest),
// frame count, duration seconds, transcript.
std::vector<Utterance> load_manifest(const std::filesystem::path& path, const Vocab& vocab);
void write_manifest(const std::filesystem::path& path, std::span<const Utterance> utts,
                    const Vocab& vocab, std::string_view feature_dir = "feats");

struct SynthTaskSpec {
  std::size_t vocab_tokens = 20;
  std::size_t feat_dim = 16;
  std::size_t min_frames_per_token = 2;
  std::size_t max_frames_per_token = 5;
  std::size_t min_silence = 0;
  std::size_t max_silence = 3;
  std::size_t min_tokens = 3;
  std::size_t max_tokens = 8;
  double noise_scale = 0.3;
  double frame_shift = 0.04;  // seconds per raw frame
  std::uint64_t seed = 1;
  // Per-token mean vectors; drawn from N(0, 1) per dimension when empty.
  std::vector<std::vector<double>> token_means;

  void validate() const;
};

struct SynthDataset {
  Vocab vocab;
  std::vector<Utterance> utterances;
  std::vector<std::vector<double>> token_means;
};

// Random token strings rendered as noisy mean-vector runs with silence in
// between. Identical neighbours always get at least one silence frame, so
// the gold alignment collapses to the transcript. Features are rounded to
// float32 so that writing and re-reading is lossless.
SynthDataset synth_generate(const SynthTaskSpec& spec, std::size_t num_utts);
// Same generator with an id prefix and an independent stream.
SynthDataset synth_generate(const SynthTaskSpec& spec, std::size_t num_utts,
                            std::string_view id_prefix);

// vocab.txt, manifest.tsv, feats/<id>.feat and alignments.tsv under `dir`.
void write_dataset(const std::filesystem::path& dir, const SynthDataset& dataset);
// Reads alignments.tsv written above into the matching utterances.
void load_gold_alignments(const std::filesystem::path& path, std::vector<Utterance>& utts);

}  // namespace unienc::data
