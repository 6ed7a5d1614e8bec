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

#include "unienc/data.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "unienc/ctc.hpp"
#include "unienc/error.hpp"
#include "unienc/tape.hpp"

namespace unienc::data {
namespace fs = std::filesystem;

Vocab::Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.empty() || tokens_[0] != kBlankSymbol) {
    throw ParseError("vocab: line 1 must be the blank marker " + std::string(kBlankSymbol), 1);
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    const std::string& t = tokens_[i];
    if (t.empty()) throw ParseError("vocab: empty token at line " + std::to_string(i + 1), i + 1);
    if (!index_.emplace(t, static_cast<int>(i)).second) {
      throw ParseError("vocab: duplicate token '" + t + "' at line " + std::to_string(i + 1),
                       i + 1);
    }
    if (t == kUnknownSymbol) unknown_ = static_cast<int>(i);
  }
}

std::optional<int> Vocab::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

Vocab load_vocab(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("vocab: cannot open " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  return Vocab(std::move(tokens));
}

void save_vocab(const fs::path& path, const Vocab& vocab) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("vocab: cannot write " + path.string());
  for (const auto& t : vocab.tokens()) out << t << '\n';
}

Tokenized tokenize(std::string_view text, const Vocab& vocab) {
  Tokenized res;
  std::istringstream is{std::string(text)};
  std::string sym;
  while (is >> sym) {
    if (auto id = vocab.find(sym); id && *id != ctc::kBlank) {
      res.ids.push_back(*id);
    } else {
      ++res.unknown_count;
      if (vocab.unknown_id()) res.ids.push_back(*vocab.unknown_id());
    }
  }
  return res;
}

std::string detokenize(std::span<const int> ids, const Vocab& vocab) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += vocab.token(ids[i]);
  }
  return out;
}

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

std::vector<unsigned char> slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

FeatureHeader parse_header(const std::vector<unsigned char>& bytes, const fs::path& path) {
  if (bytes.size() < 12) throw ParseError(path.string() + ": truncated FEAT header", bytes.size());
  if (std::memcmp(bytes.data(), "FEAT", 4) != 0) {
    throw ParseError(path.string() + ": bad magic, expected FEAT", 0);
  }
  return {get_u32(bytes.data() + 4), get_u32(bytes.data() + 8)};
}

}  // namespace

void write_features(const fs::path& path, const Tensor& features) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write("FEAT", 4);
  put_u32(out, static_cast<std::uint32_t>(features.rows()));
  put_u32(out, static_cast<std::uint32_t>(features.cols()));
  for (double v : features.values()) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    put_u32(out, bits);
  }
}

FeatureHeader read_feature_header(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<unsigned char> head(12);
  in.read(reinterpret_cast<char*>(head.data()), 12);
  head.resize(static_cast<std::size_t>(in.gcount()));
  return parse_header(head, path);
}

Tensor read_features(const fs::path& path) {
  const auto bytes = slurp(path);
  const FeatureHeader h = parse_header(bytes, path);
  const std::size_t n = static_cast<std::size_t>(h.frames) * h.dims;
  if (bytes.size() != 12 + 4 * n) {
    throw ParseError(path.string() + ": payload holds " + std::to_string(bytes.size() - 12) +
                         " bytes, header implies " + std::to_string(4 * n),
                     bytes.size() < 12 + 4 * n ? bytes.size() : 12 + 4 * n);
  }
  std::vector<double> data(n);
  for (std::size_t i = 0; i < n; ++i) {
    data[i] = std::bit_cast<float>(get_u32(bytes.data() + 12 + 4 * i));
  }
  return Tensor({h.frames, h.dims}, std::move(data));
}

std::vector<Utterance> load_manifest(const fs::path& path, const Vocab& vocab) {
  std::ifstream in(path);
  if (!in) throw Error("manifest: cannot open " + path.string());
  const fs::path base = path.parent_path();
  std::vector<Utterance> utts;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
      const std::size_t tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 5) {
      throw ParseError("manifest line " + std::to_string(lineno) + ": expected 5 fields, got " +
                           std::to_string(fields.size()),
                       lineno);
    }
    Utterance u;
    u.id = fields[0];
    std::size_t frames = 0;
    try {
      std::size_t used = 0;
      frames = std::stoul(fields[2], &used);
      if (used != fields[2].size()) throw std::invalid_argument("frames");
      u.duration = std::stod(fields[3], &used);
      if (used != fields[3].size()) throw std::invalid_argument("duration");
    } catch (const std::exception&) {
      throw ParseError("manifest line " + std::to_string(lineno) + ": bad frame count or duration",
                       lineno);
    }
    const fs::path feat = base / fields[1];
    const FeatureHeader h = read_feature_header(feat);
    if (h.frames != frames) {
      throw IntegrityError("manifest line " + std::to_string(lineno) + " (" + u.id +
                           "): manifest says " + std::to_string(frames) +
                           " frames, feature header says " + std::to_string(h.frames));
    }
    u.features = read_features(feat);
    u.transcript = tokenize(fields[4], vocab).ids;
    if (u.transcript.empty()) {
      throw IntegrityError("manifest line " + std::to_string(lineno) + " (" + u.id +
                           "): empty transcript");
    }
    if (!(u.duration > 0.0)) {
      throw IntegrityError("manifest line " + std::to_string(lineno) + " (" + u.id +
                           "): duration must be positive");
    }
    utts.push_back(std::move(u));
  }
  return utts;
}

void write_manifest(const fs::path& path, std::span<const Utterance> utts, const Vocab& vocab,
                    std::string_view feature_dir) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("manifest: cannot write " + path.string());
  for (const auto& u : utts) {
    std::ostringstream dur;
    dur << std::setprecision(6) << u.duration;
    out << u.id << '\t' << feature_dir << '/' << u.id << ".feat\t" << u.raw_frames() << '\t'
        << dur.str() << '\t' << detokenize(u.transcript, vocab) << '\n';
  }
}

void SynthTaskSpec::validate() const {
  if (vocab_tokens < 1) throw ConfigError("synth: vocab_tokens must be >= 1");
  if (feat_dim < 1) throw ConfigError("synth: feat_dim must be >= 1");
  if (min_frames_per_token < 1 || max_frames_per_token < min_frames_per_token) {
    throw ConfigError("synth: frames-per-token range must satisfy 1 <= min <= max");
  }
  if (max_silence < min_silence) throw ConfigError("synth: silence range inverted");
  if (min_tokens < 1 || max_tokens < min_tokens) {
    throw ConfigError("synth: tokens-per-utterance range must satisfy 1 <= min <= max");
  }
  if (!(noise_scale >= 0.0)) throw ConfigError("synth: noise_scale must be >= 0");
  if (!(frame_shift > 0.0)) throw ConfigError("synth: frame_shift must be > 0");
  if (!token_means.empty()) {
    if (token_means.size() != vocab_tokens) {
      throw ConfigError("synth: token_means needs one vector per token");
    }
    for (const auto& m : token_means) {
      if (m.size() != feat_dim) throw ConfigError("synth: token mean has wrong width");
    }
  }
}

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t stream_seed(std::uint64_t seed, std::string_view prefix) {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (char c : prefix) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return splitmix(seed ^ splitmix(h));
}

std::size_t uniform_int(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(uniform01(rng) * static_cast<double>(hi - lo + 1));
}

double normal(Rng& rng) {
  const double u1 = 1.0 - uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace

SynthDataset synth_generate(const SynthTaskSpec& spec, std::size_t num_utts) {
  return synth_generate(spec, num_utts, "utt");
}

SynthDataset synth_generate(const SynthTaskSpec& spec, std::size_t num_utts,
                            std::string_view id_prefix) {
  spec.validate();
  SynthDataset ds;
  std::vector<std::string> tokens{std::string(kBlankSymbol)};
  for (std::size_t i = 1; i <= spec.vocab_tokens; ++i) {
    std::ostringstream name;
    name << 't' << std::setw(2) << std::setfill('0') << i;
    tokens.push_back(name.str());
  }
  tokens.emplace_back(kUnknownSymbol);
  ds.vocab = Vocab(std::move(tokens));

  // Means depend only on the seed so every split shares the same task.
  ds.token_means = spec.token_means;
  if (ds.token_means.empty()) {
    Rng mean_rng(spec.seed);
    for (std::size_t k = 0; k < spec.vocab_tokens; ++k) {
      std::vector<double> m(spec.feat_dim);
      for (double& v : m) v = normal(mean_rng);
      ds.token_means.push_back(std::move(m));
    }
  }

  Rng rng(stream_seed(spec.seed, id_prefix));
  const std::size_t F = spec.feat_dim;
  for (std::size_t n = 0; n < num_utts; ++n) {
    Utterance u;
    std::ostringstream id;
    id << id_prefix << '-' << std::setw(5) << std::setfill('0') << n;
    u.id = id.str();
    const std::size_t count = uniform_int(rng, spec.min_tokens, spec.max_tokens);
    for (std::size_t i = 0; i < count; ++i) {
      u.transcript.push_back(static_cast<int>(uniform_int(rng, 1, spec.vocab_tokens)));
    }
    std::vector<int> gold;
    std::vector<double> feats;
    auto emit = [&](int label, const std::vector<double>* mean) {
      gold.push_back(label);
      for (std::size_t c = 0; c < F; ++c) {
        const double base = mean ? (*mean)[c] : 0.0;
        feats.push_back(static_cast<float>(base + spec.noise_scale * normal(rng)));
      }
    };
    auto silence = [&](std::size_t min_len) {
      const std::size_t len =
          std::max(min_len, uniform_int(rng, spec.min_silence, spec.max_silence));
      for (std::size_t i = 0; i < len; ++i) emit(ctc::kBlank, nullptr);
    };
    silence(0);
    for (std::size_t i = 0; i < count; ++i) {
      const int tok = u.transcript[i];
      if (i > 0) silence(tok == u.transcript[i - 1] ? 1 : 0);
      const std::size_t len =
          uniform_int(rng, spec.min_frames_per_token, spec.max_frames_per_token);
      for (std::size_t f = 0; f < len; ++f) {
        emit(tok, &ds.token_means[static_cast<std::size_t>(tok - 1)]);
      }
    }
    silence(0);
    const std::size_t frames = gold.size();
    u.features = Tensor({frames, F}, std::move(feats));
    u.gold_alignment = std::move(gold);
    u.duration = static_cast<double>(frames) * spec.frame_shift;
    ds.utterances.push_back(std::move(u));
  }
  return ds;
}

void write_dataset(const fs::path& dir, const SynthDataset& dataset) {
  fs::create_directories(dir / "feats");
  save_vocab(dir / "vocab.txt", dataset.vocab);
  write_manifest(dir / "manifest.tsv", dataset.utterances, dataset.vocab, "feats");
  std::ofstream ali(dir / "alignments.tsv", std::ios::binary);
  for (const auto& u : dataset.utterances) {
    write_features(dir / "feats" / (u.id + ".feat"), u.features);
    ali << u.id << '\t';
    if (u.gold_alignment) {
      for (std::size_t t = 0; t < u.gold_alignment->size(); ++t) {
        if (t) ali << ' ';
        ali << (*u.gold_alignment)[t];
      }
    }
    ali << '\n';
  }
}

void load_gold_alignments(const fs::path& path, std::vector<Utterance>& utts) {
  std::ifstream in(path);
  if (!in) throw Error("alignments: cannot open " + path.string());
  std::unordered_map<std::string, std::vector<int>> by_id;
  std::string line;
  while (std::getline(in, line)) {
    const auto tab = line.find('\t');
    if (tab == std::string::npos) continue;
    std::istringstream is(line.substr(tab + 1));
    std::vector<int> labels;
    int l = 0;
    while (is >> l) labels.push_back(l);
    by_id[line.substr(0, tab)] = std::move(labels);
  }
  for (auto& u : utts) {
    auto it = by_id.find(u.id);
    if (it != by_id.end()) u.gold_alignment = it->second;
  }
}

}  // namespace unienc::data
