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

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "unienc/ctc.hpp"
#include "unienc/data.hpp"
#include "unienc/error.hpp"

namespace unienc::data {
namespace {
namespace fs = std::filesystem;

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() /
          (std::string("unienc_data_") + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }
  void write(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }
  fs::path dir;
};

TEST(VocabTest, BlankFirstAndLookup) {
  const Vocab v({"<blank>", "a", "b", "<unk>"});
  EXPECT_EQ(v.size(), 4u);
  EXPECT_EQ(v.real_tokens(), 3u);
  EXPECT_EQ(v.find("b"), 2);
  EXPECT_EQ(v.unknown_id(), 3);
  EXPECT_FALSE(v.find("zz").has_value());
}

TEST(VocabTest, DuplicateReportsLine) {
  try {
    Vocab({"<blank>", "a", "b", "a"});
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.position(), 4u);
  }
  EXPECT_THROW(Vocab({"a", "<blank>"}), ParseError);
}

TEST(Tokenize, UnknownSymbols) {
  const Vocab with({"<blank>", "a", "b", "<unk>"});
  const Tokenized t = tokenize("a  q b", with);
  EXPECT_EQ(t.ids, (std::vector<int>{1, 3, 2}));
  EXPECT_EQ(t.unknown_count, 1u);
  const Vocab without({"<blank>", "a", "b"});
  const Tokenized u = tokenize("a q b", without);
  EXPECT_EQ(u.ids, (std::vector<int>{1, 2}));
  EXPECT_EQ(u.unknown_count, 1u);
  EXPECT_EQ(detokenize(u.ids, without), "a b");
}

TEST_F(TempDir, FeatureRoundTrip) {
  Tensor f = Tensor::from_rows({{0.5, -1.25}, {3.0, 0.0}, {1e-3f, 7}});
  for (double& v : f.values()) v = static_cast<float>(v);
  write_features(dir / "x.feat", f);
  EXPECT_EQ(read_features(dir / "x.feat"), f);
  const FeatureHeader h = read_feature_header(dir / "x.feat");
  EXPECT_EQ(h.frames, 3u);
  EXPECT_EQ(h.dims, 2u);
}

TEST_F(TempDir, TruncatedFeatureFile) {
  write_features(dir / "x.feat", Tensor::from_rows({{1, 2}, {3, 4}}));
  fs::resize_file(dir / "x.feat", fs::file_size(dir / "x.feat") - 2);
  EXPECT_THROW(read_features(dir / "x.feat"), ParseError);
  write(dir / "y.feat", "NOPE........");
  EXPECT_THROW(read_features(dir / "y.feat"), ParseError);
}

TEST_F(TempDir, ManifestFrameMismatchCitesBoth) {
  write_features(dir / "u1.feat", Tensor::matrix(4, 2));
  write(dir / "manifest.tsv", "u1\tu1.feat\t5\t0.2\ta b\n");
  const Vocab v({"<blank>", "a", "b"});
  try {
    load_manifest(dir / "manifest.tsv", v);
    FAIL();
  } catch (const IntegrityError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("5"), std::string::npos);
    EXPECT_NE(what.find("4"), std::string::npos);
  }
}

TEST_F(TempDir, ManifestFieldCount) {
  write(dir / "manifest.tsv", "u1\tu1.feat\t5\n");
  EXPECT_THROW(load_manifest(dir / "manifest.tsv", Vocab({"<blank>", "a"})), ParseError);
}

TEST_F(TempDir, SynthDatasetRoundTrip) {
  SynthTaskSpec spec;
  spec.seed = 4;
  const SynthDataset ds = synth_generate(spec, 12, "train");
  write_dataset(dir, ds);
  const Vocab v = load_vocab(dir / "vocab.txt");
  EXPECT_EQ(v.tokens(), ds.vocab.tokens());
  std::vector<Utterance> back = load_manifest(dir / "manifest.tsv", v);
  load_gold_alignments(dir / "alignments.tsv", back);
  ASSERT_EQ(back.size(), 12u);
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].id, ds.utterances[i].id);
    EXPECT_EQ(back[i].features, ds.utterances[i].features);
    EXPECT_EQ(back[i].transcript, ds.utterances[i].transcript);
    EXPECT_EQ(back[i].gold_alignment, ds.utterances[i].gold_alignment);
    EXPECT_DOUBLE_EQ(back[i].duration, ds.utterances[i].duration);
  }
}

TEST(Synth, DefaultSpecProperties) {
  const SynthTaskSpec spec;
  EXPECT_EQ(spec.vocab_tokens, 20u);
  EXPECT_EQ(spec.feat_dim, 16u);
  const SynthDataset ds = synth_generate(spec, 50);
  EXPECT_EQ(ds.vocab.real_tokens(), 21u);  // t01..t20 and <unk>
  for (const auto& u : ds.utterances) {
    ASSERT_TRUE(u.gold_alignment.has_value());
    EXPECT_EQ(u.gold_alignment->size(), u.raw_frames());
    EXPECT_EQ(ctc::collapse(*u.gold_alignment), u.transcript);
    EXPECT_GE(u.transcript.size(), spec.min_tokens);
    EXPECT_LE(u.transcript.size(), spec.max_tokens);
    EXPECT_NEAR(u.duration, spec.frame_shift * static_cast<double>(u.raw_frames()), 1e-12);
    EXPECT_EQ(u.features.cols(), 16u);
  }
}

TEST(Synth, SameSeedSameData) {
  SynthTaskSpec spec;
  spec.seed = 9;
  const SynthDataset a = synth_generate(spec, 5);
  const SynthDataset b = synth_generate(spec, 5);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(a.utterances[i].features, b.utterances[i].features);
  const SynthDataset c = synth_generate(spec, 5, "valid");
  EXPECT_EQ(a.token_means, c.token_means);
  EXPECT_NE(a.utterances[0].features, c.utterances[0].features);
}

TEST(Synth, ZeroUtterances) {
  EXPECT_TRUE(synth_generate(SynthTaskSpec{}, 0).utterances.empty());
}

TEST(Synth, InvalidSpec) {
  SynthTaskSpec spec;
  spec.min_frames_per_token = 4;
  spec.max_frames_per_token = 2;
  EXPECT_THROW(synth_generate(spec, 1), ConfigError);
}

}  // namespace
}  // namespace unienc::data
