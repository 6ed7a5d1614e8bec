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

#include <cmath>
#include <random>

#include "unienc/decoding.hpp"
#include "unienc/error.hpp"

namespace unienc {
namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.feat_dim = 4;
  c.model_dim = 8;
  c.ffn_dim = 16;
  c.num_heads = 2;
  c.num_blocks = 2;
  c.conv_downsample = 1;
  c.taee_dim = 8;
  c.taee_ffn_dim = 16;
  c.taee_heads = 2;
  c.vocab_size = 5;
  c.max_frames = 64;
  c.dropout = 0.0;
  return c;
}

Tensor random_features(std::size_t frames, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor t = Tensor::matrix(frames, 4);
  for (double& v : t.values()) v = u(rng);
  return t;
}

// Sharpen the CTC head so the untrained model emits tokens.
Model emitting_model(std::uint64_t seed) {
  Model m(small_config(), seed);
  for (auto& p : m.parameters().all()) {
    if (p.name == "ctc_head.weight") {
      for (double& v : p.value.values()) v *= 6.0;
    }
    if (p.name == "ctc_head.bias") p.value[0] = -3.0;
  }
  return m;
}

TEST(Schedule, ParseAndCount) {
  const DecodeSchedule s = DecodeSchedule::parse("25,2", 0.9);
  EXPECT_EQ(s.samples, (std::vector<std::size_t>{25, 2}));
  EXPECT_EQ(s.thresholds, (std::vector<double>{0.9, 0.9}));
  EXPECT_EQ(s.total_branches(), 50u);
  EXPECT_EQ(s.to_string(), "25,2");
  EXPECT_TRUE(s.samples_randomly());
  EXPECT_FALSE(DecodeSchedule::parse("3,2", 0.0).samples_randomly());
}

TEST(Schedule, DefaultsAreTwentyFiveByTwo) {
  const DecodeSchedule s;
  EXPECT_EQ(s.samples, (std::vector<std::size_t>{25, 2}));
  EXPECT_EQ(s.thresholds, (std::vector<double>{0.9, 0.9}));
}

TEST(Schedule, ParseErrors) {
  for (const char* bad : {"", "0", "2,,3", "a", "3,-1", "2.5"}) {
    EXPECT_THROW(DecodeSchedule::parse(bad, 0.9), ConfigError) << bad;
  }
  EXPECT_THROW(DecodeSchedule::parse("2", 1.5), ConfigError);
}

TEST(Rank, MeanLogProb) {
  Hypothesis h;
  h.token_log_probs = {0.0, 0.0};
  EXPECT_EQ(rank(h), 0.0);
  h.token_log_probs = {-std::log(5.0), -std::log(5.0), -std::log(5.0)};
  EXPECT_NEAR(rank(h), -std::log(5.0), 1e-15);
  EXPECT_EQ(rank(Hypothesis{}), -std::numeric_limits<double>::infinity());
}

class Decode : public ::testing::Test {
 protected:
  Model model = emitting_model(3);
  Tensor features = random_features(16, 11);
};

TEST_F(Decode, BranchCountIsProductOfSchedule) {
  DecodeOptions opts;
  opts.seed = 5;
  const DecodeResult r = decode_utterance(model, features, DecodeSchedule::parse("3,2", 0.9), opts);
  EXPECT_EQ(r.hypotheses.size(), 6u);
  EXPECT_EQ(r.pass2_forwards, 3u + 6u);
  const DecodeResult big = decode_utterance(model, features, DecodeSchedule{}, opts);
  EXPECT_EQ(big.hypotheses.size(), 50u);
}

TEST_F(Decode, SortedAndBestIsTop) {
  DecodeOptions opts;
  opts.seed = 9;
  const DecodeResult r = decode_utterance(model, features, DecodeSchedule::parse("4,2", 1.0), opts);
  for (std::size_t i = 1; i < r.hypotheses.size(); ++i) {
    EXPECT_GE(r.hypotheses[i - 1].score, r.hypotheses[i].score);
  }
  if (!r.fell_back) EXPECT_EQ(r.best.tokens, r.hypotheses.front().tokens);
  for (const auto& h : r.hypotheses) {
    EXPECT_EQ(h.trace.size(), 2u);
    EXPECT_EQ(h.tokens.size(), h.token_log_probs.size());
  }
}

TEST_F(Decode, FixedSeedIsBitReproducible) {
  DecodeOptions opts;
  opts.seed = 17;
  const auto schedule = DecodeSchedule::parse("3,2", 0.9);
  const DecodeResult a = decode_utterance(model, features, schedule, opts);
  const DecodeResult b = decode_utterance(model, features, schedule, opts);
  ASSERT_EQ(a.hypotheses.size(), b.hypotheses.size());
  for (std::size_t i = 0; i < a.hypotheses.size(); ++i) {
    EXPECT_EQ(a.hypotheses[i].tokens, b.hypotheses[i].tokens);
    EXPECT_EQ(a.hypotheses[i].score, b.hypotheses[i].score);
    EXPECT_EQ(a.hypotheses[i].trace, b.hypotheses[i].trace);
  }
}

TEST_F(Decode, ThreadedMatchesSequential) {
  DecodeOptions seq, par;
  seq.seed = par.seed = 23;
  par.jobs = 4;
  const auto schedule = DecodeSchedule::parse("5,3", 1.0);
  const DecodeResult a = decode_utterance(model, features, schedule, seq);
  const DecodeResult b = decode_utterance(model, features, schedule, par);
  ASSERT_EQ(a.hypotheses.size(), b.hypotheses.size());
  for (std::size_t i = 0; i < a.hypotheses.size(); ++i) {
    EXPECT_EQ(a.hypotheses[i].tokens, b.hypotheses[i].tokens);
    EXPECT_EQ(a.hypotheses[i].score, b.hypotheses[i].score);
  }
}

TEST_F(Decode, GreedyScheduleIsDeterministicAcrossSeeds) {
  DecodeOptions a, b;
  a.seed = 1;
  b.seed = 2;
  const auto schedule = DecodeSchedule::parse("1", 0.0);
  const DecodeResult x = decode_utterance(model, features, schedule, a);
  const DecodeResult y = decode_utterance(model, features, schedule, b);
  ASSERT_EQ(x.hypotheses.size(), 1u);
  EXPECT_EQ(x.hypotheses[0].tokens, y.hypotheses[0].tokens);
  EXPECT_EQ(x.hypotheses[0].score, y.hypotheses[0].score);
}

TEST_F(Decode, ScoreScalingKeepsSelection) {
  DecodeOptions a, b;
  a.seed = b.seed = 4;
  b.ranker = [](const Hypothesis& h) { return 3.0 * rank(h); };
  const auto schedule = DecodeSchedule::parse("4,2", 1.0);
  const DecodeResult x = decode_utterance(model, features, schedule, a);
  const DecodeResult y = decode_utterance(model, features, schedule, b);
  EXPECT_EQ(x.best.tokens, y.best.tokens);
  EXPECT_EQ(x.hypotheses.front().trace, y.hypotheses.front().trace);
}

TEST_F(Decode, IterationsMayChangeTokenCount) {
  DecodeOptions opts;
  opts.seed = 1;
  const DecodeResult r = decode_utterance(model, features, DecodeSchedule::parse("1,1,1", 0.0), opts);
  EXPECT_EQ(r.hypotheses.size(), 1u);
  EXPECT_EQ(r.pass2_forwards, 3u);
}

TEST(DecodeFallback, AllBlankLatticeUsesGreedy) {
  Model m(small_config(), 1);
  for (auto& p : m.parameters().all()) {
    if (p.name == "ctc_head.weight") p.value.fill(0.0);
    if (p.name == "ctc_head.bias") {
      p.value.fill(0.0);
      p.value[0] = 50.0;
    }
  }
  DecodeOptions opts;
  opts.seed = 1;
  const DecodeResult r = decode_utterance(m, random_features(8, 1), DecodeSchedule::parse("2,2", 0.9), opts);
  EXPECT_EQ(r.hypotheses.size(), 4u);
  EXPECT_TRUE(r.fell_back);
  EXPECT_TRUE(r.best.tokens.empty());
}

TEST(GreedyCtc, MatchesCollapsedArgmax) {
  const Model m = emitting_model(6);
  const Tensor x = random_features(12, 2);
  const Hypothesis h = decode_greedy_ctc(m, x);
  Tape tape(false);
  const Tensor lp = m.ctc_head(tape, m.encode_pass1(tape, m.conv_frontend(tape, x)).frame_out).value();
  const auto g = ctc::greedy_decode(ctc::LogProbLattice(lp));
  EXPECT_EQ(h.tokens, ctc::collapse(g.alignment));
  EXPECT_EQ(decode_greedy_ctc(m, x).tokens, h.tokens);
}

}  // namespace
}  // namespace unienc
