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
#include <random>

#include "unienc/checkpoint.hpp"
#include "unienc/error.hpp"
#include "unienc/training.hpp"

namespace unienc {
namespace {
namespace fs = std::filesystem;

ModelConfig small_config() {
  ModelConfig c;
  c.feat_dim = 3;
  c.model_dim = 8;
  c.ffn_dim = 12;
  c.num_heads = 2;
  c.num_blocks = 1;
  c.conv_downsample = 2;
  c.taee_dim = 4;
  c.taee_ffn_dim = 8;
  c.taee_heads = 1;
  c.vocab_size = 3;
  c.max_frames = 40;
  c.dropout = 0.05;
  return c;
}

std::vector<unsigned char> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

class CheckpointFiles : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() /
          ("unienc_ckpt_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
           ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }
  fs::path dir;
};

TEST_F(CheckpointFiles, SaveLoadSaveIsByteIdentical) {
  const Model m(small_config(), 5);
  save_checkpoint(dir / "a.ckpt", m, nullptr, 12, 3);
  const Checkpoint c = load_checkpoint(dir / "a.ckpt");
  EXPECT_EQ(c.step, 12u);
  EXPECT_EQ(c.epoch, 3u);
  EXPECT_EQ(c.model_config, small_config());
  const Model back = model_from_checkpoint(c);
  save_checkpoint(dir / "b.ckpt", back, nullptr, 12, 3);
  EXPECT_EQ(read_bytes(dir / "a.ckpt"), read_bytes(dir / "b.ckpt"));
}

TEST_F(CheckpointFiles, ForwardIsBitExactAfterReload) {
  const Model m(small_config(), 6);
  save_checkpoint(dir / "m.ckpt", m);
  const Model back = model_from_checkpoint(load_checkpoint(dir / "m.ckpt"));
  Tensor x = Tensor::matrix(9, 3);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::sin(0.7 * static_cast<double>(i));
  Tape t1(false), t2(false);
  const Tensor a = m.ctc_head(t1, m.encode_pass1(t1, m.conv_frontend(t1, x)).frame_out).value();
  const Tensor b = back.ctc_head(t2, back.encode_pass1(t2, back.conv_frontend(t2, x)).frame_out).value();
  EXPECT_EQ(a, b);
}

TEST_F(CheckpointFiles, OptimizerStateRoundTrips) {
  Model m(small_config(), 7);
  Adam adam(m.parameters(), 0.9, 0.98, 1e-9);
  std::vector<Tensor> grads;
  for (const auto& p : m.parameters().all()) {
    Tensor g = p.value;
    for (double& v : g.values()) v = 0.5 - v;
    grads.push_back(g);
  }
  adam.step(m.parameters(), grads, 1e-3, 2e-3);
  save_checkpoint(dir / "o.ckpt", m, &adam.state(), 1, 1);
  const Checkpoint c = load_checkpoint(dir / "o.ckpt");
  ASSERT_TRUE(c.optimizer.has_value());
  EXPECT_EQ(c.optimizer->step, 1u);
  ASSERT_EQ(c.optimizer->first_moment.size(), adam.state().first_moment.size());
  for (std::size_t i = 0; i < c.optimizer->first_moment.size(); ++i) {
    EXPECT_EQ(c.optimizer->first_moment[i], adam.state().first_moment[i]);
    EXPECT_EQ(c.optimizer->second_moment[i], adam.state().second_moment[i]);
  }
}

TEST(CheckpointBytes, Layout) {
  const Model m(small_config(), 1);
  const auto bytes = serialize_checkpoint(m, nullptr, 0, 0);
  ASSERT_GE(bytes.size(), 16u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "UECN");
  EXPECT_EQ(bytes[4], kCheckpointVersion);
  EXPECT_EQ(bytes[5], 0);
}

TEST(CheckpointBytes, CorruptionDetected) {
  const Model m(small_config(), 1);
  auto bytes = serialize_checkpoint(m, nullptr, 0, 0);
  bytes[bytes.size() / 2] ^= 0x01;
  EXPECT_THROW(parse_checkpoint(bytes), ParseError);
}

TEST(CheckpointBytes, BadMagicAndTruncation) {
  const Model m(small_config(), 1);
  auto bytes = serialize_checkpoint(m, nullptr, 0, 0);
  auto wrong = bytes;
  wrong[0] = 'X';
  try {
    parse_checkpoint(wrong);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.position(), 0u);
  }
  bytes.resize(bytes.size() - 9);
  EXPECT_THROW(parse_checkpoint(bytes), ParseError);
  EXPECT_THROW(parse_checkpoint({'U', 'E'}), ParseError);
}

TEST(CheckpointBytes, DimensionMismatchNamesTensor) {
  const Model m(small_config(), 1);
  const Checkpoint c = parse_checkpoint(serialize_checkpoint(m, nullptr, 0, 0));
  ModelConfig other = small_config();
  other.taee_ffn_dim = 16;
  try {
    model_from_checkpoint(c, &other);
    FAIL();
  } catch (const DimensionMismatch& e) {
    EXPECT_EQ(e.tensor(), "taee.ffn.in.weight");
  }
}

}  // namespace
}  // namespace unienc
