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
#include <optional>

#include "unienc/ctc.hpp"
#include "unienc/kernels.hpp"
#include "unienc/tape.hpp"

namespace unienc {

struct ModelConfig {
  std::size_t feat_dim = 16;
  std::size_t model_dim = 64;
  std::size_t ffn_dim = 256;
  std::size_t num_heads = 4;
  std::size_t num_blocks = 4;
  std::size_t conv_downsample = 4;
  std::size_t taee_dim = 64;
  std::size_t taee_ffn_dim = 256;
  std::size_t taee_heads = 4;
  // Real tokens; the CTC head has vocab_size + 1 outputs (blank at 0).
  std::size_t vocab_size = 21;
  std::size_t max_frames = 1024;
  double dropout = 0.1;
  // Skip the conv frontend and treat input features as hidden features H
  // (feat_dim must equal model_dim).
  bool precomputed_hidden = false;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// Two-pass outputs: the first `frames` rows belong to the acoustic frames,
// the remaining `tokens` rows to the token-level acoustic embeddings.
struct EncoderOutput {
  Var frame_out;  // [T, d]
  Var token_out;  // [U, d], U == 0 after pass 1
};

// Shared-encoder recognizer: conv frontend, one contextual transformer
// encoder used for both passes, TAE extractor and the two output heads.
// Forward methods are const and record on the caller's tape; passing a
// dropout generator switches dropout on.
class Model {
 public:
  Model(ModelConfig config, std::uint64_t seed);
  // Same architecture, parameters taken from `store` (names and dims checked).
  Model(ModelConfig config, const ParameterStore& store);

  const ModelConfig& config() const { return config_; }
  ParameterStore& parameters() { return store_; }
  const ParameterStore& parameters() const { return store_; }

  // Frames after the frontend for `raw_frames` input frames.
  std::size_t output_frames(std::size_t raw_frames) const;

  Var conv_frontend(Tape& tape, const Tensor& features, Rng* dropout = nullptr) const;
  EncoderOutput encode_pass1(Tape& tape, Var hidden, Rng* dropout = nullptr) const;
  // `mask`, when given, covers all T+U positions (used for ablations).
  EncoderOutput encode_pass2(Tape& tape, Var hidden, Var tae, Rng* dropout = nullptr,
                             const kernels::AttentionMask& mask = {}) const;

  // Masked cross-attention of token queries over their own frame spans.
  // Returns the attention sublayer output before the feed-forward block.
  Var taee_attend(Tape& tape, Var frame_out, const ctc::SegmentBoundaries& bounds) const;
  Var extract_tae(Tape& tape, Var frame_out, const ctc::SegmentBoundaries& bounds,
                  Rng* dropout = nullptr) const;

  // Shared projection to vocab_size + 1, log-softmax.
  Var ctc_head(Tape& tape, Var frame_out) const;
  // Projection to vocab_size (no blank), log-softmax. Column c is token c+1.
  Var ce_head(Tape& tape, Var token_out) const;

  // Empty [0, d] TAE matrix on `tape`.
  Var empty_tae(Tape& tape) const;

  // Ids of the shared CTC projection (tests check sharing through these).
  ParameterStore::Id ctc_weight_id() const { return ctc_w_; }

 private:
  struct LinearIds {
    ParameterStore::Id w, b;
  };
  struct NormIds {
    ParameterStore::Id gain, bias;
  };
  struct BlockIds {
    NormIds ln1, ln2;
    LinearIds q, k, v, o, ff1, ff2;
  };

  void build(std::uint64_t seed);
  LinearIds add_linear(const std::string& name, std::size_t in, std::size_t out,
                       ParamGroup group, Rng& rng);
  NormIds add_norm(const std::string& name, std::size_t dim, ParamGroup group);

  Var apply(Tape& tape, const LinearIds& l, Var x) const;
  Var apply(Tape& tape, const NormIds& n, Var x) const;
  Var encode(Tape& tape, Var input, Rng* dropout, const kernels::AttentionMask& mask) const;

  ModelConfig config_;
  ParameterStore store_;
  Tensor positions_;  // [max_frames, model_dim]

  std::vector<LinearIds> frontend_;
  ParameterStore::Id type_frame_ = 0, type_token_ = 0;
  std::vector<BlockIds> blocks_;
  NormIds final_norm_{};
  LinearIds taee_q_{}, taee_k_{}, taee_v_{}, taee_o_{}, taee_ff1_{}, taee_ff2_{}, taee_out_{};
  NormIds taee_norm_{}, taee_out_norm_{};
  ParameterStore::Id ctc_w_ = 0, ctc_b_ = 0;
  LinearIds ce_{};
};

// Mask letting TAE row u read only the frames of span u.
kernels::AttentionMask span_mask(const ctc::SegmentBoundaries& bounds);

}  // namespace unienc
