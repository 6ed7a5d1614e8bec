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

#include "unienc/model.hpp"

#include <cmath>

#include "unienc/error.hpp"

namespace unienc {

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("model config: " + what); };
  if (model_dim == 0 || num_heads == 0 || model_dim % num_heads != 0) {
    fail("model_dim must be a positive multiple of num_heads");
  }
  if (taee_dim == 0 || taee_heads == 0 || taee_dim % taee_heads != 0) {
    fail("taee_dim must be a positive multiple of taee_heads");
  }
  if (conv_downsample < 1) fail("conv_downsample must be >= 1");
  if (vocab_size < 1) fail("vocab_size must be >= 1 (blank + one token)");
  if (feat_dim == 0 || ffn_dim == 0 || taee_ffn_dim == 0) fail("dims must be positive");
  if (max_frames == 0) fail("max_frames must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
  if (precomputed_hidden && feat_dim != model_dim) {
    fail("precomputed_hidden requires feat_dim == model_dim");
  }
}

kernels::AttentionMask span_mask(const ctc::SegmentBoundaries& bounds) {
  kernels::AttentionMask mask;
  mask.queries = bounds.tokens();
  mask.keys = bounds.frames;
  mask.allowed.assign(mask.queries * mask.keys, 0);
  for (std::size_t u = 0; u < bounds.tokens(); ++u) {
    for (std::size_t t = bounds.spans[u].start; t < bounds.spans[u].end; ++t) {
      mask.allowed[u * mask.keys + t] = 1;
    }
  }
  return mask;
}

namespace {

// (first stride, second stride) with product `factor`.
std::pair<std::size_t, std::size_t> split_stride(std::size_t factor) {
  if (factor == 1) return {1, 1};
  std::size_t first = 2;
  while (factor % first != 0) ++first;
  return {first, factor / first};
}

}  // namespace

Model::Model(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  build(seed);
}

Model::Model(ModelConfig config, const ParameterStore& store) : config_(std::move(config)) {
  config_.validate();
  build(0);
  for (auto& p : store_.all()) {
    const auto id = store.find(p.name);
    if (!id) throw DimensionMismatch(p.name, "missing from parameter source");
    const Tensor& src = store[*id].value;
    if (src.dims() != p.value.dims()) {
      throw DimensionMismatch(p.name, "expected " + shape_string(p.value.dims()) +
                                          ", found " + shape_string(src.dims()));
    }
    p.value = src;
  }
}

Model::LinearIds Model::add_linear(const std::string& name, std::size_t in,
                                   std::size_t out, ParamGroup group, Rng& rng) {
  Tensor w = Tensor::matrix(in, out);
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  for (double& v : w.values()) v = (2.0 * uniform01(rng) - 1.0) * bound;
  LinearIds ids;
  ids.w = store_.add(name + ".weight", std::move(w), group);
  ids.b = store_.add(name + ".bias", Tensor({out}), group);
  return ids;
}

Model::NormIds Model::add_norm(const std::string& name, std::size_t dim, ParamGroup group) {
  Tensor gain({dim});
  gain.fill(1.0);
  NormIds ids;
  ids.gain = store_.add(name + ".gain", std::move(gain), group);
  ids.bias = store_.add(name + ".bias", Tensor({dim}), group);
  return ids;
}

void Model::build(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t d = config_.model_dim;
  const auto enc = ParamGroup::kEncoder;
  const auto fresh = ParamGroup::kNewModule;

  if (!config_.precomputed_hidden) {
    const auto [s1, s2] = split_stride(config_.conv_downsample);
    if (config_.conv_downsample == 1) {
      frontend_.push_back(add_linear("frontend.proj", config_.feat_dim, d, enc, rng));
    } else {
      frontend_.push_back(add_linear("frontend.conv1", s1 * config_.feat_dim, d, enc, rng));
      frontend_.push_back(add_linear("frontend.conv2", s2 * d, d, enc, rng));
    }
  }

  auto small = [&](std::size_t n) {
    Tensor t({n});
    for (double& v : t.values()) v = (2.0 * uniform01(rng) - 1.0) * 0.02;
    return t;
  };
  type_frame_ = store_.add("encoder.type_frame", small(d), enc);
  type_token_ = store_.add("encoder.type_token", small(d), fresh);

  for (std::size_t b = 0; b < config_.num_blocks; ++b) {
    const std::string p = "encoder.block" + std::to_string(b);
    BlockIds blk;
    blk.ln1 = add_norm(p + ".ln1", d, enc);
    blk.q = add_linear(p + ".attn.q", d, d, enc, rng);
    blk.k = add_linear(p + ".attn.k", d, d, enc, rng);
    blk.v = add_linear(p + ".attn.v", d, d, enc, rng);
    blk.o = add_linear(p + ".attn.o", d, d, enc, rng);
    blk.ln2 = add_norm(p + ".ln2", d, enc);
    blk.ff1 = add_linear(p + ".ffn.in", d, config_.ffn_dim, enc, rng);
    blk.ff2 = add_linear(p + ".ffn.out", config_.ffn_dim, d, enc, rng);
    blocks_.push_back(blk);
  }
  final_norm_ = add_norm("encoder.final_norm", d, enc);

  const std::size_t td = config_.taee_dim;
  taee_q_ = add_linear("taee.attn.q", d, td, fresh, rng);
  taee_k_ = add_linear("taee.attn.k", d, td, fresh, rng);
  taee_v_ = add_linear("taee.attn.v", d, td, fresh, rng);
  taee_o_ = add_linear("taee.attn.o", td, td, fresh, rng);
  taee_norm_ = add_norm("taee.ln", td, fresh);
  taee_ff1_ = add_linear("taee.ffn.in", td, config_.taee_ffn_dim, fresh, rng);
  taee_ff2_ = add_linear("taee.ffn.out", config_.taee_ffn_dim, td, fresh, rng);
  taee_out_norm_ = add_norm("taee.out_norm", td, fresh);
  taee_out_ = add_linear("taee.out", td, d, fresh, rng);

  const LinearIds ctc = add_linear("ctc_head", d, config_.vocab_size + 1, fresh, rng);
  ctc_w_ = ctc.w;
  ctc_b_ = ctc.b;
  ce_ = add_linear("ce_head", d, config_.vocab_size, fresh, rng);

  positions_ = kernels::sinusoidal_positions(config_.max_frames, d);
}

std::size_t Model::output_frames(std::size_t raw_frames) const {
  if (config_.precomputed_hidden) return raw_frames;
  const std::size_t s = config_.conv_downsample;
  return (raw_frames + s - 1) / s;
}

Var Model::apply(Tape& tape, const LinearIds& l, Var x) const {
  return ops::linear(x, tape.param(store_, l.w), tape.param(store_, l.b));
}

Var Model::apply(Tape& tape, const NormIds& n, Var x) const {
  return ops::layer_norm(x, tape.param(store_, n.gain), tape.param(store_, n.bias));
}

Var Model::conv_frontend(Tape& tape, const Tensor& features, Rng* dropout) const {
  if (features.rank() != 2 || features.cols() != config_.feat_dim) {
    throw ContractViolation("conv_frontend: expected [frames, " +
                            std::to_string(config_.feat_dim) + "], got " +
                            shape_string(features.dims()));
  }
  const std::size_t raw = features.rows();
  if (config_.precomputed_hidden) {
    if (raw == 0) throw DomainError("conv_frontend: empty input");
    return tape.constant(features);
  }
  const std::size_t s = config_.conv_downsample;
  if (raw < s) {
    throw DomainError("conv_frontend: " + std::to_string(raw) +
                      " frames is shorter than the downsample factor " + std::to_string(s));
  }
  Var x = tape.constant(features);
  if (s == 1) return apply(tape, frontend_[0], x);

  // Strided convolutions with kernel == stride: zero-pad to a whole number
  // of output frames, fold each window into one row, project.
  const auto [s1, s2] = split_stride(s);
  const std::size_t out = output_frames(raw);
  const std::size_t d = config_.model_dim;
  x = ops::pad_rows(x, out * s);
  x = ops::reshape(x, {out * s2, s1 * config_.feat_dim});
  x = ops::gelu(apply(tape, frontend_[0], x));
  x = ops::dropout(x, config_.dropout, dropout);
  x = ops::reshape(x, {out, s2 * d});
  return apply(tape, frontend_[1], x);
}

Var Model::encode(Tape& tape, Var x, Rng* dropout,
                  const kernels::AttentionMask& mask) const {
  const double rate = config_.dropout;
  for (const BlockIds& blk : blocks_) {
    Var h = apply(tape, blk.ln1, x);
    Var a = ops::attention(apply(tape, blk.q, h), apply(tape, blk.k, h),
                           apply(tape, blk.v, h), config_.num_heads, mask);
    a = apply(tape, blk.o, a);
    x = ops::add(x, ops::dropout(a, rate, dropout));
    h = apply(tape, blk.ln2, x);
    Var f = apply(tape, blk.ff2, ops::gelu(apply(tape, blk.ff1, h)));
    x = ops::add(x, ops::dropout(f, rate, dropout));
  }
  return apply(tape, final_norm_, x);
}

Var Model::empty_tae(Tape& tape) const {
  return tape.constant(Tensor::matrix(0, config_.model_dim));
}

EncoderOutput Model::encode_pass1(Tape& tape, Var hidden, Rng* dropout) const {
  return encode_pass2(tape, hidden, empty_tae(tape), dropout);
}

EncoderOutput Model::encode_pass2(Tape& tape, Var hidden, Var tae, Rng* dropout,
                                  const kernels::AttentionMask& mask) const {
  const Tensor& h = hidden.value();
  const Tensor& t = tae.value();
  const std::size_t d = config_.model_dim;
  if (h.rank() != 2 || h.cols() != d || t.rank() != 2 || t.cols() != d) {
    throw ContractViolation("encode: expected [*, " + std::to_string(d) + "] inputs, got " +
                            shape_string(h.dims()) + " and " + shape_string(t.dims()));
  }
  const std::size_t frames = h.rows();
  const std::size_t tokens = t.rows();
  if (frames == 0) throw DomainError("encode: no frames");
  if (frames + tokens > config_.max_frames) {
    throw CapacityError("encode: " + std::to_string(frames + tokens) +
                        " positions exceed max_frames " + std::to_string(config_.max_frames));
  }
  // Frames take positions 0..T-1; tokens restart at 0. Type embeddings tell
  // the two apart.
  auto position_rows = [&](std::size_t n) {
    std::vector<double> data(positions_.data(), positions_.data() + n * d);
    return tape.constant(Tensor({n, d}, std::move(data)));
  };
  Var frames_in = ops::add_row(ops::add(hidden, position_rows(frames)),
                               tape.param(store_, type_frame_));
  Var input = frames_in;
  if (tokens > 0) {
    Var tokens_in = ops::add_row(ops::add(tae, position_rows(tokens)),
                                 tape.param(store_, type_token_));
    input = ops::concat_rows(frames_in, tokens_in);
  }
  Var out = encode(tape, input, dropout, mask);
  if (tokens == 0) return {out, ops::slice_rows(out, frames, frames)};
  return {ops::slice_rows(out, 0, frames), ops::slice_rows(out, frames, frames + tokens)};
}

Var Model::taee_attend(Tape& tape, Var frame_out, const ctc::SegmentBoundaries& bounds) const {
  const Tensor& f = frame_out.value();
  if (f.rank() != 2 || f.rows() != bounds.frames || f.cols() != config_.model_dim) {
    throw ContractViolation("extract_tae: boundaries cover " + std::to_string(bounds.frames) +
                            " frames, frame_out is " + shape_string(f.dims()));
  }
  std::size_t expect = 0;
  for (const auto& span : bounds.spans) {
    if (span.start != expect || span.end <= span.start) {
      throw ContractViolation("extract_tae: spans do not partition the frames");
    }
    expect = span.end;
  }
  if (expect != bounds.frames || bounds.tokens() == 0) {
    throw ContractViolation("extract_tae: spans do not partition the frames");
  }
  const std::size_t tokens = bounds.tokens();
  if (tokens > config_.max_frames) {
    throw CapacityError("extract_tae: too many tokens");
  }
  const std::size_t d = config_.model_dim;
  std::vector<double> pos(positions_.data(), positions_.data() + tokens * d);
  Var queries = tape.constant(Tensor({tokens, d}, std::move(pos)));
  Var a = ops::attention(apply(tape, taee_q_, queries), apply(tape, taee_k_, frame_out),
                         apply(tape, taee_v_, frame_out), config_.taee_heads,
                         span_mask(bounds));
  return apply(tape, taee_o_, a);
}

Var Model::extract_tae(Tape& tape, Var frame_out, const ctc::SegmentBoundaries& bounds,
                       Rng* dropout) const {
  Var a = taee_attend(tape, frame_out, bounds);
  Var f = apply(tape, taee_ff2_, ops::gelu(apply(tape, taee_ff1_, apply(tape, taee_norm_, a))));
  Var h = ops::add(a, ops::dropout(f, config_.dropout, dropout));
  return apply(tape, taee_out_, apply(tape, taee_out_norm_, h));
}

Var Model::ctc_head(Tape& tape, Var frame_out) const {
  return ops::log_softmax_rows(
      ops::linear(frame_out, tape.param(store_, ctc_w_), tape.param(store_, ctc_b_)));
}

Var Model::ce_head(Tape& tape, Var token_out) const {
  return ops::log_softmax_rows(apply(tape, ce_, token_out));
}

}  // namespace unienc
