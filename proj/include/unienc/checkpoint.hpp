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
#include <vector>

#include "unienc/model.hpp"

namespace unienc {

struct AdamState {
  std::size_t step = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
};

struct Checkpoint {
  ModelConfig model_config;
  ParameterStore params;
  std::optional<AdamState> optimizer;
  std::size_t step = 0;
  std::size_t epoch = 0;
};

// Binary layout, little endian:
//   "UECN" | u32 version | u32 tensor count |
//   per tensor: u16 name length, name bytes, u8 rank, u64 dims[rank],
//               float64 payload (row-major) |
//   u32 CRC-32 of every byte after the magic.
// Model config, step/epoch counters and optimizer moments are stored as
// named tensors next to the parameters ("config.*", "meta.*", "adam.*",
// "param.*").
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const AdamState* optimizer = nullptr, std::size_t step = 0,
                     std::size_t epoch = 0);
std::vector<unsigned char> serialize_checkpoint(const Model& model, const AdamState* optimizer,
                                                std::size_t step, std::size_t epoch);

// Throws ParseError carrying the byte offset of the first bad field.
Checkpoint load_checkpoint(const std::filesystem::path& path);
Checkpoint parse_checkpoint(const std::vector<unsigned char>& bytes);

// Rebuilds the model. When `expected` is given every parameter must match
// its dims; a mismatch throws DimensionMismatch naming the tensor.
Model model_from_checkpoint(const Checkpoint& ckpt, const ModelConfig* expected = nullptr);

}  // namespace unienc
