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
#include <string>
#include <string_view>
#include <vector>

#include "unienc/data.hpp"
#include "unienc/decoding.hpp"
#include "unienc/model.hpp"
#include "unienc/training.hpp"

namespace unienc {

// Everything a run can be configured with, addressed by flat dotted keys
// ("model.model_dim = 64"). Defaults are the struct defaults below.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  LossWeights loss;
  DecodeSchedule decode;
  double decode_threshold = 0.9;
  std::uint64_t decode_seed = 0;
  data::SynthTaskSpec data;

  // Throws ConfigError naming the key (unknown key, or a value that does
  // not parse as the key's type).
  void set(std::string_view key, std::string_view value);
  std::string get(std::string_view key) const;

  void validate() const;
  // "key = value" lines for every schema key.
  std::string to_text() const;
};

enum class ConfigType { kInteger, kReal, kBool, kSchedule };

struct ConfigKey {
  std::string key;
  ConfigType type;
  std::string help;
};

const std::vector<ConfigKey>& config_schema();
std::string_view type_name(ConfigType type);

// Reads "key = value" lines; '#' starts a comment. A key without a value
// is an error naming the key and its expected type.
void load_config_file(const std::filesystem::path& path, RunConfig& config);
// Applies one "key=value" override.
void apply_override(std::string_view assignment, RunConfig& config);

}  // namespace unienc
