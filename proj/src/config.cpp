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

#include "unienc/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "unienc/error.hpp"

namespace unienc {
namespace {

struct Binding {
  ConfigKey meta;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad_value(std::string_view key, ConfigType type, std::string_view value) {
  throw ConfigError(std::string(key) + ": expected " + std::string(type_name(type)) +
                    ", got '" + std::string(value) + "'");
}

std::uint64_t parse_uint(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, ConfigType::kInteger, v);
  return out;
}

double parse_real(std::string_view key, std::string_view v) {
  const std::string s(v);
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(s, &used);
  } catch (const std::exception&) {
    bad_value(key, ConfigType::kReal, v);
  }
  if (used != s.size()) bad_value(key, ConfigType::kReal, v);
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(key, ConfigType::kBool, v);
}

std::string fmt_real(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  // Shortest representation that still round-trips.
  for (int p = 1; p <= 17; ++p) {
    std::ostringstream t;
    t.precision(p);
    t << v;
    if (std::stod(t.str()) == v) return t.str();
  }
  return os.str();
}

template <typename T>
Binding count(std::string key, std::string help, T RunConfig::*section, std::size_t T::*field) {
  return {{key, ConfigType::kInteger, std::move(help)},
          [key, section, field](RunConfig& c, std::string_view v) {
            (c.*section).*field = static_cast<std::size_t>(parse_uint(key, v));
          },
          [section, field](const RunConfig& c) { return std::to_string((c.*section).*field); }};
}

template <typename T>
Binding seed(std::string key, std::string help, T RunConfig::*section,
             std::uint64_t T::*field) {
  return {{key, ConfigType::kInteger, std::move(help)},
          [key, section, field](RunConfig& c, std::string_view v) {
            (c.*section).*field = parse_uint(key, v);
          },
          [section, field](const RunConfig& c) { return std::to_string((c.*section).*field); }};
}

template <typename T>
Binding real(std::string key, std::string help, T RunConfig::*section, double T::*field) {
  return {{key, ConfigType::kReal, std::move(help)},
          [key, section, field](RunConfig& c, std::string_view v) {
            (c.*section).*field = parse_real(key, v);
          },
          [section, field](const RunConfig& c) { return fmt_real((c.*section).*field); }};
}

template <typename T>
Binding flag(std::string key, std::string help, T RunConfig::*section, bool T::*field) {
  return {{key, ConfigType::kBool, std::move(help)},
          [key, section, field](RunConfig& c, std::string_view v) {
            (c.*section).*field = parse_bool(key, v);
          },
          [section, field](const RunConfig& c) {
            return std::string((c.*section).*field ? "true" : "false");
          }};
}

const std::vector<Binding>& bindings() {
  using R = RunConfig;
  static const std::vector<Binding> table = [] {
    std::vector<Binding> b;
    b.push_back(count("model.feat_dim", "input feature width (set from data when training)", &R::model, &ModelConfig::feat_dim));
    b.push_back(count("model.model_dim", "encoder width d", &R::model, &ModelConfig::model_dim));
    b.push_back(count("model.ffn_dim", "encoder feed-forward width", &R::model, &ModelConfig::ffn_dim));
    b.push_back(count("model.num_heads", "encoder attention heads", &R::model, &ModelConfig::num_heads));
    b.push_back(count("model.num_blocks", "encoder blocks", &R::model, &ModelConfig::num_blocks));
    b.push_back(count("model.conv_downsample", "frontend frame-rate reduction", &R::model, &ModelConfig::conv_downsample));
    b.push_back(count("model.taee_dim", "TAE extractor width", &R::model, &ModelConfig::taee_dim));
    b.push_back(count("model.taee_ffn_dim", "TAE extractor feed-forward width", &R::model, &ModelConfig::taee_ffn_dim));
    b.push_back(count("model.taee_heads", "TAE extractor heads", &R::model, &ModelConfig::taee_heads));
    b.push_back(count("model.vocab_size", "real tokens, blank excluded (set from data when training)", &R::model, &ModelConfig::vocab_size));
    b.push_back(count("model.max_frames", "positions available to the encoder", &R::model, &ModelConfig::max_frames));
    b.push_back(real("model.dropout", "dropout rate while training", &R::model, &ModelConfig::dropout));
    b.push_back(flag("model.precomputed_hidden", "features are hidden features H; skip the frontend", &R::model, &ModelConfig::precomputed_hidden));

    b.push_back(count("train.warmup_steps", "noam warmup steps", &R::train, &TrainConfig::warmup_steps));
    b.push_back(real("train.peak_lr_encoder", "peak LR, frontend and encoder", &R::train, &TrainConfig::peak_lr_encoder));
    b.push_back(real("train.peak_lr_new_modules", "peak LR, TAE extractor and heads", &R::train, &TrainConfig::peak_lr_new_modules));
    b.push_back(count("train.batch_frame_budget", "raw frames per batch", &R::train, &TrainConfig::batch_frame_budget));
    b.push_back(count("train.max_epochs", "epoch limit", &R::train, &TrainConfig::max_epochs));
    b.push_back(count("train.early_stop_patience", "epochs without valid improvement before stopping", &R::train, &TrainConfig::early_stop_patience));
    b.push_back(seed("train.seed", "training seed", &R::train, &TrainConfig::seed));
    b.push_back(real("train.grad_clip", "global gradient-norm clip", &R::train, &TrainConfig::grad_clip));
    b.push_back(real("train.adam_beta1", "Adam beta1", &R::train, &TrainConfig::adam_beta1));
    b.push_back(real("train.adam_beta2", "Adam beta2", &R::train, &TrainConfig::adam_beta2));
    b.push_back(real("train.adam_eps", "Adam epsilon", &R::train, &TrainConfig::adam_eps));
    b.push_back(flag("train.final_unienc_eval", "iterative-decode WER on valid after training", &R::train, &TrainConfig::final_unienc_eval));
    b.push_back(real("train.lambda1", "first-pass CTC weight", &R::loss, &LossWeights::lambda1));
    b.push_back(real("train.lambda2", "second-pass CTC weight", &R::loss, &LossWeights::lambda2));
    b.push_back(real("train.label_smoothing", "CE label smoothing", &R::loss, &LossWeights::label_smoothing));

    b.push_back({{"decode.schedule", ConfigType::kSchedule, "samples per iteration, e.g. 25,2"},
                 [](R& c, std::string_view v) {
                   c.decode = DecodeSchedule::parse(v, c.decode_threshold);
                 },
                 [](const R& c) { return c.decode.to_string(); }});
    b.push_back({{"decode.threshold", ConfigType::kReal, "ESA confidence threshold"},
                 [](R& c, std::string_view v) {
                   c.decode_threshold = parse_real("decode.threshold", v);
                   c.decode.thresholds.assign(c.decode.samples.size(), c.decode_threshold);
                 },
                 [](const R& c) { return fmt_real(c.decode_threshold); }});
    b.push_back({{"decode.seed", ConfigType::kInteger, "sampling seed"},
                 [](R& c, std::string_view v) { c.decode_seed = parse_uint("decode.seed", v); },
                 [](const R& c) { return std::to_string(c.decode_seed); }});

    using S = data::SynthTaskSpec;
    b.push_back(count("data.vocab_tokens", "synthetic tokens (blank excluded)", &R::data, &S::vocab_tokens));
    b.push_back(count("data.feat_dim", "synthetic feature width", &R::data, &S::feat_dim));
    b.push_back(count("data.min_frames_per_token", "shortest token run", &R::data, &S::min_frames_per_token));
    b.push_back(count("data.max_frames_per_token", "longest token run", &R::data, &S::max_frames_per_token));
    b.push_back(count("data.min_silence", "shortest silence run", &R::data, &S::min_silence));
    b.push_back(count("data.max_silence", "longest silence run", &R::data, &S::max_silence));
    b.push_back(count("data.min_tokens", "fewest tokens per utterance", &R::data, &S::min_tokens));
    b.push_back(count("data.max_tokens", "most tokens per utterance", &R::data, &S::max_tokens));
    b.push_back(real("data.noise_scale", "isotropic feature noise", &R::data, &S::noise_scale));
    b.push_back(real("data.frame_shift", "seconds per raw frame", &R::data, &S::frame_shift));
    return b;
  }();
  return table;
}

const Binding& binding(std::string_view key) {
  for (const auto& b : bindings()) {
    if (b.meta.key == key) return b;
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

}  // namespace

std::string_view type_name(ConfigType type) {
  switch (type) {
    case ConfigType::kInteger:
      return "integer";
    case ConfigType::kReal:
      return "real";
    case ConfigType::kBool:
      return "bool";
    case ConfigType::kSchedule:
      return "schedule";
  }
  return "?";
}

const std::vector<ConfigKey>& config_schema() {
  static const std::vector<ConfigKey> schema = [] {
    std::vector<ConfigKey> out;
    for (const auto& b : bindings()) out.push_back(b.meta);
    return out;
  }();
  return schema;
}

void RunConfig::set(std::string_view key, std::string_view value) {
  const Binding& b = binding(key);
  const std::string v = trim(value);
  if (v.empty()) {
    throw ConfigError("missing value for " + std::string(key) + " (expected " +
                      std::string(type_name(b.meta.type)) + ")");
  }
  b.set(*this, v);
}

std::string RunConfig::get(std::string_view key) const { return binding(key).get(*this); }

void RunConfig::validate() const {
  model.validate();
  train.validate();
  loss.validate();
  decode.validate();
  data.validate();
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& b : bindings()) out += b.meta.key + " = " + b.get(*this) + "\n";
  return out;
}

void load_config_file(const std::filesystem::path& path, RunConfig& config) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    const std::string key = trim(body.substr(0, eq));
    if (eq == std::string::npos) {
      const ConfigType type = binding(key).meta.type;
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": missing value for " +
                        key + " (expected " + std::string(type_name(type)) + ")");
    }
    try {
      config.set(key, body.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void apply_override(std::string_view assignment, RunConfig& config) {
  const auto eq = assignment.find('=');
  const std::string key = trim(assignment.substr(0, eq));
  if (eq == std::string_view::npos) {
    const ConfigType type = binding(key).meta.type;
    throw ConfigError("missing value for " + key + " (expected " +
                      std::string(type_name(type)) + ")");
  }
  config.set(key, assignment.substr(eq + 1));
}

}  // namespace unienc
