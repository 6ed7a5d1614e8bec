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

#include "unienc/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include <zlib.h>

#include "unienc/error.hpp"

namespace unienc {
namespace {

struct Named {
  std::string name;
  Tensor value;
};

class Writer {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u16(std::uint16_t v) { le(v, 2); }
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void raw(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    bytes_.insert(bytes_.end(), c, c + n);
  }
  std::vector<unsigned char>& bytes() { return bytes_; }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) bytes_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  std::vector<unsigned char> bytes_;
};

class Reader {
 public:
  Reader(const std::vector<unsigned char>& bytes, std::size_t end) : bytes_(bytes), end_(end) {}
  std::size_t offset() const { return pos_; }
  std::uint64_t le(int n, const char* what) {
    need(static_cast<std::size_t>(n), what);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::string str(std::size_t n) {
    need(n, "tensor name");
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void need(std::size_t n, const char* what) {
    if (end_ - pos_ < n) {
      throw ParseError(std::string("checkpoint: truncated ") + what + " at byte " +
                           std::to_string(pos_),
                       pos_);
    }
  }

 private:
  const std::vector<unsigned char>& bytes_;
  std::size_t end_;
  std::size_t pos_ = 4;
};

std::vector<std::pair<std::string, double>> config_fields(const ModelConfig& c) {
  return {{"feat_dim", static_cast<double>(c.feat_dim)},
          {"model_dim", static_cast<double>(c.model_dim)},
          {"ffn_dim", static_cast<double>(c.ffn_dim)},
          {"num_heads", static_cast<double>(c.num_heads)},
          {"num_blocks", static_cast<double>(c.num_blocks)},
          {"conv_downsample", static_cast<double>(c.conv_downsample)},
          {"taee_dim", static_cast<double>(c.taee_dim)},
          {"taee_ffn_dim", static_cast<double>(c.taee_ffn_dim)},
          {"taee_heads", static_cast<double>(c.taee_heads)},
          {"vocab_size", static_cast<double>(c.vocab_size)},
          {"max_frames", static_cast<double>(c.max_frames)},
          {"dropout", c.dropout},
          {"precomputed_hidden", c.precomputed_hidden ? 1.0 : 0.0}};
}

ModelConfig config_from_fields(const std::map<std::string, double>& f) {
  auto get = [&](const std::string& k) {
    auto it = f.find(k);
    if (it == f.end()) throw ParseError("checkpoint: missing config." + k, 0);
    return it->second;
  };
  auto count = [&](const std::string& k) { return static_cast<std::size_t>(get(k)); };
  ModelConfig c;
  c.feat_dim = count("feat_dim");
  c.model_dim = count("model_dim");
  c.ffn_dim = count("ffn_dim");
  c.num_heads = count("num_heads");
  c.num_blocks = count("num_blocks");
  c.conv_downsample = count("conv_downsample");
  c.taee_dim = count("taee_dim");
  c.taee_ffn_dim = count("taee_ffn_dim");
  c.taee_heads = count("taee_heads");
  c.vocab_size = count("vocab_size");
  c.max_frames = count("max_frames");
  c.dropout = get("dropout");
  c.precomputed_hidden = get("precomputed_hidden") != 0.0;
  return c;
}

}  // namespace

std::vector<unsigned char> serialize_checkpoint(const Model& model, const AdamState* optimizer,
                                                std::size_t step, std::size_t epoch) {
  std::vector<Named> tensors;
  for (const auto& [k, v] : config_fields(model.config())) {
    tensors.push_back({"config." + k, Tensor::scalar(v)});
  }
  tensors.push_back({"meta.step", Tensor::scalar(static_cast<double>(step))});
  tensors.push_back({"meta.epoch", Tensor::scalar(static_cast<double>(epoch))});
  const auto& params = model.parameters().all();
  for (const auto& p : params) tensors.push_back({"param." + p.name, p.value});
  if (optimizer) {
    if (optimizer->first_moment.size() != params.size() ||
        optimizer->second_moment.size() != params.size()) {
      throw ContractViolation("checkpoint: optimizer state does not match parameters");
    }
    tensors.push_back({"adam.step", Tensor::scalar(static_cast<double>(optimizer->step))});
    for (std::size_t i = 0; i < params.size(); ++i) {
      tensors.push_back({"adam.m." + params[i].name, optimizer->first_moment[i]});
      tensors.push_back({"adam.v." + params[i].name, optimizer->second_moment[i]});
    }
  }

  Writer w;
  w.raw("UECN", 4);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    if (t.name.size() > 0xffff) throw ContractViolation("checkpoint: name too long");
    w.u16(static_cast<std::uint16_t>(t.name.size()));
    w.raw(t.name.data(), t.name.size());
    w.u8(static_cast<std::uint8_t>(t.value.rank()));
    for (std::size_t d : t.value.dims()) w.u64(d);
    for (double v : t.value.values()) w.u64(std::bit_cast<std::uint64_t>(v));
  }
  auto& bytes = w.bytes();
  const auto crc = crc32(0L, bytes.data() + 4, static_cast<uInt>(bytes.size() - 4));
  w.u32(static_cast<std::uint32_t>(crc));
  return std::move(bytes);
}

void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const AdamState* optimizer, std::size_t step, std::size_t epoch) {
  const auto bytes = serialize_checkpoint(model, optimizer, step, epoch);
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("checkpoint: cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("checkpoint: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint parse_checkpoint(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "UECN", 4) != 0) {
    throw ParseError("checkpoint: bad magic, expected UECN", 0);
  }
  if (bytes.size() < 16) throw ParseError("checkpoint: truncated header", bytes.size());
  const std::size_t body_end = bytes.size() - 4;
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(bytes[body_end + i]) << (8 * i);
  const auto crc = static_cast<std::uint32_t>(
      crc32(0L, bytes.data() + 4, static_cast<uInt>(body_end - 4)));
  if (crc != stored) {
    throw ParseError("checkpoint: CRC mismatch at byte " + std::to_string(body_end), body_end);
  }

  Reader r(bytes, body_end);
  const auto version = r.le(4, "version");
  if (version != kCheckpointVersion) {
    throw ParseError("checkpoint: unsupported version " + std::to_string(version), 4);
  }
  const auto count = r.le(4, "tensor count");
  std::vector<Named> tensors;
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::size_t at = r.offset();
    const auto len = r.le(2, "name length");
    Named t;
    t.name = r.str(static_cast<std::size_t>(len));
    const auto rank = r.le(1, "rank");
    std::vector<std::size_t> dims;
    std::size_t n = 1;
    for (std::uint64_t k = 0; k < rank; ++k) {
      const auto d = r.le(8, "dims");
      if (d > (1ULL << 40)) throw ParseError("checkpoint: absurd dim in " + t.name, at);
      dims.push_back(static_cast<std::size_t>(d));
      n *= dims.back();
    }
    r.need(8 * n, "tensor payload");
    std::vector<double> data(n);
    for (std::size_t k = 0; k < n; ++k) data[k] = std::bit_cast<double>(r.le(8, "payload"));
    t.value = Tensor(std::move(dims), std::move(data));
    tensors.push_back(std::move(t));
  }
  if (r.offset() != body_end) {
    throw ParseError("checkpoint: trailing bytes at " + std::to_string(r.offset()), r.offset());
  }

  Checkpoint ck;
  std::map<std::string, double> cfg;
  std::map<std::string, Tensor> m, v;
  bool has_adam = false;
  for (auto& t : tensors) {
    const std::string& name = t.name;
    if (name.rfind("config.", 0) == 0) {
      cfg[name.substr(7)] = t.value.item();
    } else if (name == "meta.step") {
      ck.step = static_cast<std::size_t>(t.value.item());
    } else if (name == "meta.epoch") {
      ck.epoch = static_cast<std::size_t>(t.value.item());
    } else if (name.rfind("param.", 0) == 0) {
      ck.params.add(name.substr(6), std::move(t.value), ParamGroup::kEncoder);
    } else if (name == "adam.step") {
      has_adam = true;
      ck.optimizer.emplace();
      ck.optimizer->step = static_cast<std::size_t>(t.value.item());
    } else if (name.rfind("adam.m.", 0) == 0) {
      m[name.substr(7)] = std::move(t.value);
    } else if (name.rfind("adam.v.", 0) == 0) {
      v[name.substr(7)] = std::move(t.value);
    } else {
      throw ParseError("checkpoint: unknown tensor " + name, 0);
    }
  }
  ck.model_config = config_from_fields(cfg);
  if (has_adam) {
    for (const auto& p : ck.params.all()) {
      if (!m.count(p.name) || !v.count(p.name)) {
        throw ParseError("checkpoint: optimizer state missing for " + p.name, 0);
      }
      ck.optimizer->first_moment.push_back(m[p.name]);
      ck.optimizer->second_moment.push_back(v[p.name]);
    }
  }
  return ck;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("checkpoint: cannot open " + path.string());
  std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in),
                                   std::istreambuf_iterator<char>()};
  return parse_checkpoint(bytes);
}

Model model_from_checkpoint(const Checkpoint& ckpt, const ModelConfig* expected) {
  return Model(expected ? *expected : ckpt.model_config, ckpt.params);
}

}  // namespace unienc
