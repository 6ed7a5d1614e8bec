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
#include <deque>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "unienc/kernels.hpp"
#include "unienc/tensor.hpp"

namespace unienc {

// Optimizer parameter groups: pretrained-style modules (frontend and
// contextual encoder) vs freshly initialized ones (TAE extractor, heads).
enum class ParamGroup { kEncoder, kNewModule };

struct Parameter {
  std::string name;
  Tensor value;
  ParamGroup group = ParamGroup::kEncoder;
};

// Owns every trainable tensor of a model. Layers refer to parameters by
// index so the store (and the model holding it) stays copyable.
class ParameterStore {
 public:
  using Id = std::size_t;

  Id add(std::string name, Tensor value, ParamGroup group);
  std::optional<Id> find(const std::string& name) const;

  Parameter& operator[](Id id) { return params_[id]; }
  const Parameter& operator[](Id id) const { return params_[id]; }
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  std::vector<Parameter>& all() { return params_; }
  const std::vector<Parameter>& all() const { return params_; }

 private:
  std::vector<Parameter> params_;
};

class Tape;

// Handle to a value recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::uint32_t id = 0;

  const Tensor& value() const;
};

// Reverse-mode gradient tape. Nodes are appended in evaluation order, so
// walking them backwards is a reverse topological order. A tape created
// with record=false only evaluates (inference).
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }

  Var constant(Tensor value);
  // Leaf for a stored parameter. Repeated calls with the same id return the
  // same node, so every use accumulates into one gradient. The value is
  // borrowed: the store must outlive the tape and stay unmodified meanwhile.
  Var param(const ParameterStore& store, ParameterStore::Id id);

  const Tensor& value(Var v) const {
    const Node& n = nodes_[v.id];
    return n.borrowed ? *n.borrowed : n.value;
  }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  // Zeros if the node never received a gradient.
  Tensor grad(Var v) const;
  // Accumulation buffer for `v`, allocated on first use.
  Tensor& grad_buffer(Var v);

  void backward(Var loss);

  // One gradient per parameter in `store`, zeros for untouched parameters.
  std::vector<Tensor> parameter_grads(const ParameterStore& store) const;

  // Record a derived value. `backward` may be empty for non-differentiable
  // results; it is dropped when no input requires a gradient.
  Var push(Tensor value, std::span<const Var> inputs, BackwardFn backward);
  Var push(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
    return push(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(backward));
  }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    const Tensor* borrowed = nullptr;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    BackwardFn backward;
  };

  bool record_;
  std::deque<Node> nodes_;
  std::vector<std::int64_t> param_nodes_;
};

using Rng = std::mt19937_64;

// Uniform double in [0,1) from the top 53 bits; identical on every platform.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Differentiable wrappers over kernels.
namespace ops {

Var matmul(Var a, Var b);
// x [m,in] * w [in,out] + b [out].
Var linear(Var x, Var w, Var b);
Var add(Var a, Var b);
// x [m,n] + row [n] broadcast over rows.
Var add_row(Var x, Var row);
Var scale(Var x, double factor);
Var gelu(Var x);
Var layer_norm(Var x, Var gain, Var bias);
Var log_softmax_rows(Var x);
// Multi-head attention over already projected q [nq,d], k/v [nk,d]; heads
// split the columns evenly.
Var attention(Var q, Var k, Var v, std::size_t heads,
              const kernels::AttentionMask& mask = {});
// Inverted dropout. Identity when rate == 0 or rng is null.
Var dropout(Var x, double rate, Rng* rng);
Var concat_rows(Var a, Var b);
Var slice_rows(Var x, std::size_t begin, std::size_t end);
Var reshape(Var x, std::vector<std::size_t> dims);
// Append zero rows up to `rows`.
Var pad_rows(Var x, std::size_t rows);
Var sum(Var x);
// Mean over rows of -[(1-s) lp[y] + s/V sum lp], for targets indexing columns.
Var cross_entropy(Var log_probs, std::span<const int> targets,
                  double label_smoothing);
// sum_i weights[i] * terms[i] over scalar terms.
Var weighted_sum(std::span<const Var> terms, std::span<const double> weights);

}  // namespace ops
}  // namespace unienc
