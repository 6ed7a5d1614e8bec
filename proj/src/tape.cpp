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

#include "unienc/tape.hpp"

#include <cmath>

#include "unienc/error.hpp"

namespace unienc {

ParameterStore::Id ParameterStore::add(std::string name, Tensor value,
                                       ParamGroup group) {
  if (find(name)) throw ContractViolation("duplicate parameter " + name);
  params_.push_back({std::move(name), std::move(value), group});
  return params_.size() - 1;
}

std::optional<ParameterStore::Id> ParameterStore::find(
    const std::string& name) const {
  for (Id i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return i;
  }
  return std::nullopt;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

const Tensor& Var::value() const { return tape->value(*this); }

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), nullptr, {}, false, false, {}});
  return {this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::param(const ParameterStore& store, ParameterStore::Id id) {
  if (param_nodes_.size() < store.size()) param_nodes_.resize(store.size(), -1);
  if (param_nodes_[id] >= 0) {
    return {this, static_cast<std::uint32_t>(param_nodes_[id])};
  }
  nodes_.push_back(Node{Tensor(), &store[id].value, {}, false, record_, {}});
  param_nodes_[id] = static_cast<std::int64_t>(nodes_.size() - 1);
  return {this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::push(Tensor value, std::span<const Var> inputs,
               BackwardFn backward) {
  bool needs = false;
  if (record_) {
    for (Var v : inputs) needs = needs || nodes_[v.id].requires_grad;
  }
  Node node{std::move(value), nullptr, {}, false, needs, {}};
  if (needs) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return {this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Tensor& Tape::grad_buffer(Var v) {
  Node& n = nodes_[v.id];
  if (!n.has_grad) {
    n.grad = Tensor(value(v).dims());
    n.has_grad = true;
  }
  return n.grad;
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_[v.id];
  return n.has_grad ? n.grad : Tensor(value(v).dims());
}

void Tape::backward(Var loss) {
  if (!record_) throw ContractViolation("backward on a non-recording tape");
  const Tensor& lv = value(loss);
  if (lv.size() != 1) {
    throw ContractViolation("backward: loss must be scalar, got " +
                            shape_string(lv.dims()));
  }
  if (!std::isfinite(lv[0])) throw NumericalError("backward: loss not finite");
  grad_buffer(loss)[0] = 1.0;
  for (std::int64_t i = loss.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.has_grad || !n.backward) continue;
    n.backward(*this, n.grad);
  }
}

std::vector<Tensor> Tape::parameter_grads(const ParameterStore& store) const {
  std::vector<Tensor> out;
  out.reserve(store.size());
  for (ParameterStore::Id id = 0; id < store.size(); ++id) {
    if (id < param_nodes_.size() && param_nodes_[id] >= 0) {
      out.push_back(grad({const_cast<Tape*>(this),
                          static_cast<std::uint32_t>(param_nodes_[id])}));
    } else {
      out.emplace_back(store[id].value.dims());
    }
  }
  return out;
}

namespace ops {
namespace {

void accumulate(Tensor& dst, const Tensor& src) {
  double* d = dst.data();
  const double* s = src.data();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

void require_same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw ContractViolation("ops: vars on different tapes");
}

}  // namespace

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  Tape& t = *a.tape;
  Tensor out = kernels::matmul(a.value(), b.value());
  return t.push(std::move(out), {a, b}, [a, b](Tape& tp, const Tensor& g) {
    if (tp.requires_grad(a)) kernels::matmul_nt_acc(g, tp.value(b), tp.grad_buffer(a));
    if (tp.requires_grad(b)) kernels::matmul_tn_acc(tp.value(a), g, tp.grad_buffer(b));
  });
}

Var linear(Var x, Var w, Var b) {
  require_same_tape(x, w);
  Tape& t = *x.tape;
  Tensor out = kernels::add_bias(kernels::matmul(x.value(), w.value()), b.value());
  return t.push(std::move(out), {x, w, b}, [x, w, b](Tape& tp, const Tensor& g) {
    if (tp.requires_grad(x)) kernels::matmul_nt_acc(g, tp.value(w), tp.grad_buffer(x));
    if (tp.requires_grad(w)) kernels::matmul_tn_acc(tp.value(x), g, tp.grad_buffer(w));
    if (tp.requires_grad(b)) {
      Tensor& gb = tp.grad_buffer(b);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        auto row = g.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) gb[c] += row[c];
      }
    }
  });
}

Var add(Var a, Var b) {
  require_same_tape(a, b);
  if (a.value().dims() != b.value().dims()) {
    throw ContractViolation("add: shapes " + shape_string(a.value().dims()) +
                            " and " + shape_string(b.value().dims()));
  }
  Tensor out = a.value();
  const double* pb = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += pb[i];
  return a.tape->push(std::move(out), {a, b}, [a, b](Tape& tp, const Tensor& g) {
    if (tp.requires_grad(a)) accumulate(tp.grad_buffer(a), g);
    if (tp.requires_grad(b)) accumulate(tp.grad_buffer(b), g);
  });
}

Var add_row(Var x, Var row) {
  require_same_tape(x, row);
  Tensor out = kernels::add_bias(x.value(), row.value());
  return x.tape->push(std::move(out), {x, row}, [x, row](Tape& tp, const Tensor& g) {
    if (tp.requires_grad(x)) accumulate(tp.grad_buffer(x), g);
    if (tp.requires_grad(row)) {
      Tensor& gr = tp.grad_buffer(row);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        auto gv = g.row(r);
        for (std::size_t c = 0; c < gv.size(); ++c) gr[c] += gv[c];
      }
    }
  });
}

Var scale(Var x, double factor) {
  Tensor out = x.value();
  for (double& v : out.values()) v *= factor;
  return x.tape->push(std::move(out), {x}, [x, factor](Tape& tp, const Tensor& g) {
    Tensor& gx = tp.grad_buffer(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += factor * g[i];
  });
}

Var gelu(Var x) {
  Tensor out = kernels::gelu(x.value());
  return x.tape->push(std::move(out), {x}, [x](Tape& tp, const Tensor& g) {
    const Tensor& in = tp.value(x);
    Tensor& gx = tp.grad_buffer(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * kernels::gelu_grad(in[i]);
  });
}

Var layer_norm(Var x, Var gain, Var bias) {
  const Tensor& in = x.value();
  const std::size_t rows = in.rows(), n = in.cols();
  if (gain.value().size() != n || bias.value().size() != n) {
    throw ContractViolation("layer_norm: gain/bias width mismatch");
  }
  Tensor xhat = Tensor::matrix(rows, n);
  std::vector<double> inv(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    auto row = in.row(r);
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    inv[r] = var < kernels::kZeroVariance
                 ? 0.0
                 : 1.0 / std::sqrt(var + kernels::kLayerNormEps);
    for (std::size_t c = 0; c < n; ++c) xhat(r, c) = (row[c] - mean) * inv[r];
  }
  Tensor out = xhat;
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < n; ++c) out(r, c) = xhat(r, c) * gv[c] + bv[c];
  }
  return x.tape->push(
      std::move(out), {x, gain, bias},
      [x, gain, bias, xhat = std::move(xhat), inv = std::move(inv)](
          Tape& tp, const Tensor& g) {
        const std::size_t rows = g.rows(), n = g.cols();
        const Tensor& gv = tp.value(gain);
        if (tp.requires_grad(gain)) {
          Tensor& gg = tp.grad_buffer(gain);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < n; ++c) gg[c] += g(r, c) * xhat(r, c);
        }
        if (tp.requires_grad(bias)) {
          Tensor& gb = tp.grad_buffer(bias);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < n; ++c) gb[c] += g(r, c);
        }
        if (!tp.requires_grad(x)) return;
        Tensor& gx = tp.grad_buffer(x);
        std::vector<double> dxhat(n);
        for (std::size_t r = 0; r < rows; ++r) {
          if (inv[r] == 0.0) continue;
          double mean_d = 0.0, mean_dx = 0.0;
          for (std::size_t c = 0; c < n; ++c) {
            dxhat[c] = g(r, c) * gv[c];
            mean_d += dxhat[c];
            mean_dx += dxhat[c] * xhat(r, c);
          }
          mean_d /= static_cast<double>(n);
          mean_dx /= static_cast<double>(n);
          for (std::size_t c = 0; c < n; ++c) {
            gx(r, c) += inv[r] * (dxhat[c] - mean_d - xhat(r, c) * mean_dx);
          }
        }
      });
}

Var log_softmax_rows(Var x) {
  Tensor out = kernels::log_softmax_rows(x.value());
  return x.tape->push(out, {x}, [x, out](Tape& tp, const Tensor& g) {
    Tensor& gx = tp.grad_buffer(x);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < g.cols(); ++c) s += g(r, c);
      for (std::size_t c = 0; c < g.cols(); ++c) {
        gx(r, c) += g(r, c) - std::exp(out(r, c)) * s;
      }
    }
  });
}

Var attention(Var q, Var k, Var v, std::size_t heads,
              const kernels::AttentionMask& mask) {
  const Tensor& qv = q.value();
  const Tensor& kv = k.value();
  const Tensor& vv = v.value();
  const std::size_t nq = qv.rows(), nk = kv.rows(), d = qv.cols();
  if (kv.cols() != d || vv.cols() != d || vv.rows() != nk) {
    throw ContractViolation("attention: q/k/v shapes " + shape_string(qv.dims()) +
                            " " + shape_string(kv.dims()) + " " +
                            shape_string(vv.dims()));
  }
  if (heads == 0 || d % heads != 0) {
    throw ContractViolation("attention: width not divisible by heads");
  }
  if (!mask.empty() && (mask.queries != nq || mask.keys != nk)) {
    throw ContractViolation("attention: mask does not match score matrix");
  }
  const std::size_t dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  // probs[h] is [nq, nk].
  std::vector<Tensor> probs(heads, Tensor::matrix(nq, nk));
  Tensor out = Tensor::matrix(nq, d);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * dh;
    Tensor& p = probs[h];
    for (std::size_t i = 0; i < nq; ++i) {
      const double* qi = qv.data() + i * d + off;
      double* pi = p.data() + i * nk;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < nk; ++j) {
        const double* kj = kv.data() + j * d + off;
        double s = 0.0;
        for (std::size_t c = 0; c < dh; ++c) s += qi[c] * kj[c];
        s *= scale;
        if (!mask.allows(i, j)) s += kernels::kMaskedScore;
        pi[j] = s;
        mx = std::max(mx, s);
      }
      double z = 0.0;
      for (std::size_t j = 0; j < nk; ++j) {
        pi[j] = std::exp(pi[j] - mx);
        z += pi[j];
      }
      for (std::size_t j = 0; j < nk; ++j) pi[j] /= z;
      double* oi = out.data() + i * d + off;
      for (std::size_t j = 0; j < nk; ++j) {
        const double w = pi[j];
        if (w == 0.0) continue;
        const double* vj = vv.data() + j * d + off;
        for (std::size_t c = 0; c < dh; ++c) oi[c] += w * vj[c];
      }
    }
  }
  return q.tape->push(
      std::move(out), {q, k, v},
      [q, k, v, heads, dh, scale, probs = std::move(probs)](Tape& tp,
                                                            const Tensor& g) {
        const Tensor& qv = tp.value(q);
        const Tensor& kv = tp.value(k);
        const Tensor& vv = tp.value(v);
        const std::size_t nq = qv.rows(), nk = kv.rows(), d = qv.cols();
        const bool gq = tp.requires_grad(q), gk = tp.requires_grad(k),
                   gvv = tp.requires_grad(v);
        Tensor* dq = gq ? &tp.grad_buffer(q) : nullptr;
        Tensor* dk = gk ? &tp.grad_buffer(k) : nullptr;
        Tensor* dv = gvv ? &tp.grad_buffer(v) : nullptr;
        std::vector<double> dp(nk);
        for (std::size_t h = 0; h < heads; ++h) {
          const std::size_t off = h * dh;
          const Tensor& p = probs[h];
          for (std::size_t i = 0; i < nq; ++i) {
            const double* gi = g.data() + i * d + off;
            const double* pi = p.data() + i * nk;
            double dot = 0.0;
            for (std::size_t j = 0; j < nk; ++j) {
              const double* vj = vv.data() + j * d + off;
              double s = 0.0;
              for (std::size_t c = 0; c < dh; ++c) s += gi[c] * vj[c];
              dp[j] = s;
              dot += s * pi[j];
              if (dv && pi[j] != 0.0) {
                double* dvj = dv->data() + j * d + off;
                for (std::size_t c = 0; c < dh; ++c) dvj[c] += pi[j] * gi[c];
              }
            }
            const double* qi = qv.data() + i * d + off;
            for (std::size_t j = 0; j < nk; ++j) {
              const double ds = pi[j] * (dp[j] - dot) * scale;
              if (ds == 0.0) continue;
              const double* kj = kv.data() + j * d + off;
              if (dq) {
                double* dqi = dq->data() + i * d + off;
                for (std::size_t c = 0; c < dh; ++c) dqi[c] += ds * kj[c];
              }
              if (dk) {
                double* dkj = dk->data() + j * d + off;
                for (std::size_t c = 0; c < dh; ++c) dkj[c] += ds * qi[c];
              }
            }
          }
        }
      });
}

Var dropout(Var x, double rate, Rng* rng) {
  if (rate <= 0.0 || rng == nullptr) return x;
  if (rate >= 1.0) throw ContractViolation("dropout: rate must be < 1");
  const double keep = 1.0 / (1.0 - rate);
  Tensor mask(x.value().dims());
  for (double& m : mask.values()) m = uniform01(*rng) < rate ? 0.0 : keep;
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return x.tape->push(std::move(out), {x},
                      [x, mask = std::move(mask)](Tape& tp, const Tensor& g) {
                        Tensor& gx = tp.grad_buffer(x);
                        for (std::size_t i = 0; i < g.size(); ++i)
                          gx[i] += g[i] * mask[i];
                      });
}

Var concat_rows(Var a, Var b) {
  require_same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.cols()) {
    throw ContractViolation("concat_rows: widths " + std::to_string(av.cols()) +
                            " and " + std::to_string(bv.cols()));
  }
  const std::size_t ra = av.rows();
  std::vector<double> data(av.values().begin(), av.values().end());
  data.insert(data.end(), bv.values().begin(), bv.values().end());
  Tensor out({ra + bv.rows(), av.cols()}, std::move(data));
  return a.tape->push(std::move(out), {a, b}, [a, b, ra](Tape& tp, const Tensor& g) {
    const std::size_t split = ra * g.cols();
    if (tp.requires_grad(a)) {
      Tensor& ga = tp.grad_buffer(a);
      for (std::size_t i = 0; i < split; ++i) ga[i] += g[i];
    }
    if (tp.requires_grad(b)) {
      Tensor& gb = tp.grad_buffer(b);
      for (std::size_t i = split; i < g.size(); ++i) gb[i - split] += g[i];
    }
  });
}

Var slice_rows(Var x, std::size_t begin, std::size_t end) {
  const Tensor& xv = x.value();
  if (begin > end || end > xv.rows()) {
    throw ContractViolation("slice_rows: [" + std::to_string(begin) + "," +
                            std::to_string(end) + ") out of " +
                            std::to_string(xv.rows()) + " rows");
  }
  const std::size_t w = xv.cols();
  std::vector<double> data(xv.data() + begin * w, xv.data() + end * w);
  Tensor out({end - begin, w}, std::move(data));
  return x.tape->push(std::move(out), {x}, [x, begin, w](Tape& tp, const Tensor& g) {
    Tensor& gx = tp.grad_buffer(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[begin * w + i] += g[i];
  });
}

Var reshape(Var x, std::vector<std::size_t> dims) {
  Tensor out = x.value().reshaped(std::move(dims));
  return x.tape->push(std::move(out), {x}, [x](Tape& tp, const Tensor& g) {
    Tensor& gx = tp.grad_buffer(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Var pad_rows(Var x, std::size_t rows) {
  const Tensor& xv = x.value();
  if (rows < xv.rows()) throw ContractViolation("pad_rows: cannot shrink");
  if (rows == xv.rows()) return x;
  Tensor out = Tensor::matrix(rows, xv.cols());
  std::copy(xv.values().begin(), xv.values().end(), out.values().begin());
  return x.tape->push(std::move(out), {x}, [x](Tape& tp, const Tensor& g) {
    Tensor& gx = tp.grad_buffer(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
  });
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  return x.tape->push(Tensor::scalar(s), {x}, [x](Tape& tp, const Tensor& g) {
    Tensor& gx = tp.grad_buffer(x);
    for (double& v : gx.values()) v += g[0];
  });
}

Var cross_entropy(Var log_probs, std::span<const int> targets,
                  double label_smoothing) {
  const Tensor& lp = log_probs.value();
  const std::size_t rows = lp.rows(), classes = lp.cols();
  if (targets.size() != rows) {
    throw ContractViolation("cross_entropy: " + std::to_string(targets.size()) +
                            " targets for " + std::to_string(rows) + " rows");
  }
  if (rows == 0) throw ContractViolation("cross_entropy: empty input");
  for (int y : targets) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw ContractViolation("cross_entropy: target out of range");
    }
  }
  const double s = label_smoothing;
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    double all = 0.0;
    if (s > 0.0) {
      for (double v : lp.row(r)) all += v;
    }
    loss -= (1.0 - s) * lp(r, targets[r]) + s / classes * all;
  }
  loss /= static_cast<double>(rows);
  std::vector<int> ys(targets.begin(), targets.end());
  return log_probs.tape->push(
      Tensor::scalar(loss), {log_probs},
      [log_probs, ys = std::move(ys), s](Tape& tp, const Tensor& g) {
        Tensor& gl = tp.grad_buffer(log_probs);
        const std::size_t rows = gl.rows(), classes = gl.cols();
        const double unit = g[0] / static_cast<double>(rows);
        for (std::size_t r = 0; r < rows; ++r) {
          if (s > 0.0) {
            for (std::size_t c = 0; c < classes; ++c) gl(r, c) -= unit * s / classes;
          }
          gl(r, ys[r]) -= unit * (1.0 - s);
        }
      });
}

Var weighted_sum(std::span<const Var> terms, std::span<const double> weights) {
  if (terms.empty() || terms.size() != weights.size()) {
    throw ContractViolation("weighted_sum: terms/weights mismatch");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    total += weights[i] * terms[i].value().item();
  }
  Tape& t = *terms[0].tape;
  std::vector<Var> ts(terms.begin(), terms.end());
  std::vector<double> ws(weights.begin(), weights.end());
  return t.push(Tensor::scalar(total), std::span<const Var>(terms),
                [ts = std::move(ts), ws = std::move(ws)](Tape& tp, const Tensor& g) {
                  for (std::size_t i = 0; i < ts.size(); ++i) {
                    if (tp.requires_grad(ts[i])) tp.grad_buffer(ts[i])[0] += ws[i] * g[0];
                  }
                });
}

}  // namespace ops
}  // namespace unienc
