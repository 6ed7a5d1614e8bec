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

#include "unienc/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "unienc/ctc.hpp"
#include "unienc/error.hpp"
#include "unienc/eval.hpp"

namespace unienc {

void LossWeights::validate() const {
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) throw ConfigError("loss weights must be >= 0");
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) {
    throw ConfigError("label_smoothing must lie in [0, 1)");
  }
}

void TrainConfig::validate() const {
  if (warmup_steps < 1) throw ConfigError("train.warmup_steps must be >= 1");
  if (!(peak_lr_encoder > 0.0) || !(peak_lr_new_modules > 0.0)) {
    throw ConfigError("peak learning rates must be positive");
  }
  if (batch_frame_budget < 1) throw ConfigError("train.batch_frame_budget must be positive");
  if (max_epochs < 1) throw ConfigError("train.max_epochs must be positive");
  if (early_stop_patience < 1) throw ConfigError("train.early_stop_patience must be positive");
  if (!(grad_clip > 0.0)) throw ConfigError("train.grad_clip must be positive");
}

JointLossTerms joint_loss(Tape& tape, const Model& model, const Tensor& features,
                          std::span<const int> target, const LossWeights& weights,
                          Rng* dropout) {
  if (target.empty()) throw DomainError("joint_loss: empty target");
  const std::size_t frames = model.output_frames(features.rows());
  const std::size_t need = ctc::required_frames(target);
  if (frames < need) throw CtcInfeasible(frames, need);

  Var hidden = model.conv_frontend(tape, features, dropout);
  const EncoderOutput first = model.encode_pass1(tape, hidden, dropout);
  const Var lattice1 = model.ctc_head(tape, first.frame_out);
  const Var ctc1 = ctc::ctc_loss_op(lattice1, target);

  // Teacher forcing: TAE spans come from the forced alignment of the ground
  // truth on the current first-pass lattice. No gradient through the choice.
  const ctc::Alignment forced =
      ctc::viterbi_align(ctc::LogProbLattice(lattice1.value()), target);
  const Var tae =
      model.extract_tae(tape, first.frame_out, ctc::segment_boundaries(forced), dropout);

  const EncoderOutput second = model.encode_pass2(tape, hidden, tae, dropout);
  const Var ctc2 = ctc::ctc_loss_op(model.ctc_head(tape, second.frame_out), target);
  std::vector<int> ce_targets(target.begin(), target.end());
  for (int& y : ce_targets) y -= 1;
  const Var dec =
      ops::cross_entropy(model.ce_head(tape, second.token_out), ce_targets, weights.label_smoothing);

  const std::vector<Var> terms{dec, ctc1, ctc2};
  const std::vector<double> w{1.0, weights.lambda1, weights.lambda2};
  return {ops::weighted_sum(terms, w), dec, ctc1, ctc2};
}

namespace {

JointLossValues values_of(const JointLossTerms& t) {
  return {t.total.value().item(), t.dec.value().item(), t.ctc1.value().item(),
          t.ctc2.value().item()};
}

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

JointLossValues joint_loss_values(const Model& model, const Tensor& features,
                                  std::span<const int> target, const LossWeights& weights) {
  Tape tape(false);
  return values_of(joint_loss(tape, model, features, target, weights));
}

LossAndGrad joint_loss_grad(const Model& model, const Tensor& features,
                            std::span<const int> target, const LossWeights& weights,
                            Rng* dropout) {
  Tape tape(true);
  const JointLossTerms terms = joint_loss(tape, model, features, target, weights, dropout);
  LossAndGrad out;
  out.values = values_of(terms);
  tape.backward(terms.total);
  out.grads = tape.parameter_grads(model.parameters());
  return out;
}

double noam_lr(std::size_t step, std::size_t warmup_steps, double peak) {
  if (step == 0) throw DomainError("noam_lr: step must be >= 1");
  if (warmup_steps == 0) throw DomainError("noam_lr: warmup must be >= 1");
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(warmup_steps);
  return peak * std::min(s / w, std::sqrt(w / s));
}

Adam::Adam(const ParameterStore& store, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : store.all()) {
    state_.first_moment.emplace_back(p.value.dims());
    state_.second_moment.emplace_back(p.value.dims());
  }
}

Adam::Adam(AdamState state, double beta1, double beta2, double eps)
    : state_(std::move(state)), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(ParameterStore& store, const std::vector<Tensor>& grads, double lr_encoder,
                double lr_new) {
  if (grads.size() != store.size() || state_.first_moment.size() != store.size()) {
    throw ContractViolation("adam: gradient count does not match parameters");
  }
  ++state_.step;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(state_.step));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(state_.step));
  for (std::size_t i = 0; i < store.size(); ++i) {
    Parameter& p = store[i];
    const double lr = p.group == ParamGroup::kEncoder ? lr_encoder : lr_new;
    Tensor& m = state_.first_moment[i];
    Tensor& v = state_.second_moment[i];
    const Tensor& g = grads[i];
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * g[k];
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * g[k] * g[k];
      p.value[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_);
    }
  }
}

double clip_global_norm(std::vector<Tensor>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads) {
    for (double v : g.values()) sq += v * v;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double f = max_norm / norm;
    for (auto& g : grads) {
      for (double& v : g.values()) v *= f;
    }
  }
  return norm;
}

std::vector<std::vector<std::size_t>> make_batches(std::span<const data::Utterance> utts,
                                                   std::size_t frame_budget) {
  std::vector<std::size_t> order(utts.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return utts[a].raw_frames() < utts[b].raw_frames();
  });
  std::vector<std::vector<std::size_t>> batches;
  std::size_t used = 0;
  for (std::size_t i : order) {
    const std::size_t f = utts[i].raw_frames();
    if (batches.empty() || used + f > frame_budget) {
      batches.emplace_back();
      used = 0;
    }
    batches.back().push_back(i);
    used += f;
  }
  return batches;
}

std::string EpochRecord::to_json() const {
  std::ostringstream os;
  os.precision(10);
  os << "{\"epoch\":" << epoch << ",\"step\":" << step << ",\"lr\":" << lr
     << ",\"l_dec\":" << l_dec << ",\"l_ctc1\":" << l_ctc1 << ",\"l_ctc2\":" << l_ctc2
     << ",\"valid_wer_greedy\":" << valid_wer_greedy << ",\"valid_loss\":" << valid_loss
     << ",\"skipped\":" << skipped << ",\"seconds\":" << seconds << "}";
  return os.str();
}

double greedy_wer(const Model& model, std::span<const data::Utterance> utts) {
  std::map<std::string, std::vector<int>> refs, hyps;
  for (const auto& u : utts) {
    refs[u.id] = u.transcript;
    hyps[u.id] = decode_greedy_ctc(model, u.features).tokens;
  }
  return eval::wer(refs, hyps, -1).wer;
}

double unienc_wer(const Model& model, std::span<const data::Utterance> utts,
                  const DecodeSchedule& schedule, std::uint64_t seed) {
  std::map<std::string, std::vector<int>> refs, hyps;
  DecodeOptions opts;
  opts.seed = seed;
  for (const auto& u : utts) {
    refs[u.id] = u.transcript;
    hyps[u.id] = decode_utterance(model, u.features, schedule, opts).best.tokens;
  }
  return eval::wer(refs, hyps, -1).wer;
}

FitResult fit(Model& model, std::span<const data::Utterance> train,
              std::span<const data::Utterance> valid, const TrainConfig& config,
              const LossWeights& weights, const FitOptions& options) {
  config.validate();
  weights.validate();
  if (train.empty() || valid.empty()) throw DomainError("fit: datasets must be non-empty");
  const auto started = std::chrono::steady_clock::now();
  ParameterStore& store = model.parameters();

  FitResult result;
  std::size_t step = 0;
  std::size_t first_epoch = 1;
  std::optional<Adam> adam;
  if (options.resume) {
    const Model restored(model.config(), options.resume->params);
    for (std::size_t i = 0; i < store.size(); ++i) store[i].value = restored.parameters()[i].value;
    step = options.resume->step;
    first_epoch = options.resume->epoch + 1;
    if (options.resume->optimizer) {
      adam.emplace(*options.resume->optimizer, config.adam_beta1, config.adam_beta2,
                   config.adam_eps);
    }
  }
  if (!adam) adam.emplace(store, config.adam_beta1, config.adam_beta2, config.adam_eps);

  // Infeasible utterances are reported once and left out.
  std::vector<data::Utterance> usable;
  for (const auto& u : train) {
    if (u.transcript.empty() ||
        ctc::required_frames(u.transcript) > model.output_frames(u.raw_frames())) {
      ++result.skipped_utterances;
      continue;
    }
    usable.push_back(u);
  }
  if (usable.empty()) throw DomainError("fit: no feasible training utterances");
  const auto batches = make_batches(usable, config.batch_frame_budget);

  std::vector<Parameter> best = store.all();
  double best_wer = std::numeric_limits<double>::infinity();
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;

  for (std::size_t epoch = first_epoch; epoch <= config.max_epochs; ++epoch) {
    const auto epoch_start = std::chrono::steady_clock::now();
    Rng order_rng(mix(config.seed ^ mix(epoch)));
    std::vector<std::size_t> order(batches.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform01(order_rng) * static_cast<double>(i));
      std::swap(order[i - 1], order[j]);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.skipped = result.skipped_utterances;
    std::size_t seen = 0;
    for (std::size_t b : order) {
      std::vector<Tensor> grads;
      std::size_t count = 0;
      for (std::size_t idx : batches[b]) {
        const data::Utterance& u = usable[idx];
        Rng drop(mix(config.seed ^ mix(step * 1000003ULL + idx)));
        LossAndGrad lg = joint_loss_grad(model, u.features, u.transcript, weights,
                                         model.config().dropout > 0.0 ? &drop : nullptr);
        if (!std::isfinite(lg.values.total)) {
          result.diverged = true;
          break;
        }
        if (grads.empty()) {
          grads = std::move(lg.grads);
        } else {
          for (std::size_t i = 0; i < grads.size(); ++i) {
            double* dst = grads[i].data();
            const double* src = lg.grads[i].data();
            for (std::size_t k = 0; k < grads[i].size(); ++k) dst[k] += src[k];
          }
        }
        rec.l_dec += lg.values.dec;
        rec.l_ctc1 += lg.values.ctc1;
        rec.l_ctc2 += lg.values.ctc2;
        ++count;
      }
      if (result.diverged) break;
      if (count == 0) continue;
      seen += count;
      for (auto& g : grads) {
        for (double& v : g.values()) v /= static_cast<double>(count);
      }
      clip_global_norm(grads, config.grad_clip);
      ++step;
      rec.lr = noam_lr(step, config.warmup_steps, config.peak_lr_encoder);
      adam->step(store, grads, rec.lr,
                 noam_lr(step, config.warmup_steps, config.peak_lr_new_modules));
    }
    if (result.diverged) break;

    rec.step = step;
    if (seen > 0) {
      rec.l_dec /= static_cast<double>(seen);
      rec.l_ctc1 /= static_cast<double>(seen);
      rec.l_ctc2 /= static_cast<double>(seen);
    }
    rec.valid_wer_greedy = greedy_wer(model, valid);
    std::size_t valid_n = 0;
    for (const auto& u : valid) {
      try {
        rec.valid_loss += joint_loss_values(model, u.features, u.transcript, weights).total;
        ++valid_n;
      } catch (const CtcInfeasible&) {
      }
    }
    if (valid_n) rec.valid_loss /= static_cast<double>(valid_n);
    if (!std::isfinite(rec.valid_loss)) {
      result.diverged = true;
      break;
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_start)
                      .count();
    result.log.push_back(rec);
    result.steps = step;
    if (options.on_epoch) options.on_epoch(rec);
    if (options.last_checkpoint_path) {
      save_checkpoint(*options.last_checkpoint_path, model, &adam->state(), step, epoch);
    }

    if (rec.valid_wer_greedy < best_wer ||
        (rec.valid_wer_greedy == best_wer && rec.valid_loss < best_loss)) {
      best_wer = rec.valid_wer_greedy;
      best_loss = rec.valid_loss;
      best = store.all();
      result.best_epoch = epoch;
      stale = 0;
      if (options.checkpoint_path) {
        save_checkpoint(*options.checkpoint_path, model, &adam->state(), step, epoch);
      }
    } else if (++stale >= config.early_stop_patience) {
      break;
    }
  }

  // Training ends on the best (or, after divergence, last good) weights.
  store.all() = best;
  result.best_valid_wer = best_wer;
  if (config.final_unienc_eval && !result.diverged && result.best_epoch > 0) {
    result.valid_wer_unienc = unienc_wer(model, valid, options.final_schedule, config.seed);
  }
  result.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

}  // namespace unienc
