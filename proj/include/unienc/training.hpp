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
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "unienc/checkpoint.hpp"
#include "unienc/data.hpp"
#include "unienc/decoding.hpp"
#include "unienc/model.hpp"

namespace unienc {

// Weights of the multi-pass objective
//   total = L_dec + lambda1 * L_ctc(pass 1) + lambda2 * L_ctc(pass 2).
struct LossWeights {
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  double label_smoothing = 0.0;

  void validate() const;
};

struct TrainConfig {
  std::size_t warmup_steps = 15000;
  double peak_lr_encoder = 5e-5;
  double peak_lr_new_modules = 1e-3;
  // Raw input frames per batch; 2000 frames of 40 ms is 80 s of audio.
  std::size_t batch_frame_budget = 2000;
  std::size_t max_epochs = 30;
  std::size_t early_stop_patience = 10;
  std::uint64_t seed = 1;
  double grad_clip = 5.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.98;
  double adam_eps = 1e-9;
  // Run the iterative decoder on the validation set once training ends.
  bool final_unienc_eval = true;

  void validate() const;
};

struct JointLossTerms {
  Var total, dec, ctc1, ctc2;
};

struct JointLossValues {
  double total = 0.0, dec = 0.0, ctc1 = 0.0, ctc2 = 0.0;
};

// Pass 1 -> CTC loss and Viterbi alignment against `target` -> TAEs ->
// pass 2 -> CTC loss on the frame rows and CE on the token rows.
// Throws CtcInfeasible when the target does not fit the encoder frames.
JointLossTerms joint_loss(Tape& tape, const Model& model, const Tensor& features,
                          std::span<const int> target, const LossWeights& weights,
                          Rng* dropout = nullptr);

// Loss values without recording gradients (dropout off).
JointLossValues joint_loss_values(const Model& model, const Tensor& features,
                                  std::span<const int> target, const LossWeights& weights);

struct LossAndGrad {
  JointLossValues values;
  std::vector<Tensor> grads;  // aligned with model.parameters()
};
LossAndGrad joint_loss_grad(const Model& model, const Tensor& features,
                            std::span<const int> target, const LossWeights& weights,
                            Rng* dropout = nullptr);

// peak * min(step / warmup, sqrt(warmup / step)); maximal (== peak) at
// step == warmup. Throws DomainError for step 0.
double noam_lr(std::size_t step, std::size_t warmup_steps, double peak);

// Adam with one learning rate per parameter group.
class Adam {
 public:
  Adam(const ParameterStore& store, double beta1, double beta2, double eps);
  explicit Adam(AdamState state, double beta1 = 0.9, double beta2 = 0.98, double eps = 1e-9);

  void step(ParameterStore& store, const std::vector<Tensor>& grads, double lr_encoder,
            double lr_new);
  const AdamState& state() const { return state_; }

 private:
  AdamState state_;
  double beta1_, beta2_, eps_;
};

// Rescales `grads` in place to global L2 norm <= max_norm; returns the norm
// before clipping.
double clip_global_norm(std::vector<Tensor>& grads, double max_norm);

// Length-sorted batches whose raw frame totals stay within `frame_budget`
// (a single longer utterance still forms its own batch).
std::vector<std::vector<std::size_t>> make_batches(std::span<const data::Utterance> utts,
                                                   std::size_t frame_budget);

struct EpochRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double lr = 0.0;  // encoder-group rate at the last step
  double l_dec = 0.0, l_ctc1 = 0.0, l_ctc2 = 0.0;
  double valid_wer_greedy = 0.0;
  double valid_loss = 0.0;
  std::size_t skipped = 0;
  double seconds = 0.0;

  // One JSON object on a single line.
  std::string to_json() const;
};

struct FitOptions {
  std::function<void(const EpochRecord&)> on_epoch;
  // Best checkpoint is written here when set.
  std::optional<std::filesystem::path> checkpoint_path;
  // Rewritten after every epoch when set.
  std::optional<std::filesystem::path> last_checkpoint_path;
  // Resume model weights, optimizer moments and counters.
  std::optional<Checkpoint> resume;
  DecodeSchedule final_schedule;
};

struct FitResult {
  std::vector<EpochRecord> log;
  std::size_t best_epoch = 0;
  double best_valid_wer = 0.0;
  std::size_t steps = 0;
  std::size_t skipped_utterances = 0;
  bool diverged = false;
  std::optional<double> valid_wer_unienc;
  double seconds = 0.0;
};

// Trains `model` in place; on return it holds the best parameters seen
// (lowest valid greedy-CTC WER, ties broken by valid loss).
FitResult fit(Model& model, std::span<const data::Utterance> train,
              std::span<const data::Utterance> valid, const TrainConfig& config,
              const LossWeights& weights, const FitOptions& options = {});

// Corpus WER of greedy CTC or iterative decoding over `utts`.
double greedy_wer(const Model& model, std::span<const data::Utterance> utts);
double unienc_wer(const Model& model, std::span<const data::Utterance> utts,
                  const DecodeSchedule& schedule, std::uint64_t seed);

}  // namespace unienc
