// include/cfrp/trainer.h

// Copyright 2026  The CFRP Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef CFRP_TRAINER_H_
#define CFRP_TRAINER_H_

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "cfrp/autodiff.h"
#include "cfrp/checkpoint.h"
#include "cfrp/config.h"
#include "cfrp/encoder.h"
#include "cfrp/heads.h"
#include "cfrp/synth.h"

namespace cfrp {

// ---------------------------------------------------------------------------
// Optimizer.

struct SgdConfig {
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double clip_norm = 0.0;  // global gradient norm clip; 0 disables
  void Validate() const;
};

/// Momentum buffers keyed by parameter name.
using MomentumState = std::map<std::string, Tensor>;

/// v <- momentum * v + g + wd * p;  p <- p - lr * v.
/// Parameters without a gradient entry are treated as having zero gradient.
/// A non-finite gradient raises NumericError before anything is modified.
void SgdStep(ParameterSet &params, const Gradients &grads, MomentumState &state,
             const SgdConfig &config, double lr);

double GlobalNorm(const Gradients &grads);
/// Rescales so that the global norm is at most max_norm; returns the norm
/// before clipping.
double ClipGradients(Gradients &grads, double max_norm);

// ---------------------------------------------------------------------------
// Learning-rate schedules.

enum class ScheduleKind { kConstant, kInverseSqrt, kStepDecay, kPlateau };

ScheduleKind ParseScheduleKind(const std::string &name);
std::string ScheduleKindName(ScheduleKind kind);

struct ScheduleConfig {
  ScheduleKind kind = ScheduleKind::kConstant;
  double base_lr = 0.01;  // constant, step-decay and plateau
  // Inverse square root: peak = 1 / (lambda * sqrt(warmup)).
  double lambda = 400.0;
  std::size_t warmup = 16000;
  // Inverse square root, optional post-warmup stages: from fix_epoch on the
  // rate is frozen, then multiplied by `factor` every `interval` epochs,
  // `n_decays` times. fix_epoch = 0 disables the stages.
  std::size_t fix_epoch = 0;
  // Step decay: hold for `hold` epochs, then multiply by `factor` every
  // `interval` epochs, `n_decays` times.
  std::size_t hold = 0;
  std::size_t interval = 20;
  std::size_t n_decays = 1;
  double factor = 0.1;
  // Plateau: decay when the validation loss has not improved by a relative
  // min_improvement for `patience` evaluations.
  std::size_t patience = 3;
  double min_improvement = 1e-3;

  void Validate() const;
  double peak() const;
  void ToConfig(Config &cfg, const std::string &prefix) const;
  static ScheduleConfig FromConfig(const Config &cfg, const std::string &prefix,
                                   const ScheduleConfig &defaults);
};

double InverseSqrtRate(std::size_t step, double peak, std::size_t warmup);
double StepDecayRate(std::size_t epoch, double base, std::size_t hold, std::size_t interval,
                     std::size_t n_decays, double factor);

class LrScheduler {
 public:
  explicit LrScheduler(const ScheduleConfig &config);

  /// Rate for the next update. Steps are 1-based; epochs 0-based.
  double Rate() const;
  void BeginEpoch(std::size_t epoch);
  void Step() { ++step_; }
  /// Feeds a validation loss to the plateau rule; other kinds ignore it.
  void EndEpoch(double validation_loss);

  std::size_t step() const { return step_; }
  std::size_t epoch() const { return epoch_; }

  void Save(Checkpoint &ckpt, const std::string &prefix) const;
  void Load(const Checkpoint &ckpt, const std::string &prefix);

 private:
  ScheduleConfig config_;
  std::size_t step_ = 0, epoch_ = 0;
  double fixed_rate_ = 0.0;  // inverse-sqrt rate frozen at fix_epoch
  double plateau_scale_ = 1.0;
  double best_ = 0.0;
  bool has_best_ = false;
  std::size_t bad_evals_ = 0;
};

/// Tab-separated training log: epoch, step, lr, train_loss, val_metric.
class TrainingLog {
 public:
  struct Row {
    std::size_t epoch, step;
    double lr, train_loss, val_metric;
  };
  void Add(const Row &row, std::ostream *echo = nullptr);
  const std::vector<Row> &rows() const { return rows_; }
  std::string ToString() const;
  static std::string FormatRow(const Row &row);

 private:
  std::vector<Row> rows_;
};

// ---------------------------------------------------------------------------
// CTC pretraining.

struct PretrainConfig {
  SgdConfig sgd{0.9, 1e-4, 5.0};
  ScheduleConfig schedule;
  std::size_t epochs = 20;
  std::size_t batch_size = 8;
  std::size_t eval_utterances = 0;  // held-out utterances scored per epoch; 0 = all
  int threads = 1;
  std::uint64_t seed = 1;

  void Validate() const;
};

class CtcPretrainer {
 public:
  CtcPretrainer(Encoder &encoder, const Corpus &train, const PretrainConfig &config);

  /// One update on the given training utterances; returns the mean loss.
  double TrainBatch(const std::vector<std::size_t> &utterances);
  /// Mean loss without updating anything.
  double BatchLoss(const std::vector<std::size_t> &utterances) const;
  /// Runs one epoch of shuffled batches; returns the mean training loss.
  double TrainEpoch();

  std::size_t epoch() const { return scheduler_.epoch(); }
  const LrScheduler &scheduler() const { return scheduler_; }

  /// Optimizer state: momentum, step and epoch counters, schedule state.
  void SaveState(Checkpoint &ckpt) const;
  void LoadState(const Checkpoint &ckpt);

 private:
  Gradients BatchGradients(const std::vector<std::size_t> &utterances, double *loss) const;

  Encoder &encoder_;
  const Corpus &train_;
  PretrainConfig config_;
  LrScheduler scheduler_;
  MomentumState momentum_;
  std::size_t next_epoch_ = 0;
};

/// Greedy-decode token error rate over the first `limit` utterances
/// (all when limit is 0): total edits / total reference length.
double CorpusTokenErrorRate(const Encoder &encoder, const Corpus &corpus, std::size_t limit = 0,
                            int threads = 1);

struct PretrainResult {
  TrainingLog log;
  double best_ter = 1.0;
  std::size_t best_epoch = 0;
  std::unique_ptr<ParameterSet> best_params;  // snapshot at best_epoch
};

/// Full pretraining run; keeps the parameters with the lowest held-out TER.
/// On a non-finite loss the encoder is restored to the best snapshot before
/// the NumericError propagates.
PretrainResult Pretrain(Encoder &encoder, const Corpus &train, const Corpus &heldout,
                        const PretrainConfig &config, std::ostream *echo = nullptr);

// ---------------------------------------------------------------------------
// Task heads on frozen representations.

/// Turns raw frames into head inputs. With an encoder, runs it frozen and
/// returns the layers the tap needs; without one (baseline), stacks raw
/// frames by the same factor so both see the same frame rate.
class FeatureSource {
 public:
  FeatureSource(const Encoder *encoder, const TapSpec &tap, std::size_t stack_factor,
                std::size_t raw_dim);
  static FeatureSource Baseline(std::size_t stack_factor, std::size_t raw_dim);

  bool baseline() const { return encoder_ == nullptr; }
  const TapSpec &tap() const { return tap_; }
  /// Layers consumed by a learned mix; 0 for fixed taps and the baseline.
  std::size_t mix_layers() const;
  std::size_t output_dim() const;

  /// Frozen inputs for one segment. For learned mixing these are the layer
  /// states, otherwise a single tapped tensor.
  std::vector<Tensor> Extract(const Tensor &frames) const;
  /// Combines extracted inputs on a tape (applies the learned mix).
  Var Combine(Tape &tape, const std::vector<Tensor> &inputs, const LayerMixer *mixer) const;

 private:
  const Encoder *encoder_;
  TapSpec tap_;
  std::size_t stack_factor_, raw_dim_;
};

enum class Task { kLanguage, kSpeaker };

struct HeadTrainConfig {
  SgdConfig sgd{0.9, 1e-4, 0.0};
  ScheduleConfig schedule;
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  std::size_t seg_len = 100;
  double overlap = 0.5;
  std::size_t per_class_min = 100, per_class_max = 150;
  double val_fraction = 0.1;  // utterances per class held out for validation
  int threads = 1;
  std::uint64_t seed = 1;

  void Validate() const;
};

/// A head with the uniform interface used by training: logits for one
/// segment of combined inputs.
class TaskHead {
 public:
  virtual ~TaskHead() = default;
  virtual ParameterSet &params() = 0;
  virtual const LayerMixer *mixer() const = 0;
  virtual Var Logits(Tape &tape, Var reps) const = 0;
};

class LrTaskHead : public TaskHead {
 public:
  explicit LrTaskHead(LrHead &head) : head_(head) {}
  ParameterSet &params() override { return head_.params(); }
  const LayerMixer *mixer() const override { return head_.mixer(); }
  Var Logits(Tape &tape, Var reps) const override { return head_.Forward(tape, reps); }

 private:
  LrHead &head_;
};

class SrTaskHead : public TaskHead {
 public:
  explicit SrTaskHead(SrHead &head) : head_(head) {}
  ParameterSet &params() override { return head_.params(); }
  const LayerMixer *mixer() const override { return head_.mixer(); }
  Var Logits(Tape &tape, Var reps) const override { return head_.Forward(tape, reps).logits; }

 private:
  SrHead &head_;
};

struct HeadTrainResult {
  TrainingLog log;
  std::vector<std::vector<std::size_t>> epoch_samples;  // segment indices per epoch
};

/// Class labels of a task for training (language id or training speaker id).
int TaskLabel(Task task, const Utterance &u);

/// Trains `head` with cross-entropy on segments of `train`. The encoder behind
/// `source` is only read. The validation metric is the held-out mean loss.
HeadTrainResult TrainHead(Task task, TaskHead &head, const FeatureSource &source,
                          const Corpus &train, std::size_t n_classes,
                          const HeadTrainConfig &config, std::ostream *echo = nullptr);

}  // namespace cfrp

#endif  // CFRP_TRAINER_H_
