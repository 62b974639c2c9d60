// src/trainer.cc

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

#include "cfrp/trainer.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "cfrp/ctc.h"
#include "cfrp/error.h"
#include "cfrp/ops.h"
#include "cfrp/parallel.h"
#include "cfrp/random.h"

namespace cfrp {

void SgdConfig::Validate() const {
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("sgd: momentum must be in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("sgd: weight decay must be >= 0");
  if (!(clip_norm >= 0.0)) throw ConfigError("sgd: clip norm must be >= 0");
}

double GlobalNorm(const Gradients &grads) {
  double total = 0.0;
  for (const auto &[name, g] : grads)
    for (std::size_t i = 0; i < g.size(); ++i) total += g[i] * g[i];
  return std::sqrt(total);
}

double ClipGradients(Gradients &grads, double max_norm) {
  double norm = GlobalNorm(grads);
  if (max_norm > 0.0 && norm > max_norm) {
    double scale = max_norm / norm;
    for (auto &[name, g] : grads)
      for (std::size_t i = 0; i < g.size(); ++i) g[i] *= scale;
  }
  return norm;
}

void SgdStep(ParameterSet &params, const Gradients &grads, MomentumState &state,
             const SgdConfig &config, double lr) {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("sgd: learning rate must be positive");
  for (const auto &[name, g] : grads) {
    if (!params.Contains(name)) throw ContractError("sgd: gradient for unknown parameter " + name);
    if (g.shape() != params.Get(name).value.shape())
      throw DimensionError("sgd: gradient shape mismatch for " + name);
    if (!g.AllFinite()) throw NumericError("sgd: non-finite gradient for parameter " + name);
  }
  for (auto &[name, p] : params) {
    Tensor &v = state[name];
    if (v.shape() != p.value.shape()) v = Tensor(p.value.shape(), 0.0);
    auto it = grads.find(name);
    const Real *g = it == grads.end() ? nullptr : it->second.data();
    Real *w = p.value.data();
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = config.momentum * v[i] + (g ? g[i] : 0.0) + config.weight_decay * w[i];
      w[i] -= lr * v[i];
    }
  }
}

ScheduleKind ParseScheduleKind(const std::string &name) {
  if (name == "constant") return ScheduleKind::kConstant;
  if (name == "inverse-sqrt") return ScheduleKind::kInverseSqrt;
  if (name == "step-decay") return ScheduleKind::kStepDecay;
  if (name == "plateau") return ScheduleKind::kPlateau;
  throw ConfigError("unknown schedule '" + name + "'");
}

std::string ScheduleKindName(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::kConstant: return "constant";
    case ScheduleKind::kInverseSqrt: return "inverse-sqrt";
    case ScheduleKind::kStepDecay: return "step-decay";
    case ScheduleKind::kPlateau: return "plateau";
  }
  return "?";
}

void ScheduleConfig::Validate() const {
  if (kind == ScheduleKind::kInverseSqrt) {
    if (warmup < 1) throw ConfigError("schedule: warmup must be >= 1");
    if (!(lambda > 0.0)) throw ConfigError("schedule: lambda must be > 0");
  } else if (!(base_lr > 0.0)) {
    throw ConfigError("schedule: base_lr must be > 0");
  }
  if (!(factor > 0.0 && factor < 1.0)) throw ConfigError("schedule: decay factor must be in (0, 1)");
  if (interval < 1) throw ConfigError("schedule: interval must be >= 1");
  if (!(min_improvement >= 0.0)) throw ConfigError("schedule: min_improvement must be >= 0");
}

double ScheduleConfig::peak() const {
  return 1.0 / (lambda * std::sqrt(static_cast<double>(warmup)));
}

void ScheduleConfig::ToConfig(Config &cfg, const std::string &p) const {
  cfg.Set(p + "kind", ScheduleKindName(kind));
  cfg.Set(p + "base_lr", base_lr);
  cfg.Set(p + "lambda", lambda);
  cfg.Set(p + "warmup", std::uint64_t{warmup});
  cfg.Set(p + "fix_epoch", std::uint64_t{fix_epoch});
  cfg.Set(p + "hold", std::uint64_t{hold});
  cfg.Set(p + "interval", std::uint64_t{interval});
  cfg.Set(p + "n_decays", std::uint64_t{n_decays});
  cfg.Set(p + "factor", factor);
  cfg.Set(p + "patience", std::uint64_t{patience});
  cfg.Set(p + "min_improvement", min_improvement);
}

ScheduleConfig ScheduleConfig::FromConfig(const Config &cfg, const std::string &p,
                                          const ScheduleConfig &d) {
  ScheduleConfig s;
  s.kind = ParseScheduleKind(cfg.GetString(p + "kind", ScheduleKindName(d.kind)));
  s.base_lr = cfg.GetDouble(p + "base_lr", d.base_lr);
  s.lambda = cfg.GetDouble(p + "lambda", d.lambda);
  s.warmup = cfg.GetUint(p + "warmup", d.warmup);
  s.fix_epoch = cfg.GetUint(p + "fix_epoch", d.fix_epoch);
  s.hold = cfg.GetUint(p + "hold", d.hold);
  s.interval = cfg.GetUint(p + "interval", d.interval);
  s.n_decays = cfg.GetUint(p + "n_decays", d.n_decays);
  s.factor = cfg.GetDouble(p + "factor", d.factor);
  s.patience = cfg.GetUint(p + "patience", d.patience);
  s.min_improvement = cfg.GetDouble(p + "min_improvement", d.min_improvement);
  s.Validate();
  return s;
}

double InverseSqrtRate(std::size_t step, double peak, std::size_t warmup) {
  double s = static_cast<double>(std::max<std::size_t>(step, 1));
  double w = static_cast<double>(warmup);
  return peak * std::min(s / w, std::sqrt(w / s));
}

double StepDecayRate(std::size_t epoch, double base, std::size_t hold, std::size_t interval,
                     std::size_t n_decays, double factor) {
  if (epoch < hold) return base;
  std::size_t k = std::min(n_decays, (epoch - hold) / interval + 1);
  return base * std::pow(factor, static_cast<double>(k));
}

LrScheduler::LrScheduler(const ScheduleConfig &config) : config_(config) { config_.Validate(); }

double LrScheduler::Rate() const {
  switch (config_.kind) {
    case ScheduleKind::kConstant:
      return config_.base_lr;
    case ScheduleKind::kInverseSqrt: {
      if (config_.fix_epoch > 0 && epoch_ >= config_.fix_epoch) {
        std::size_t k = std::min(config_.n_decays, (epoch_ - config_.fix_epoch) / config_.interval);
        return fixed_rate_ * std::pow(config_.factor, static_cast<double>(k));
      }
      return InverseSqrtRate(step_ + 1, config_.peak(), config_.warmup);
    }
    case ScheduleKind::kStepDecay:
      return StepDecayRate(epoch_, config_.base_lr, config_.hold, config_.interval,
                           config_.n_decays, config_.factor);
    case ScheduleKind::kPlateau:
      return config_.base_lr * plateau_scale_;
  }
  return config_.base_lr;
}

void LrScheduler::BeginEpoch(std::size_t epoch) {
  if (config_.kind == ScheduleKind::kInverseSqrt && config_.fix_epoch > 0 &&
      epoch >= config_.fix_epoch && (epoch_ < config_.fix_epoch || fixed_rate_ == 0.0))
    fixed_rate_ = InverseSqrtRate(step_ + 1, config_.peak(), config_.warmup);
  epoch_ = epoch;
}

void LrScheduler::EndEpoch(double validation_loss) {
  if (config_.kind != ScheduleKind::kPlateau) return;
  if (!has_best_ || validation_loss < best_ * (1.0 - config_.min_improvement)) {
    best_ = validation_loss;
    has_best_ = true;
    bad_evals_ = 0;
    return;
  }
  if (++bad_evals_ >= config_.patience) {
    plateau_scale_ *= config_.factor;
    bad_evals_ = 0;
  }
}

void LrScheduler::Save(Checkpoint &ckpt, const std::string &prefix) const {
  ckpt.tensors[prefix + "scheduler"] =
      Tensor::Vector({static_cast<Real>(step_), static_cast<Real>(epoch_), fixed_rate_,
                      plateau_scale_, best_, has_best_ ? 1.0 : 0.0, static_cast<Real>(bad_evals_)});
}

void LrScheduler::Load(const Checkpoint &ckpt, const std::string &prefix) {
  auto it = ckpt.tensors.find(prefix + "scheduler");
  if (it == ckpt.tensors.end() || it->second.size() != 7)
    throw ConfigError("checkpoint has no scheduler state");
  const Tensor &s = it->second;
  step_ = static_cast<std::size_t>(s[0]);
  epoch_ = static_cast<std::size_t>(s[1]);
  fixed_rate_ = s[2];
  plateau_scale_ = s[3];
  best_ = s[4];
  has_best_ = s[5] != 0.0;
  bad_evals_ = static_cast<std::size_t>(s[6]);
}

std::string TrainingLog::FormatRow(const Row &row) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%zu\t%zu\t%.6g\t%.6f\t%.6f", row.epoch, row.step, row.lr,
                row.train_loss, row.val_metric);
  return buf;
}

void TrainingLog::Add(const Row &row, std::ostream *echo) {
  rows_.push_back(row);
  if (echo) *echo << FormatRow(row) << std::endl;
}

std::string TrainingLog::ToString() const {
  std::string out;
  for (const Row &r : rows_) out += FormatRow(r) + "\n";
  return out;
}

// ---------------------------------------------------------------------------

void PretrainConfig::Validate() const {
  sgd.Validate();
  schedule.Validate();
  if (epochs < 1) throw ConfigError("pretrain: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("pretrain: batch size must be >= 1");
  if (threads < 1) throw ConfigError("pretrain: threads must be >= 1");
}

namespace {

// Sums per-example gradients in example order, so the result does not
// depend on how examples were spread over threads.
Gradients SumGradients(std::vector<Gradients> &parts, double scale) {
  Gradients total;
  for (Gradients &g : parts) {
    for (auto &[name, t] : g) {
      auto it = total.find(name);
      if (it == total.end()) {
        total.emplace(name, std::move(t));
      } else {
        Real *dst = it->second.data();
        const Real *src = t.data();
        for (std::size_t i = 0; i < t.size(); ++i) dst[i] += src[i];
      }
    }
  }
  for (auto &[name, t] : total)
    for (std::size_t i = 0; i < t.size(); ++i) t[i] *= scale;
  return total;
}

void SaveMomentum(const MomentumState &m, Checkpoint &ckpt) {
  for (const auto &[name, t] : m) ckpt.tensors["momentum/" + name] = t;
}

void LoadMomentum(MomentumState &m, const Checkpoint &ckpt) {
  m.clear();
  const std::string prefix = "momentum/";
  for (const auto &[name, t] : ckpt.tensors)
    if (name.compare(0, prefix.size(), prefix) == 0) m[name.substr(prefix.size())] = t;
}

}  // namespace

CtcPretrainer::CtcPretrainer(Encoder &encoder, const Corpus &train, const PretrainConfig &config)
    : encoder_(encoder), train_(train), config_(config), scheduler_(config.schedule) {
  config_.Validate();
  if (train.utterances.empty()) throw DataError("pretrain: empty training corpus");
  if (train.vocab_size != encoder.config().vocab_size)
    throw ConfigError("pretrain: corpus has " + std::to_string(train.vocab_size) +
                      " labels but the encoder expects " +
                      std::to_string(encoder.config().vocab_size));
}

Gradients CtcPretrainer::BatchGradients(const std::vector<std::size_t> &utterances,
                                        double *loss) const {
  const std::size_t n = utterances.size();
  std::vector<Gradients> parts(n);
  std::vector<double> losses(n);
  ParallelFor(n, config_.threads, [&](std::size_t i) {
    const Utterance &u = train_.utterances.at(utterances[i]);
    Tape tape;
    Encoder::Output out = encoder_.Encode(tape, u.features);
    Var l = CtcLoss(out.logits, u.labels);
    losses[i] = l.value().item();
    if (!std::isfinite(losses[i])) throw NumericError("pretrain: non-finite CTC loss on " + u.id);
    tape.Backward(l);
    parts[i] = tape.ParamGrads();
  });
  double total = 0.0;
  for (double l : losses) total += l;
  *loss = total / static_cast<double>(n);
  return SumGradients(parts, 1.0 / static_cast<double>(n));
}

double CtcPretrainer::TrainBatch(const std::vector<std::size_t> &utterances) {
  double loss = 0.0;
  Gradients grads = BatchGradients(utterances, &loss);
  ClipGradients(grads, config_.sgd.clip_norm);
  SgdStep(encoder_.params(), grads, momentum_, config_.sgd, scheduler_.Rate());
  scheduler_.Step();
  return loss;
}

double CtcPretrainer::BatchLoss(const std::vector<std::size_t> &utterances) const {
  std::vector<double> losses(utterances.size());
  ParallelFor(utterances.size(), config_.threads, [&](std::size_t i) {
    const Utterance &u = train_.utterances.at(utterances[i]);
    Tape tape;
    losses[i] = CtcLoss(encoder_.Encode(tape, u.features, false).logits, u.labels).value().item();
  });
  return std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(losses.size());
}

double CtcPretrainer::TrainEpoch() {
  const std::size_t epoch = next_epoch_;
  scheduler_.BeginEpoch(epoch);
  std::vector<std::size_t> order(train_.utterances.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(DeriveSeed(DeriveSeed(config_.seed, "pretrain-order"), epoch));
  std::shuffle(order.begin(), order.end(), rng);
  double total = 0.0;
  std::size_t batches = 0;
  for (std::size_t b = 0; b < order.size(); b += config_.batch_size) {
    std::vector<std::size_t> batch(order.begin() + static_cast<long>(b),
                                   order.begin() + static_cast<long>(std::min(order.size(), b + config_.batch_size)));
    total += TrainBatch(batch);
    ++batches;
  }
  ++next_epoch_;
  return total / static_cast<double>(batches);
}

void CtcPretrainer::SaveState(Checkpoint &ckpt) const {
  SaveMomentum(momentum_, ckpt);
  scheduler_.Save(ckpt, "optimizer/");
  ckpt.tensors["optimizer/next_epoch"] = Tensor::Scalar(static_cast<Real>(next_epoch_));
}

void CtcPretrainer::LoadState(const Checkpoint &ckpt) {
  LoadMomentum(momentum_, ckpt);
  scheduler_.Load(ckpt, "optimizer/");
  auto it = ckpt.tensors.find("optimizer/next_epoch");
  if (it == ckpt.tensors.end()) throw ConfigError("checkpoint has no optimizer epoch");
  next_epoch_ = static_cast<std::size_t>(it->second.item());
}

double CorpusTokenErrorRate(const Encoder &encoder, const Corpus &corpus, std::size_t limit,
                            int threads) {
  std::size_t n = limit == 0 ? corpus.utterances.size() : std::min(limit, corpus.utterances.size());
  if (n == 0) throw DataError("ter: empty corpus");
  std::vector<std::size_t> edits(n), lengths(n);
  ParallelFor(n, threads, [&](std::size_t i) {
    const Utterance &u = corpus.utterances[i];
    Tape tape;
    Tensor logits = encoder.Encode(tape, u.features, false).logits.value();
    edits[i] = EditDistance(GreedyDecode(logits), u.labels);
    lengths[i] = u.labels.size();
  });
  double e = std::accumulate(edits.begin(), edits.end(), 0.0);
  double l = std::accumulate(lengths.begin(), lengths.end(), 0.0);
  return e / l;
}

PretrainResult Pretrain(Encoder &encoder, const Corpus &train, const Corpus &heldout,
                        const PretrainConfig &config, std::ostream *echo) {
  PretrainResult result;
  result.best_params = std::make_unique<ParameterSet>(encoder.params().Clone());
  CtcPretrainer trainer(encoder, train, config);
  bool have_best = false;
  for (std::size_t e = 0; e < config.epochs; ++e) {
    double loss = 0.0;
    try {
      loss = trainer.TrainEpoch();
    } catch (const NumericError &) {
      encoder.LoadValues(*result.best_params);
      throw;
    }
    double ter = CorpusTokenErrorRate(encoder, heldout, config.eval_utterances, config.threads);
    result.log.Add({e + 1, trainer.scheduler().step(), trainer.scheduler().Rate(), loss, ter}, echo);
    if (!have_best || ter < result.best_ter) {
      have_best = true;
      result.best_ter = ter;
      result.best_epoch = e + 1;
      result.best_params = std::make_unique<ParameterSet>(encoder.params().Clone());
    }
  }
  encoder.LoadValues(*result.best_params);
  return result;
}

// ---------------------------------------------------------------------------

FeatureSource::FeatureSource(const Encoder *encoder, const TapSpec &tap, std::size_t stack_factor,
                             std::size_t raw_dim)
    : encoder_(encoder), tap_(tap), stack_factor_(stack_factor), raw_dim_(raw_dim) {
  if (stack_factor_ < 1) throw ConfigError("features: stack factor must be >= 1");
  if (encoder_) {
    if (encoder_->config().input_dim != raw_dim)
      throw ConfigError("features: encoder expects " + std::to_string(encoder_->config().input_dim) +
                        "-dim frames, corpus has " + std::to_string(raw_dim));
    tap_.Validate(encoder_->config().retained_layers());
  }
}

FeatureSource FeatureSource::Baseline(std::size_t stack_factor, std::size_t raw_dim) {
  return FeatureSource(nullptr, TapSpec::Single(1), stack_factor, raw_dim);
}

std::size_t FeatureSource::mix_layers() const {
  return !baseline() && tap_.mode == TapMode::kLearnedMix ? tap_.layers.size() : 0;
}

std::size_t FeatureSource::output_dim() const {
  return baseline() ? stack_factor_ * raw_dim_ : tap_.OutputDim(encoder_->config().d_model);
}

std::vector<Tensor> FeatureSource::Extract(const Tensor &frames) const {
  if (baseline()) return {StackFrames(frames, stack_factor_)};
  std::vector<Tensor> states = encoder_->ExtractStates(frames);
  if (tap_.mode == TapMode::kLearnedMix) {
    std::vector<Tensor> out;
    for (int l : tap_.layers) out.push_back(states[l - 1]);
    return out;
  }
  Tape tape;
  std::vector<Var> vars;
  for (const Tensor &s : states) vars.push_back(tape.Constant(s));
  return {Tap(tape, vars, tap_, nullptr, false).value()};
}

Var FeatureSource::Combine(Tape &tape, const std::vector<Tensor> &inputs,
                           const LayerMixer *mixer) const {
  if (mix_layers() == 0) return tape.Constant(inputs.at(0));
  std::vector<Var> vars;
  for (const Tensor &t : inputs) vars.push_back(tape.Constant(t));
  // Inputs are already the tapped layers, renumbered from 1.
  return Tap(tape, vars, TapSpec::LearnedMix(1, static_cast<int>(vars.size())), mixer);
}

void HeadTrainConfig::Validate() const {
  sgd.Validate();
  schedule.Validate();
  if (epochs < 1) throw ConfigError("head training: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("head training: batch size must be >= 1");
  if (seg_len < 1) throw ConfigError("head training: seg_len must be >= 1");
  if (!(overlap >= 0.0 && overlap < 1.0)) throw ConfigError("head training: overlap must be in [0, 1)");
  if (per_class_min < 1 || per_class_min > per_class_max)
    throw ConfigError("head training: bad per-class range");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0))
    throw ConfigError("head training: val_fraction must be in [0, 1)");
  if (threads < 1) throw ConfigError("head training: threads must be >= 1");
}

int TaskLabel(Task task, const Utterance &u) {
  return task == Task::kLanguage ? u.language : u.speaker;
}

HeadTrainResult TrainHead(Task task, TaskHead &head, const FeatureSource &source,
                          const Corpus &train, std::size_t n_classes,
                          const HeadTrainConfig &config, std::ostream *echo) {
  config.Validate();
  if (train.feature_dim == 0 || train.utterances.empty()) throw DataError("head training: empty corpus");
  if (source.mix_layers() > 0 && head.mixer() == nullptr)
    throw ConfigError("head training: learned-mix tap needs a head with a layer mixer");

  // Hold out a deterministic subset of each class's utterances.
  std::vector<std::vector<std::size_t>> by_class(n_classes);
  for (std::size_t i = 0; i < train.utterances.size(); ++i) {
    int c = TaskLabel(task, train.utterances[i]);
    if (c < 0 || static_cast<std::size_t>(c) >= n_classes)
      throw DataError("head training: class " + std::to_string(c) + " of " +
                      train.utterances[i].id + " out of range");
    by_class[c].push_back(i);
  }
  std::vector<bool> is_val(train.utterances.size(), false);
  Rng split_rng(DeriveSeed(config.seed, "validation-split"));
  for (auto &members : by_class) {
    std::size_t k = static_cast<std::size_t>(std::floor(config.val_fraction * members.size()));
    std::vector<std::size_t> shuffled = members;
    std::shuffle(shuffled.begin(), shuffled.end(), split_rng);
    for (std::size_t j = 0; j < k && j + 1 < shuffled.size(); ++j) is_val[shuffled[j]] = true;
  }

  std::vector<Segment> train_segs, val_segs;
  for (std::size_t i = 0; i < train.utterances.size(); ++i) {
    bool val = is_val[i];
    for (const Span &s : SegmentFrames(train.utterances[i].frames(), config.seg_len,
                                       val ? 0.0 : config.overlap))
      (val ? val_segs : train_segs).push_back({i, s});
  }
  auto extract = [&](const std::vector<Segment> &segs) {
    std::vector<std::vector<Tensor>> cache(segs.size());
    ParallelFor(segs.size(), config.threads,
                [&](std::size_t i) { cache[i] = source.Extract(SegmentFeatures(train, segs[i])); });
    return cache;
  };
  std::vector<std::vector<Tensor>> train_inputs = extract(train_segs), val_inputs = extract(val_segs);
  auto label_of = [&](const Segment &s) { return TaskLabel(task, train.utterances[s.utterance]); };
  std::vector<int> train_classes;
  for (const Segment &s : train_segs) train_classes.push_back(label_of(s));

  auto example = [&](const std::vector<Tensor> &inputs, int label, Gradients *grads) {
    Tape tape;
    Var logits = head.Logits(tape, source.Combine(tape, inputs, head.mixer()));
    Var loss = CrossEntropy(logits, static_cast<std::size_t>(label));
    double value = loss.value().item();
    if (!std::isfinite(value)) throw NumericError("head training: non-finite loss");
    if (grads) {
      tape.Backward(loss);
      *grads = tape.ParamGrads();
    }
    return value;
  };

  HeadTrainResult result;
  LrScheduler scheduler(config.schedule);
  MomentumState momentum;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    scheduler.BeginEpoch(epoch);
    std::vector<std::size_t> order = BalancedEpoch(train_classes, n_classes, config.per_class_min,
                                                   config.per_class_max, config.seed, epoch);
    double total = 0.0;
    for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
      std::size_t n = std::min(config.batch_size, order.size() - b);
      std::vector<Gradients> parts(n);
      std::vector<double> losses(n);
      ParallelFor(n, config.threads, [&](std::size_t i) {
        std::size_t s = order[b + i];
        losses[i] = example(train_inputs[s], train_classes[s], &parts[i]);
      });
      Gradients grads = SumGradients(parts, 1.0 / static_cast<double>(n));
      ClipGradients(grads, config.sgd.clip_norm);
      SgdStep(head.params(), grads, momentum, config.sgd, scheduler.Rate());
      scheduler.Step();
      for (double l : losses) total += l;
    }
    double train_loss = total / static_cast<double>(order.size());
    double val_loss = train_loss;
    if (!val_segs.empty()) {
      std::vector<double> losses(val_segs.size());
      ParallelFor(val_segs.size(), config.threads, [&](std::size_t i) {
        losses[i] = example(val_inputs[i], label_of(val_segs[i]), nullptr);
      });
      val_loss = std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(losses.size());
    }
    double lr = scheduler.Rate();
    scheduler.EndEpoch(val_loss);
    result.log.Add({epoch + 1, scheduler.step(), lr, train_loss, val_loss}, echo);
    result.epoch_samples.push_back(std::move(order));
  }
  return result;
}

}  // namespace cfrp
