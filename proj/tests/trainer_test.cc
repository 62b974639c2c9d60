// tests/trainer_test.cc

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

#include <cmath>
#include <limits>
#include <sstream>

#include <gtest/gtest.h>

#include "cfrp/checkpoint.h"
#include "cfrp/error.h"
#include "cfrp/trainer.h"

namespace cfrp {
namespace {

ParameterSet OneParam(double value) {
  ParameterSet p;
  p.Add("w", Tensor::Vector({value}));
  return p;
}

Gradients OneGrad(double g) { return {{"w", Tensor::Vector({g})}}; }

TEST(SgdTest, ZeroGradientLeavesParameters) {
  ParameterSet p = OneParam(1.5);
  MomentumState state;
  SgdStep(p, OneGrad(0.0), state, SgdConfig{0.9, 0.0, 0.0}, 0.1);
  EXPECT_EQ(p.Get("w").value[0], 1.5);
}

TEST(SgdTest, SingleStepWithoutMomentum) {
  ParameterSet p = OneParam(1.0);
  MomentumState state;
  SgdStep(p, OneGrad(2.0), state, SgdConfig{0.0, 0.0, 0.0}, 0.1);
  EXPECT_NEAR(p.Get("w").value[0], 0.8, 1e-15);
}

TEST(SgdTest, TwoMomentumSteps) {
  // v1 = g, v2 = 0.9 g + g: total change -lr (g + 1.9 g).
  const double g = 0.7, lr = 0.05;
  ParameterSet p = OneParam(0.0);
  MomentumState state;
  SgdConfig cfg{0.9, 0.0, 0.0};
  SgdStep(p, OneGrad(g), state, cfg, lr);
  SgdStep(p, OneGrad(g), state, cfg, lr);
  EXPECT_NEAR(p.Get("w").value[0], -lr * (g + 1.9 * g), 1e-15);
}

TEST(SgdTest, WeightDecayEntersVelocity) {
  ParameterSet p = OneParam(2.0);
  MomentumState state;
  SgdStep(p, OneGrad(0.5), state, SgdConfig{0.9, 0.1, 0.0}, 0.1);
  // v = 0.5 + 0.1 * 2
  EXPECT_NEAR(p.Get("w").value[0], 2.0 - 0.1 * 0.7, 1e-15);
}

TEST(SgdTest, MissingGradientIsZero) {
  ParameterSet p;
  p.Add("a", Tensor::Vector({1.0}));
  p.Add("b", Tensor::Vector({1.0}));
  MomentumState state;
  SgdStep(p, {{"a", Tensor::Vector({1.0})}}, state, SgdConfig{0.0, 0.0, 0.0}, 0.5);
  EXPECT_EQ(p.Get("a").value[0], 0.5);
  EXPECT_EQ(p.Get("b").value[0], 1.0);
}

TEST(SgdTest, NonFiniteGradientAbortsBeforeUpdate) {
  ParameterSet p;
  p.Add("a", Tensor::Vector({1.0}));
  p.Add("b", Tensor::Vector({1.0}));
  MomentumState state;
  Gradients g{{"a", Tensor::Vector({1.0})},
              {"b", Tensor::Vector({std::numeric_limits<double>::quiet_NaN()})}};
  EXPECT_THROW(SgdStep(p, g, state, SgdConfig{}, 0.1), NumericError);
  EXPECT_EQ(p.Get("a").value[0], 1.0);
  EXPECT_TRUE(state.empty() || state["a"][0] == 0.0);
}

TEST(SgdTest, ShapeMismatchIsRejected) {
  ParameterSet p = OneParam(1.0);
  MomentumState state;
  Gradients g{{"w", Tensor::Vector({1.0, 2.0})}};
  EXPECT_ANY_THROW(SgdStep(p, g, state, SgdConfig{}, 0.1));
}

TEST(SgdTest, BadConfig) {
  EXPECT_THROW((SgdConfig{1.0, 0.0, 0.0}.Validate()), ConfigError);
  EXPECT_THROW((SgdConfig{0.9, -1.0, 0.0}.Validate()), ConfigError);
}

TEST(ClipTest, ScalesToMaxNorm) {
  Gradients g{{"a", Tensor::Vector({3.0})}, {"b", Tensor::Vector({4.0})}};
  EXPECT_DOUBLE_EQ(GlobalNorm(g), 5.0);
  EXPECT_DOUBLE_EQ(ClipGradients(g, 2.5), 5.0);
  EXPECT_NEAR(g["a"][0], 1.5, 1e-15);
  EXPECT_NEAR(g["b"][0], 2.0, 1e-15);
  Gradients small{{"a", Tensor::Vector({0.1})}};
  ClipGradients(small, 2.5);
  EXPECT_EQ(small["a"][0], 0.1);
}

TEST(ScheduleTest, InverseSqrtPeakAndDecay) {
  const double peak = 0.05;
  EXPECT_DOUBLE_EQ(InverseSqrtRate(400, peak, 400), peak);
  EXPECT_DOUBLE_EQ(InverseSqrtRate(1600, peak, 400), peak / 2);
  EXPECT_DOUBLE_EQ(InverseSqrtRate(100, peak, 400), peak / 4);
}

TEST(ScheduleTest, InverseSqrtContinuousAndMonotone) {
  const std::size_t w = 50;
  for (std::size_t s = 1; s < w; ++s)
    EXPECT_LT(InverseSqrtRate(s, 1.0, w), InverseSqrtRate(s + 1, 1.0, w));
  for (std::size_t s = w; s < 10 * w; ++s)
    EXPECT_GT(InverseSqrtRate(s, 1.0, w), InverseSqrtRate(s + 1, 1.0, w));
  // Both branches agree at the boundary.
  EXPECT_NEAR(InverseSqrtRate(w, 1.0, w), std::sqrt(1.0), 1e-15);
  EXPECT_NEAR(InverseSqrtRate(w + 1, 1.0, w), 1.0, 0.02);
}

TEST(ScheduleTest, PeakFromLambda) {
  ScheduleConfig c;
  c.lambda = 400.0;
  c.warmup = 16000;
  EXPECT_DOUBLE_EQ(c.peak(), 1.0 / (400.0 * std::sqrt(16000.0)));
}

TEST(ScheduleTest, StepDecayTable) {
  // base 0.01, decays at epochs 60, 80 and 100.
  auto lr = [](std::size_t e) { return StepDecayRate(e, 0.01, 60, 20, 3, 0.1); };
  EXPECT_DOUBLE_EQ(lr(0), 0.01);
  EXPECT_DOUBLE_EQ(lr(59), 0.01);
  EXPECT_NEAR(lr(60), 1e-3, 1e-18);
  EXPECT_NEAR(lr(85), 1e-4, 1e-18);
  EXPECT_NEAR(lr(100), 1e-5, 1e-18);
  EXPECT_NEAR(lr(500), 1e-5, 1e-18);
}

TEST(ScheduleTest, SchedulerFollowsStepDecay) {
  ScheduleConfig c;
  c.kind = ScheduleKind::kStepDecay;
  c.base_lr = 0.01;
  c.hold = 60;
  c.interval = 20;
  c.n_decays = 3;
  LrScheduler s(c);
  s.BeginEpoch(85);
  EXPECT_NEAR(s.Rate(), 1e-4, 1e-18);
}

TEST(ScheduleTest, InverseSqrtStages) {
  ScheduleConfig c;
  c.kind = ScheduleKind::kInverseSqrt;
  c.lambda = 1.0;
  c.warmup = 4;
  c.fix_epoch = 2;
  c.interval = 1;
  c.n_decays = 2;
  LrScheduler s(c);
  const double peak = c.peak();
  std::vector<double> first_rate;
  for (std::size_t e = 0; e < 6; ++e) {
    s.BeginEpoch(e);
    first_rate.push_back(s.Rate());
    for (int k = 0; k < 3; ++k) s.Step();
  }
  EXPECT_DOUBLE_EQ(first_rate[0], InverseSqrtRate(1, peak, 4));
  EXPECT_DOUBLE_EQ(first_rate[1], InverseSqrtRate(4, peak, 4));
  const double fixed = InverseSqrtRate(7, peak, 4);
  EXPECT_DOUBLE_EQ(first_rate[2], fixed);
  EXPECT_DOUBLE_EQ(first_rate[3], fixed * 0.1);
  EXPECT_DOUBLE_EQ(first_rate[4], fixed * 0.01);
  EXPECT_DOUBLE_EQ(first_rate[5], fixed * 0.01);
}

TEST(ScheduleTest, PlateauDecaysAfterPatience) {
  ScheduleConfig c;
  c.kind = ScheduleKind::kPlateau;
  c.base_lr = 1.0;
  c.patience = 3;
  LrScheduler s(c);
  s.EndEpoch(10.0);
  s.EndEpoch(9.0);  // improvement
  EXPECT_EQ(s.Rate(), 1.0);
  s.EndEpoch(8.999);  // below the 1e-3 relative threshold
  s.EndEpoch(9.5);
  EXPECT_EQ(s.Rate(), 1.0);
  s.EndEpoch(9.0);
  EXPECT_NEAR(s.Rate(), 0.1, 1e-15);
  s.EndEpoch(5.0);
  s.EndEpoch(6.0);
  s.EndEpoch(6.0);
  EXPECT_NEAR(s.Rate(), 0.1, 1e-15);
  s.EndEpoch(6.0);
  EXPECT_NEAR(s.Rate(), 0.01, 1e-15);
}

TEST(ScheduleTest, SaveLoadRoundTrip) {
  ScheduleConfig c;
  c.kind = ScheduleKind::kPlateau;
  LrScheduler a(c);
  a.BeginEpoch(3);
  for (int i = 0; i < 5; ++i) a.Step();
  a.EndEpoch(2.0);
  a.EndEpoch(3.0);
  Checkpoint ckpt;
  a.Save(ckpt, "opt/");
  LrScheduler b(c);
  b.Load(ckpt, "opt/");
  EXPECT_EQ(b.step(), 5u);
  EXPECT_EQ(b.epoch(), 3u);
  a.EndEpoch(3.0);
  a.EndEpoch(3.0);
  b.EndEpoch(3.0);
  b.EndEpoch(3.0);
  EXPECT_EQ(a.Rate(), b.Rate());
  EXPECT_THROW(b.Load(Checkpoint{}, "opt/"), ConfigError);
}

TEST(ScheduleTest, NamesAndValidation) {
  for (ScheduleKind k : {ScheduleKind::kConstant, ScheduleKind::kInverseSqrt,
                         ScheduleKind::kStepDecay, ScheduleKind::kPlateau})
    EXPECT_EQ(ParseScheduleKind(ScheduleKindName(k)), k);
  EXPECT_THROW(ParseScheduleKind("cosine"), ConfigError);
  ScheduleConfig c;
  c.factor = 1.0;
  EXPECT_THROW(c.Validate(), ConfigError);
  c = ScheduleConfig{};
  c.kind = ScheduleKind::kInverseSqrt;
  c.warmup = 0;
  EXPECT_THROW(c.Validate(), ConfigError);
}

TEST(ScheduleTest, ConfigRoundTrip) {
  ScheduleConfig c;
  c.kind = ScheduleKind::kStepDecay;
  c.base_lr = 0.02;
  c.hold = 7;
  Config cfg;
  c.ToConfig(cfg, "x.");
  ScheduleConfig d = ScheduleConfig::FromConfig(cfg, "x.", ScheduleConfig{});
  EXPECT_EQ(d.kind, c.kind);
  EXPECT_EQ(d.base_lr, c.base_lr);
  EXPECT_EQ(d.hold, 7u);
}

TEST(TrainingLogTest, RowFormat) {
  TrainingLog log;
  std::ostringstream echo;
  log.Add({1, 10, 0.5, 1.25, 0.5}, &echo);
  EXPECT_EQ(echo.str(), "1\t10\t0.5\t1.250000\t0.500000\n");
  EXPECT_EQ(log.ToString(), echo.str());
}

// ---------------------------------------------------------------------------

GeneratorConfig TinyData() {
  GeneratorConfig g;
  g.n_phonemes = 4;
  g.n_variants = 2;
  g.n_languages = 2;
  g.n_speakers = 4;
  g.n_eval_speakers = 2;
  g.utts_per_speaker = 6;
  g.eval_utts_per_speaker = 3;
  g.min_phonemes = 5;
  g.max_phonemes = 8;
  g.min_frames = 3;
  g.max_frames = 5;
  g.feature_dim = 6;
  g.noise = 0.3;
  g.seed = 11;
  return g;
}

EncoderConfig TinyEncoder() {
  EncoderConfig e;
  e.input_dim = 6;
  e.n_layers = 2;
  e.d_model = 8;
  e.n_heads = 2;
  e.d_pos = 4;
  e.d_ff = 16;
  e.stack_factor = 2;
  e.vocab_size = 8;
  e.truncate_last = 0;
  return e;
}

PretrainConfig TinyPretrain() {
  PretrainConfig p;
  p.epochs = 3;
  p.batch_size = 4;
  p.schedule.kind = ScheduleKind::kConstant;
  p.schedule.base_lr = 0.05;
  p.seed = 5;
  return p;
}

class PretrainTest : public ::testing::Test {
 protected:
  void SetUp() override { data_ = CorpusGenerator(TinyData()).Generate(); }
  SyntheticCorpus data_;
};

TEST_F(PretrainTest, LossDecreasesOverFirstEpochs) {
  Encoder enc(TinyEncoder(), 3);
  CtcPretrainer trainer(enc, data_.train, TinyPretrain());
  double l1 = trainer.TrainEpoch();
  double l2 = trainer.TrainEpoch();
  double l3 = trainer.TrainEpoch();
  EXPECT_LT(l2, l1);
  EXPECT_LT(l3, l2);
}

TEST_F(PretrainTest, ResumeGivesIdenticalNextStep) {
  Encoder a(TinyEncoder(), 3);
  CtcPretrainer ta(a, data_.train, TinyPretrain());
  ta.TrainEpoch();
  Checkpoint ckpt;
  PutParameters(ckpt, a.params());
  ta.SaveState(ckpt);
  Checkpoint reread = ParseCheckpoint(SerializeCheckpoint(ckpt));

  Encoder b(TinyEncoder(), 99);
  GetParameters(reread, b.params());
  CtcPretrainer tb(b, data_.train, TinyPretrain());
  tb.LoadState(reread);
  EXPECT_EQ(tb.epoch(), ta.epoch());
  EXPECT_EQ(tb.scheduler().step(), ta.scheduler().step());

  double la = ta.TrainEpoch();
  double lb = tb.TrainEpoch();
  EXPECT_EQ(la, lb);
  EXPECT_TRUE(a.params().BitwiseEquals(b.params()));
}

TEST_F(PretrainTest, ThreadCountDoesNotChangeResults) {
  PretrainConfig one = TinyPretrain(), four = TinyPretrain();
  one.epochs = four.epochs = 2;
  four.threads = 4;
  Encoder a(TinyEncoder(), 3), b(TinyEncoder(), 3);
  PretrainResult ra = Pretrain(a, data_.train, data_.test, one);
  PretrainResult rb = Pretrain(b, data_.train, data_.test, four);
  EXPECT_TRUE(a.params().BitwiseEquals(b.params()));
  EXPECT_EQ(ra.log.ToString(), rb.log.ToString());
}

TEST_F(PretrainTest, KeepsBestHeldOutSnapshot) {
  Encoder enc(TinyEncoder(), 3);
  PretrainResult r = Pretrain(enc, data_.train, data_.test, TinyPretrain());
  ASSERT_EQ(r.log.rows().size(), 3u);
  double best = 1e9;
  for (const auto &row : r.log.rows()) best = std::min(best, row.val_metric);
  EXPECT_EQ(r.best_ter, best);
  EXPECT_TRUE(enc.params().BitwiseEquals(*r.best_params));
  EXPECT_EQ(CorpusTokenErrorRate(enc, data_.test), r.best_ter);
}

TEST_F(PretrainTest, VocabularyMismatch) {
  EncoderConfig e = TinyEncoder();
  e.vocab_size = 4;
  Encoder enc(e, 3);
  EXPECT_THROW(CtcPretrainer(enc, data_.train, TinyPretrain()), ConfigError);
}

TEST_F(PretrainTest, CoarseLabelsTrainAsWell) {
  EncoderConfig e = TinyEncoder();
  e.vocab_size = 4;
  Encoder enc(e, 3);
  Corpus coarse = CoarsenLabels(data_.train, TinyData().MergeTable());
  CtcPretrainer trainer(enc, coarse, TinyPretrain());
  EXPECT_TRUE(std::isfinite(trainer.TrainEpoch()));
}

// ---------------------------------------------------------------------------

HeadTrainConfig TinyHeadTrain() {
  HeadTrainConfig h;
  h.epochs = 2;
  h.batch_size = 4;
  h.seg_len = 20;
  h.overlap = 0.5;
  h.per_class_min = 3;
  h.per_class_max = 5;
  h.val_fraction = 0.0;
  h.schedule.kind = ScheduleKind::kConstant;
  h.schedule.base_lr = 0.05;
  h.seed = 9;
  return h;
}

LrHeadConfig TinyLr() {
  LrHeadConfig c;
  c.n_languages = 2;
  c.hidden = 4;
  c.channels = 4;
  return c;
}

class HeadTrainTest : public ::testing::Test {
 protected:
  void SetUp() override {
    data_ = CorpusGenerator(TinyData()).Generate();
    encoder_ = std::make_unique<Encoder>(TinyEncoder(), 4);
  }
  SyntheticCorpus data_;
  std::unique_ptr<Encoder> encoder_;
};

TEST_F(HeadTrainTest, EncoderIsFrozen) {
  Checkpoint before;
  PutParameters(before, encoder_->params());
  std::string bytes = SerializeCheckpoint(before);

  FeatureSource source(encoder_.get(), TapSpec::LearnedMix(1, 2), 2, 6);
  LrHead head(TinyLr(), source.output_dim(), 1, source.mix_layers());
  LrTaskHead th(head);
  ParameterSet initial = head.params().Clone();
  TrainHead(Task::kLanguage, th, source, data_.train, 2, TinyHeadTrain());

  Checkpoint after;
  PutParameters(after, encoder_->params());
  EXPECT_EQ(SerializeCheckpoint(after), bytes);
  EXPECT_FALSE(head.params().BitwiseEquals(initial));
}

TEST_F(HeadTrainTest, BaselineRunsWithoutEncoder) {
  FeatureSource source = FeatureSource::Baseline(2, 6);
  EXPECT_TRUE(source.baseline());
  EXPECT_EQ(source.output_dim(), 12u);
  EXPECT_EQ(source.mix_layers(), 0u);
  LrHead head(TinyLr(), source.output_dim(), 1);
  LrTaskHead th(head);
  HeadTrainResult r = TrainHead(Task::kLanguage, th, source, data_.train, 2, TinyHeadTrain());
  ASSERT_EQ(r.log.rows().size(), 2u);
  for (const auto &row : r.log.rows()) EXPECT_TRUE(std::isfinite(row.train_loss));
}

TEST_F(HeadTrainTest, EpochsMatchBalancedSampler) {
  HeadTrainConfig cfg = TinyHeadTrain();
  FeatureSource source = FeatureSource::Baseline(2, 6);
  SrHeadConfig sc;
  sc.n_speakers = 4;
  sc.channels = 4;
  sc.d_emb = 4;
  sc.hidden = 4;
  SrHead head(sc, source.output_dim(), 2);
  SrTaskHead th(head);
  HeadTrainResult r = TrainHead(Task::kSpeaker, th, source, data_.train, 4, cfg);

  std::vector<int> classes;
  for (const Segment &s : SegmentCorpus(data_.train, cfg.seg_len, cfg.overlap))
    classes.push_back(data_.train.utterances[s.utterance].speaker);
  ASSERT_EQ(r.epoch_samples.size(), cfg.epochs);
  for (std::size_t e = 0; e < cfg.epochs; ++e)
    EXPECT_EQ(r.epoch_samples[e],
              BalancedEpoch(classes, 4, cfg.per_class_min, cfg.per_class_max, cfg.seed, e));
}

TEST_F(HeadTrainTest, ThreadCountDoesNotChangeResults) {
  FeatureSource source(encoder_.get(), TapSpec::Single(2), 2, 6);
  HeadTrainConfig one = TinyHeadTrain(), four = TinyHeadTrain();
  one.val_fraction = four.val_fraction = 0.2;
  four.threads = 4;
  LrHeadConfig lc = TinyLr();
  lc.variant = LrVariant::kDiCnn;
  LrHead a(lc, source.output_dim(), 1), b(lc, source.output_dim(), 1);
  LrTaskHead ta(a), tb(b);
  HeadTrainResult ra = TrainHead(Task::kLanguage, ta, source, data_.train, 2, one);
  HeadTrainResult rb = TrainHead(Task::kLanguage, tb, source, data_.train, 2, four);
  EXPECT_TRUE(a.params().BitwiseEquals(b.params()));
  EXPECT_EQ(ra.log.ToString(), rb.log.ToString());
}

TEST_F(HeadTrainTest, TapMustFitEncoder) {
  EXPECT_THROW(FeatureSource(encoder_.get(), TapSpec::Single(3), 2, 6), ConfigError);
  EXPECT_THROW(FeatureSource(encoder_.get(), TapSpec::Single(1), 2, 5), ConfigError);
}

TEST_F(HeadTrainTest, LearnedMixNeedsMixer) {
  FeatureSource source(encoder_.get(), TapSpec::LearnedMix(1, 2), 2, 6);
  LrHead head(TinyLr(), source.output_dim(), 1);  // no mixer
  LrTaskHead th(head);
  EXPECT_THROW(TrainHead(Task::kLanguage, th, source, data_.train, 2, TinyHeadTrain()),
               ConfigError);
}

TEST_F(HeadTrainTest, ClassOutOfRange) {
  FeatureSource source = FeatureSource::Baseline(2, 6);
  LrHeadConfig lc = TinyLr();
  LrHead head(lc, source.output_dim(), 1);
  LrTaskHead th(head);
  EXPECT_THROW(TrainHead(Task::kSpeaker, th, source, data_.train, 2, TinyHeadTrain()), DataError);
}

}  // namespace
}  // namespace cfrp
