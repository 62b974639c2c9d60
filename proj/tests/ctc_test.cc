// tests/ctc_test.cc

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

#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "cfrp/ctc.h"
#include "cfrp/error.h"
#include "cfrp/random.h"
#include "gradcheck.h"

namespace cfrp {
namespace {

Tensor RandomLogits(std::size_t steps, std::size_t symbols, Rng &rng) {
  return UniformTensor({steps, symbols}, -2.0, 2.0, rng);
}

double Prob(const Tensor &logits, std::size_t t, std::size_t k) {
  double total = 0.0;
  for (std::size_t j = 0; j < logits.cols(); ++j) total += std::exp(logits(t, j));
  return std::exp(logits(t, k)) / total;
}

LabelSequence RandomLabel(std::size_t max_len, int vocab, Rng &rng) {
  std::uniform_int_distribution<std::size_t> len(1, max_len);
  std::uniform_int_distribution<int> token(0, vocab - 1);
  LabelSequence label(len(rng));
  for (int &t : label) t = token(rng);
  return label;
}

TEST(CtcLossTest, SingleFrame) {
  Rng rng(1);
  Tensor logits = RandomLogits(1, 4, rng);
  Tape tape;
  double loss = CtcLoss(tape.Constant(logits), {2}).value().item();
  EXPECT_NEAR(loss, -std::log(Prob(logits, 0, 2)), 1e-14);
}

TEST(CtcLossTest, TwoFramesSingleToken) {
  Rng rng(2);
  Tensor logits = RandomLogits(2, 3, rng);
  const int a = 0, blank = 2;
  double p = Prob(logits, 0, a) * Prob(logits, 1, a) + Prob(logits, 0, a) * Prob(logits, 1, blank) +
             Prob(logits, 0, blank) * Prob(logits, 1, a);
  Tape tape;
  EXPECT_NEAR(CtcLoss(tape.Constant(logits), {a}).value().item(), -std::log(p), 1e-14);
}

TEST(CtcLossTest, RepeatNeedsSeparatingFrame) {
  Rng rng(3);
  Tape tape;
  EXPECT_THROW(CtcLoss(tape.Constant(RandomLogits(2, 3, rng)), {0, 0}), InfeasibleLabelError);
  EXPECT_NO_THROW(CtcLoss(tape.Constant(RandomLogits(3, 3, rng)), {0, 0}));
  EXPECT_EQ(CtcMinFrames({0, 0, 1, 1, 1}), 8u);
}

TEST(CtcLossTest, RejectsBadLabels) {
  Rng rng(4);
  Tape tape;
  Var logits = tape.Constant(RandomLogits(4, 3, rng));
  EXPECT_THROW(CtcLoss(logits, {}), ContractError);
  EXPECT_THROW(CtcLoss(logits, {2}), ContractError);  // the blank index
}

TEST(CtcLossTest, MatchesBruteForceOracle) {
  Rng rng(5);
  std::uniform_int_distribution<std::size_t> steps_dist(1, 6), vocab_dist(1, 3);
  int checked = 0;
  while (checked < 200) {
    std::size_t steps = steps_dist(rng), vocab = vocab_dist(rng);
    Tensor logits = RandomLogits(steps, vocab + 1, rng);
    LabelSequence label = RandomLabel(steps, static_cast<int>(vocab), rng);
    if (CtcMinFrames(label) > steps) {
      EXPECT_THROW(BruteForceCtc(logits, label), InfeasibleLabelError);
      Tape tape;
      EXPECT_THROW(CtcLoss(tape.Constant(logits), label), InfeasibleLabelError);
      continue;
    }
    Tape tape;
    double loss = CtcLoss(tape.Constant(logits), label).value().item();
    EXPECT_NEAR(loss, BruteForceCtc(logits, label), 1e-8);
    EXPECT_GE(loss, 0.0);
    ++checked;
  }
}

TEST(CtcLossTest, LongSequenceStaysFinite) {
  Rng rng(6);
  Tensor logits = UniformTensor({400, 25}, -8.0, 8.0, rng);
  LabelSequence label = RandomLabel(100, 24, rng);
  Tape tape;
  double loss = CtcLoss(tape.Constant(logits), label).value().item();
  EXPECT_TRUE(std::isfinite(loss));
  EXPECT_GT(loss, 0.0);
}

TEST(CtcLossTest, GradientMatchesFiniteDifferences) {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    std::size_t steps = 3 + trial % 4;
    LabelSequence label = RandomLabel(2, 3, rng);
    auto r = testing::CheckGradients({RandomLogits(steps, 4, rng)},
                                     [&](Tape &, const std::vector<Var> &in) {
                                       return CtcLoss(in[0], label);
                                     });
    EXPECT_LT(r.max_rel_error, 1e-4);
  }
}

TEST(BruteForceCtcTest, RefusesLargeStateSpaces) {
  Rng rng(8);
  EXPECT_THROW(BruteForceCtc(RandomLogits(12, 5, rng), {0}), ContractError);
}

TEST(BruteForceCtcTest, LabelLongerThanInput) {
  Rng rng(9);
  EXPECT_THROW(BruteForceCtc(RandomLogits(2, 3, rng), {0, 1, 0}), InfeasibleLabelError);
}

TEST(GreedyDecodeTest, CollapsingRules) {
  // V = 2 tokens {a=0, b=1}, blank = 2.
  EXPECT_EQ(CollapsePath({0, 0, 2, 0}, 2), (LabelSequence{0, 0}));
  EXPECT_EQ(CollapsePath({2, 2, 2}, 2), LabelSequence{});
  Tensor logits = Tensor::FromRows({{5, 0, 0}, {5, 0, 0}, {0, 0, 5}, {5, 0, 0}});
  EXPECT_EQ(GreedyDecode(logits), (LabelSequence{0, 0}));
}

TEST(GreedyDecodeTest, MatchesStringCollapseOracle) {
  Rng rng(10);
  for (int trial = 0; trial < 100; ++trial) {
    Tensor logits = RandomLogits(30, 4, rng);
    // Oracle: argmax string, std::unique on runs, then erase blanks ('3').
    std::string path;
    for (std::size_t t = 0; t < 30; ++t) {
      auto row = logits.values().subspan(t * 4, 4);
      path.push_back('0' + static_cast<char>(std::max_element(row.begin(), row.end()) - row.begin()));
    }
    path.erase(std::unique(path.begin(), path.end()), path.end());
    path.erase(std::remove(path.begin(), path.end(), '3'), path.end());
    LabelSequence decoded = GreedyDecode(logits);
    ASSERT_EQ(decoded.size(), path.size());
    for (std::size_t i = 0; i < path.size(); ++i) EXPECT_EQ(decoded[i], path[i] - '0');
    for (int token : decoded) EXPECT_NE(token, 3);
  }
}

TEST(TokenErrorRateTest, Examples) {
  EXPECT_DOUBLE_EQ(TokenErrorRate({1, 2, 3}, {1, 2, 3}), 0.0);
  EXPECT_DOUBLE_EQ(TokenErrorRate({}, {1, 2, 3, 4}), 1.0);
  EXPECT_DOUBLE_EQ(TokenErrorRate({0, 1, 2}, {0, 1, 3}), 1.0 / 3.0);
  EXPECT_EQ(EditDistance({1, 2, 3, 4}, {2, 3, 5}), 2u);
  EXPECT_THROW(TokenErrorRate({1}, {}), ContractError);
}

}  // namespace
}  // namespace cfrp
