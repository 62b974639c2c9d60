// include/cfrp/eval.h

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

#ifndef CFRP_EVAL_H_
#define CFRP_EVAL_H_

#include <string>
#include <vector>

#include "cfrp/config.h"
#include "cfrp/heads.h"
#include "cfrp/tensor.h"
#include "cfrp/trainer.h"

namespace cfrp {

// ---------------------------------------------------------------------------
// Detection metrics. A trial is accepted when score >= threshold.

/// Equal error rate. Operating points are taken at every distinct score and
/// at +inf; the crossing of false-accept and false-reject rates is linearly
/// interpolated between the two bracketing points.
double Eer(const std::vector<double> &target, const std::vector<double> &nontarget);

struct DcfParams {
  double c_miss, c_fa, p_target;
};
inline constexpr DcfParams kDcf08{10.0, 1.0, 0.01};
inline constexpr DcfParams kDcf10{1.0, 1.0, 0.001};

struct DcfResult {
  double cost;       // normalized by min(c_miss * p_target, c_fa * (1 - p_target))
  double threshold;  // +inf when rejecting everything is best
};

DcfResult MinDcf(const std::vector<double> &target, const std::vector<double> &nontarget,
                 const DcfParams &params);

struct DetPoint {
  double threshold, p_miss, p_fa;
};
/// Operating points at every distinct score plus +inf, in increasing threshold.
std::vector<DetPoint> DetCurve(const std::vector<double> &target,
                               const std::vector<double> &nontarget);

/// Average detection cost over languages with per-pair decisions at LLR
/// threshold 0. `llr` is [segments][languages]; C_miss = C_fa = 1 by default.
double CAvg(const std::vector<std::vector<double>> &llr, const std::vector<int> &truth,
            std::size_t n_languages, double p_target = 0.5, double c_miss = 1.0, double c_fa = 1.0);

/// Log-softmax minus the log of a uniform prior: log p(L|x) + log N.
std::vector<double> CalibrateLanguageScores(const Tensor &logits);

/// Splits an LR score matrix into target (true language) and nontarget scores.
void LanguageTrials(const std::vector<std::vector<double>> &scores, const std::vector<int> &truth,
                    std::vector<double> *target, std::vector<double> *nontarget);

double CosineScore(const Tensor &a, const Tensor &b);

// ---------------------------------------------------------------------------
// Two-covariance PLDA: x = mu + y + e, y ~ N(0, B), e ~ N(0, W).

struct PldaConfig {
  std::size_t max_iters = 100;
  double tolerance = 1e-8;       // stop when the log-likelihood gain is below this
  bool length_normalize = true;  // scale centered vectors to norm sqrt(d)
  double ridge = 1e-6;           // eigenvalue floor of W, relative to trace(total cov) / d
};

class Plda {
 public:
  Plda(Tensor mean, Tensor between, Tensor within, const PldaConfig &config);

  /// EM fit on labelled vectors. `trace`, when given, receives the data
  /// log-likelihood after initialization and after every iteration.
  static Plda Fit(const std::vector<Tensor> &vectors, const std::vector<int> &labels,
                  const PldaConfig &config, std::vector<double> *trace = nullptr);

  /// Log-likelihood of already-preprocessed vectors grouped by label.
  static double LogLikelihood(const std::vector<Tensor> &vectors, const std::vector<int> &labels,
                              const Tensor &between, const Tensor &within);

  const Tensor &mean() const { return mean_; }
  const Tensor &between() const { return between_; }
  const Tensor &within() const { return within_; }
  std::size_t dim() const { return mean_.size(); }

  /// Centering plus optional length normalization.
  Tensor Preprocess(const Tensor &x) const;
  /// Same-speaker vs different-speaker LLR of two preprocessed vectors.
  double ScorePreprocessed(const Tensor &enroll, const Tensor &test) const;
  /// Preprocesses each enrollment vector, averages them, preprocesses the
  /// test vector and scores.
  double Score(const std::vector<Tensor> &enroll, const Tensor &test) const;

 private:
  void Factorize();

  PldaConfig config_;
  Tensor mean_, between_, within_;
  RowMatrix total_inv_, joint_inv_;  // (B+W)^-1 and the 2d x 2d same-speaker precision
  double total_logdet_ = 0.0, joint_logdet_ = 0.0;
};

/// Floors the eigenvalues of a symmetric matrix at `floor`.
Tensor FloorEigenvalues(const Tensor &sym, double floor);

// ---------------------------------------------------------------------------
// Inference on frozen representations.

/// Splits the utterance into non-overlapping ~seg_len segments, runs the
/// head up to its pooling input on each, pools jointly over all frames and
/// classifies. Returns log-softmax scores per language.
Tensor PoolAndClassify(const Tensor &frames, const FeatureSource &source, const LrHead &head,
                       std::size_t seg_len);

/// Whole-sequence forward; returns the pre-activation embedding.
Tensor ExtractEmbedding(const Tensor &frames, const FeatureSource &source, const SrHead &head);

// ---------------------------------------------------------------------------
// Score files and reports.

struct SrScore {
  std::string enroll, test;
  double score;
  bool target;
};

struct LrScores {
  std::vector<std::string> ids;
  std::vector<int> truth;
  std::vector<std::vector<double>> scores;  // [utterance][language]
};

void WriteSrScores(const std::vector<SrScore> &scores, const std::string &path);
std::vector<SrScore> ReadSrScores(const std::string &path);
void WriteLrScores(const LrScores &scores, const std::string &path);
LrScores ReadLrScores(const std::string &path);

/// eer, mindcf08, mindcf10 (plus thresholds and trial counts).
Config SrMetrics(const std::vector<SrScore> &scores);
/// eer and cavg over calibrated scores (plus accuracy).
Config LrMetrics(const LrScores &scores, std::size_t n_languages);

}  // namespace cfrp

#endif  // CFRP_EVAL_H_
