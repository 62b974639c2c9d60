// src/eval.cc

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

#include "cfrp/eval.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>

#include "cfrp/error.h"
#include "cfrp/ops.h"

namespace cfrp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void CheckScores(const std::vector<double> &target, const std::vector<double> &nontarget,
                 const char *what) {
  if (target.empty() || nontarget.empty())
    throw ContractError(std::string(what) + ": need at least one target and one nontarget score");
  for (double s : target)
    if (!std::isfinite(s)) throw DataError(std::string(what) + ": non-finite target score");
  for (double s : nontarget)
    if (!std::isfinite(s)) throw DataError(std::string(what) + ": non-finite nontarget score");
}

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

Vec ToVec(const Tensor &t) { return Eigen::Map<const Vec>(t.data(), static_cast<Eigen::Index>(t.size())); }

Tensor FromVec(const Vec &v) {
  Tensor t(Shape{static_cast<std::size_t>(v.size())});
  for (Eigen::Index i = 0; i < v.size(); ++i) t[static_cast<std::size_t>(i)] = v[i];
  return t;
}

Mat ToMat(const Tensor &t) { return t.matrix(); }

Tensor FromMat(const Mat &m) {
  Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  t.matrix() = m;
  return t;
}

double LogDet(const Mat &m) {
  Eigen::LLT<Mat> llt(m);
  if (llt.info() != Eigen::Success) throw NumericError("plda: covariance is not positive definite");
  const Mat &l = llt.matrixL();
  double s = 0.0;
  for (Eigen::Index i = 0; i < l.rows(); ++i) s += std::log(l(i, i));
  return 2.0 * s;
}

double LogGauss(const Vec &x, const Mat &cov) {
  Eigen::LLT<Mat> llt(cov);
  if (llt.info() != Eigen::Success) throw NumericError("plda: covariance is not positive definite");
  double quad = x.dot(llt.solve(x));
  return -0.5 * (quad + LogDet(cov) + static_cast<double>(x.size()) * std::log(2.0 * M_PI));
}

}  // namespace

std::vector<DetPoint> DetCurve(const std::vector<double> &target,
                               const std::vector<double> &nontarget) {
  CheckScores(target, nontarget, "det");
  std::vector<double> t = target, n = nontarget;
  std::sort(t.begin(), t.end());
  std::sort(n.begin(), n.end());
  std::vector<double> thresholds = t;
  thresholds.insert(thresholds.end(), n.begin(), n.end());
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  thresholds.push_back(kInf);
  std::vector<DetPoint> out;
  out.reserve(thresholds.size());
  std::size_t below_t = 0, below_n = 0;  // scores strictly below the threshold
  for (double th : thresholds) {
    while (below_t < t.size() && t[below_t] < th) ++below_t;
    while (below_n < n.size() && n[below_n] < th) ++below_n;
    out.push_back({th, static_cast<double>(below_t) / t.size(),
                   static_cast<double>(n.size() - below_n) / n.size()});
  }
  return out;
}

double Eer(const std::vector<double> &target, const std::vector<double> &nontarget) {
  std::vector<DetPoint> det = DetCurve(target, nontarget);
  // p_fa - p_miss starts at 1 and ends at -1; find the first sign change.
  for (std::size_t k = 0; k + 1 < det.size(); ++k) {
    double d0 = det[k].p_fa - det[k].p_miss, d1 = det[k + 1].p_fa - det[k + 1].p_miss;
    if (d0 == 0.0) return det[k].p_miss;
    if (d0 > 0.0 && d1 <= 0.0) {
      double a = d0 / (d0 - d1);
      return det[k].p_miss + a * (det[k + 1].p_miss - det[k].p_miss);
    }
  }
  return det.back().p_miss;
}

DcfResult MinDcf(const std::vector<double> &target, const std::vector<double> &nontarget,
                 const DcfParams &p) {
  if (!(p.p_target > 0.0 && p.p_target < 1.0) || !(p.c_miss > 0.0) || !(p.c_fa > 0.0))
    throw ContractError("mindcf: invalid cost parameters");
  std::vector<DetPoint> det = DetCurve(target, nontarget);
  double norm = std::min(p.c_miss * p.p_target, p.c_fa * (1.0 - p.p_target));
  DcfResult best{kInf, kInf};
  for (const DetPoint &pt : det) {
    double cost = (p.c_miss * p.p_target * pt.p_miss + p.c_fa * (1.0 - p.p_target) * pt.p_fa) / norm;
    if (cost < best.cost) best = {cost, pt.threshold};
  }
  return best;
}

double CAvg(const std::vector<std::vector<double>> &llr, const std::vector<int> &truth,
            std::size_t n_languages, double p_target, double c_miss, double c_fa) {
  if (n_languages < 2) throw ContractError("cavg: need at least 2 languages");
  if (llr.size() != truth.size() || llr.empty()) throw ContractError("cavg: score/truth size mismatch");
  std::vector<std::size_t> count(n_languages, 0);
  for (std::size_t s = 0; s < llr.size(); ++s) {
    if (llr[s].size() != n_languages) throw ContractError("cavg: score row has the wrong width");
    if (truth[s] < 0 || static_cast<std::size_t>(truth[s]) >= n_languages)
      throw DataError("cavg: truth label out of range");
    for (double v : llr[s])
      if (!std::isfinite(v)) throw DataError("cavg: non-finite score");
    ++count[truth[s]];
  }
  for (std::size_t l = 0; l < n_languages; ++l)
    if (count[l] == 0) throw DataError("cavg: language " + std::to_string(l) + " has no trials");
  // accepted[L][L'] = segments of true language L' accepted as L.
  std::vector<std::vector<double>> accepted(n_languages, std::vector<double>(n_languages, 0.0));
  for (std::size_t s = 0; s < llr.size(); ++s)
    for (std::size_t l = 0; l < n_languages; ++l)
      if (llr[s][l] >= 0.0) accepted[l][truth[s]] += 1.0;
  double total = 0.0;
  for (std::size_t l = 0; l < n_languages; ++l) {
    double p_miss = 1.0 - accepted[l][l] / count[l];
    double fa = 0.0;
    for (std::size_t o = 0; o < n_languages; ++o)
      if (o != l) fa += accepted[l][o] / count[o];
    total += c_miss * p_target * p_miss + c_fa * (1.0 - p_target) * fa / (n_languages - 1.0);
  }
  return total / static_cast<double>(n_languages);
}

std::vector<double> CalibrateLanguageScores(const Tensor &logits) {
  Tape tape;
  Tensor ls = LogSoftmax(tape.Constant(logits), 0).value();
  std::vector<double> out(ls.size());
  double log_n = std::log(static_cast<double>(ls.size()));
  for (std::size_t i = 0; i < ls.size(); ++i) out[i] = ls[i] + log_n;
  return out;
}

void LanguageTrials(const std::vector<std::vector<double>> &scores, const std::vector<int> &truth,
                    std::vector<double> *target, std::vector<double> *nontarget) {
  if (scores.size() != truth.size()) throw ContractError("lr trials: score/truth size mismatch");
  for (std::size_t s = 0; s < scores.size(); ++s)
    for (std::size_t l = 0; l < scores[s].size(); ++l)
      (static_cast<int>(l) == truth[s] ? target : nontarget)->push_back(scores[s][l]);
}

double CosineScore(const Tensor &a, const Tensor &b) {
  if (a.size() != b.size()) throw DimensionError("cosine: dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw ContractError("cosine: zero vector");
  return dot / std::sqrt(na * nb);
}

// ---------------------------------------------------------------------------

Tensor FloorEigenvalues(const Tensor &sym, double floor) {
  Eigen::SelfAdjointEigenSolver<Mat> es(ToMat(sym));
  Vec ev = es.eigenvalues().cwiseMax(floor);
  Mat out = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  return FromMat(0.5 * (out + out.transpose()));
}

Plda::Plda(Tensor mean, Tensor between, Tensor within, const PldaConfig &config)
    : config_(config), mean_(std::move(mean)), between_(std::move(between)), within_(std::move(within)) {
  const std::size_t d = mean_.size();
  if (between_.shape() != Shape{d, d} || within_.shape() != Shape{d, d})
    throw DimensionError("plda: covariance shapes do not match the mean");
  Factorize();
}

void Plda::Factorize() {
  const Eigen::Index d = static_cast<Eigen::Index>(dim());
  Mat b = ToMat(between_), w = ToMat(within_);
  Mat t = b + w;
  Mat joint(2 * d, 2 * d);
  joint << t, b, b, t;
  total_inv_ = t.inverse();
  joint_inv_ = joint.inverse();
  total_logdet_ = LogDet(t);
  joint_logdet_ = LogDet(joint);
}

double Plda::LogLikelihood(const std::vector<Tensor> &vectors, const std::vector<int> &labels,
                           const Tensor &between, const Tensor &within) {
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < labels.size(); ++i) groups[labels[i]].push_back(i);
  Mat b = ToMat(between), w = ToMat(within);
  const double d = static_cast<double>(b.rows());
  double total = 0.0;
  for (const auto &[label, idx] : groups) {
    const double n = static_cast<double>(idx.size());
    Vec mean = Vec::Zero(b.rows());
    for (std::size_t i : idx) mean += ToVec(vectors[i]);
    mean /= n;
    for (std::size_t i : idx) total += LogGauss(ToVec(vectors[i]) - mean, w);
    total += 0.5 * d * std::log(2.0 * M_PI) + 0.5 * LogDet(w / n);
    total += LogGauss(mean, b + w / n);
  }
  return total;
}

Plda Plda::Fit(const std::vector<Tensor> &vectors, const std::vector<int> &labels,
               const PldaConfig &config, std::vector<double> *trace) {
  if (vectors.size() != labels.size() || vectors.empty())
    throw ContractError("plda: vectors and labels must be non-empty and aligned");
  const std::size_t d = vectors[0].size();
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (vectors[i].size() != d) throw DimensionError("plda: vectors differ in dimension");
    groups[labels[i]].push_back(i);
  }
  if (groups.size() < 2) throw DataError("plda: need at least 2 classes");
  bool repeated = false;
  for (const auto &[label, idx] : groups) repeated |= idx.size() >= 2;
  if (!repeated) throw DataError("plda: need at least one class with 2 or more vectors");

  Vec mu = Vec::Zero(static_cast<Eigen::Index>(d));
  for (const Tensor &v : vectors) mu += ToVec(v);
  mu /= static_cast<double>(vectors.size());
  Plda shell(FromVec(mu), FromMat(Mat::Identity(d, d)), FromMat(Mat::Identity(d, d)), config);
  std::vector<Tensor> x;
  x.reserve(vectors.size());
  for (const Tensor &v : vectors) x.push_back(shell.Preprocess(v));

  const Eigen::Index dd = static_cast<Eigen::Index>(d);
  const double n_total = static_cast<double>(x.size());
  const double k_classes = static_cast<double>(groups.size());
  Mat total = Mat::Zero(dd, dd);
  for (const Tensor &v : x) total += ToVec(v) * ToVec(v).transpose();
  total /= n_total;
  const double floor = config.ridge * std::max(total.trace() / static_cast<double>(d), 1e-12);

  // Moment initialization.
  std::vector<Vec> means;
  std::vector<double> counts;
  Mat b = Mat::Zero(dd, dd), w = Mat::Zero(dd, dd);
  for (const auto &[label, idx] : groups) {
    Vec m = Vec::Zero(dd);
    for (std::size_t i : idx) m += ToVec(x[i]);
    m /= static_cast<double>(idx.size());
    for (std::size_t i : idx) w += (ToVec(x[i]) - m) * (ToVec(x[i]) - m).transpose();
    b += m * m.transpose();
    means.push_back(m);
    counts.push_back(static_cast<double>(idx.size()));
  }
  b /= k_classes;
  w /= n_total;
  w = ToMat(FloorEigenvalues(FromMat(w), floor));
  b = ToMat(FloorEigenvalues(FromMat(b), floor));

  double ll = LogLikelihood(x, labels, FromMat(b), FromMat(w));
  if (trace) trace->assign(1, ll);
  for (std::size_t it = 0; it < config.max_iters; ++it) {
    Mat b_new = Mat::Zero(dd, dd), w_new = Mat::Zero(dd, dd);
    std::size_t g = 0;
    for (const auto &[label, idx] : groups) {
      const double n = counts[g];
      Mat gain = b * (b + w / n).inverse();  // posterior of y given the class mean
      Vec m = gain * means[g];
      Mat c = b - gain * b;
      c = 0.5 * (c + c.transpose());
      b_new += c + m * m.transpose();
      for (std::size_t i : idx) {
        Vec r = ToVec(x[i]) - m;
        w_new += r * r.transpose() + c;
      }
      ++g;
    }
    b = ToMat(FloorEigenvalues(FromMat(b_new / k_classes), floor));
    w = ToMat(FloorEigenvalues(FromMat(w_new / n_total), floor));
    double next = LogLikelihood(x, labels, FromMat(b), FromMat(w));
    if (trace) trace->push_back(next);
    bool done = next - ll < config.tolerance;
    ll = next;
    if (done) break;
  }
  return Plda(FromVec(mu), FromMat(b), FromMat(w), config);
}

Tensor Plda::Preprocess(const Tensor &x) const {
  if (x.size() != dim()) throw DimensionError("plda: vector dimension does not match the model");
  Tensor out(Shape{dim()});
  double norm = 0.0;
  for (std::size_t i = 0; i < dim(); ++i) {
    out[i] = x[i] - mean_[i];
    norm += out[i] * out[i];
  }
  if (config_.length_normalize && norm > 0.0) {
    double scale = std::sqrt(static_cast<double>(dim()) / norm);
    for (std::size_t i = 0; i < dim(); ++i) out[i] *= scale;
  }
  return out;
}

double Plda::ScorePreprocessed(const Tensor &enroll, const Tensor &test) const {
  if (enroll.size() != dim() || test.size() != dim())
    throw DimensionError("plda: vector dimension does not match the model");
  Vec e = ToVec(enroll), t = ToVec(test);
  Vec z(2 * e.size());
  z << e, t;
  double same = -0.5 * z.dot(joint_inv_ * z) - 0.5 * joint_logdet_;
  double diff = -0.5 * e.dot(total_inv_ * e) - 0.5 * t.dot(total_inv_ * t) - total_logdet_;
  return same - diff;
}

double Plda::Score(const std::vector<Tensor> &enroll, const Tensor &test) const {
  if (enroll.empty()) throw ContractError("plda: empty enrollment");
  Tensor avg(Shape{dim()}, 0.0);
  for (const Tensor &e : enroll) {
    Tensor p = Preprocess(e);
    for (std::size_t i = 0; i < dim(); ++i) avg[i] += p[i] / static_cast<double>(enroll.size());
  }
  return ScorePreprocessed(avg, Preprocess(test));
}

// ---------------------------------------------------------------------------

Tensor PoolAndClassify(const Tensor &frames, const FeatureSource &source, const LrHead &head,
                       std::size_t seg_len) {
  if (frames.rank() != 2 || frames.rows() == 0) throw DataError("pool-and-classify: empty utterance");
  Tape tape;
  std::vector<Var> parts;
  for (const Span &s : SegmentFrames(frames.rows(), seg_len, 0.0)) {
    Var reps = source.Combine(tape, source.Extract(frames.RowRange(s.begin, s.length)), head.mixer());
    parts.push_back(head.FrameFeatures(tape, reps, false));
  }
  Var pooled = parts.size() == 1 ? parts[0] : ConcatRows(parts);
  return LogSoftmax(head.Classify(tape, pooled, false), 0).value();
}

Tensor ExtractEmbedding(const Tensor &frames, const FeatureSource &source, const SrHead &head) {
  if (frames.rank() != 2 || frames.rows() == 0) throw DataError("embedding: empty utterance");
  Tape tape;
  Var reps = source.Combine(tape, source.Extract(frames), head.mixer());
  return head.Forward(tape, reps, false).embedding.value();
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> SplitTabs(const std::string &line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    std::size_t tab = line.find('\t', start);
    out.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) return out;
    start = tab + 1;
  }
}

double ParseScore(const std::string &s, const std::string &where) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception &) {
    throw DataError(where + ": bad score '" + s + "'");
  }
}

std::string FormatScore(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void WriteSrScores(const std::vector<SrScore> &scores, const std::string &path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  for (const SrScore &s : scores)
    out << s.enroll << '\t' << s.test << '\t' << FormatScore(s.score) << '\t'
        << (s.target ? "target" : "nontarget") << '\n';
  if (!out) throw DataError("error writing " + path);
}

std::vector<SrScore> ReadSrScores(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open score file " + path);
  std::vector<SrScore> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::string where = path + ":" + std::to_string(lineno);
    auto f = SplitTabs(line);
    if (f.size() != 4) throw DataError(where + ": expected 4 tab-separated fields");
    if (f[3] != "target" && f[3] != "nontarget") throw DataError(where + ": bad trial type");
    out.push_back({f[0], f[1], ParseScore(f[2], where), f[3] == "target"});
  }
  return out;
}

void WriteLrScores(const LrScores &scores, const std::string &path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  for (std::size_t i = 0; i < scores.ids.size(); ++i) {
    out << scores.ids[i] << '\t' << scores.truth[i] << '\t';
    for (std::size_t l = 0; l < scores.scores[i].size(); ++l)
      out << (l ? "," : "") << FormatScore(scores.scores[i][l]);
    out << '\n';
  }
  if (!out) throw DataError("error writing " + path);
}

LrScores ReadLrScores(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open score file " + path);
  LrScores out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::string where = path + ":" + std::to_string(lineno);
    auto f = SplitTabs(line);
    if (f.size() != 3) throw DataError(where + ": expected 3 tab-separated fields");
    out.ids.push_back(f[0]);
    try {
      out.truth.push_back(std::stoi(f[1]));
    } catch (const std::exception &) {
      throw DataError(where + ": bad language id");
    }
    std::vector<double> row;
    std::stringstream ss(f[2]);
    std::string item;
    while (std::getline(ss, item, ',')) row.push_back(ParseScore(item, where));
    if (!out.scores.empty() && row.size() != out.scores[0].size())
      throw DataError(where + ": inconsistent number of languages");
    out.scores.push_back(std::move(row));
  }
  return out;
}

Config SrMetrics(const std::vector<SrScore> &scores) {
  std::vector<double> target, nontarget;
  for (const SrScore &s : scores) (s.target ? target : nontarget).push_back(s.score);
  Config report;
  double eer = Eer(target, nontarget);
  DcfResult d08 = MinDcf(target, nontarget, kDcf08), d10 = MinDcf(target, nontarget, kDcf10);
  report.Set("task", "sr");
  report.Set("eer", eer);
  report.Set("mindcf08", d08.cost);
  report.Set("mindcf08_threshold", d08.threshold);
  report.Set("mindcf10", d10.cost);
  report.Set("mindcf10_threshold", d10.threshold);
  if (eer > 0.5) report.Set("warning", "eer above 0.5, scores look oriented target-low");
  report.Set("n_target", std::uint64_t{target.size()});
  report.Set("n_nontarget", std::uint64_t{nontarget.size()});
  return report;
}

Config LrMetrics(const LrScores &scores, std::size_t n_languages) {
  std::vector<double> target, nontarget;
  LanguageTrials(scores.scores, scores.truth, &target, &nontarget);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < scores.scores.size(); ++i) {
    const auto &row = scores.scores[i];
    std::size_t best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    correct += static_cast<int>(best) == scores.truth[i];
  }
  Config report;
  report.Set("task", "lr");
  double eer = Eer(target, nontarget);
  report.Set("eer", eer);
  if (eer > 0.5) report.Set("warning", "eer above 0.5, scores look oriented target-low");
  report.Set("cavg", CAvg(scores.scores, scores.truth, n_languages));
  report.Set("accuracy", static_cast<double>(correct) / static_cast<double>(scores.scores.size()));
  report.Set("n_utterances", std::uint64_t{scores.scores.size()});
  return report;
}

}  // namespace cfrp
