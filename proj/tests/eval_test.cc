// tests/eval_test.cc

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
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <set>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "cfrp/error.h"
#include "cfrp/eval.h"
#include "cfrp/random.h"
#include "cfrp/synth.h"

namespace cfrp {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Brute-force oracles. Each operating point is recounted from scratch.

struct Rates {
  double miss, fa;
};

Rates CountRates(const std::vector<double> &tar, const std::vector<double> &non, double th) {
  double miss = 0, fa = 0;
  for (double s : tar) miss += s < th;
  for (double s : non) fa += s >= th;
  return {miss / tar.size(), fa / non.size()};
}

std::vector<double> SweepThresholds(const std::vector<double> &tar, const std::vector<double> &non) {
  std::set<double> all(tar.begin(), tar.end());
  all.insert(non.begin(), non.end());
  std::vector<double> th(all.begin(), all.end());
  th.push_back(kInf);
  return th;
}

double OracleEer(const std::vector<double> &tar, const std::vector<double> &non) {
  std::vector<double> th = SweepThresholds(tar, non);
  for (std::size_t k = 0; k + 1 < th.size(); ++k) {
    Rates a = CountRates(tar, non, th[k]), b = CountRates(tar, non, th[k + 1]);
    double da = a.fa - a.miss, db = b.fa - b.miss;
    if (da == 0) return a.miss;
    if (da > 0 && db <= 0) {
      // Intersect the segment between the two operating points with p_fa = p_miss.
      double t = da / (da - db);
      return (1 - t) * a.miss + t * b.miss;
    }
  }
  return 1.0;
}

double OracleMinDcf(const std::vector<double> &tar, const std::vector<double> &non, DcfParams p) {
  double best = kInf;
  std::vector<double> th = SweepThresholds(tar, non);
  th.push_back(-kInf);
  for (double t : th) {
    Rates r = CountRates(tar, non, t);
    best = std::min(best, p.c_miss * p.p_target * r.miss + p.c_fa * (1 - p.p_target) * r.fa);
  }
  return best / std::min(p.c_miss * p.p_target, p.c_fa * (1 - p.p_target));
}

double OracleCavg(const std::vector<std::vector<double>> &llr, const std::vector<int> &truth,
                  int n) {
  double total = 0;
  for (int target = 0; target < n; ++target) {
    double miss = 0, n_target = 0;
    for (std::size_t s = 0; s < llr.size(); ++s)
      if (truth[s] == target) {
        n_target += 1;
        miss += !(llr[s][target] >= 0);
      }
    double cost = 0.5 * miss / n_target;
    for (int other = 0; other < n; ++other) {
      if (other == target) continue;
      double fa = 0, n_other = 0;
      for (std::size_t s = 0; s < llr.size(); ++s)
        if (truth[s] == other) {
          n_other += 1;
          fa += llr[s][target] >= 0;
        }
      cost += 0.5 * (fa / n_other) / (n - 1);
    }
    total += cost;
  }
  return total / n;
}

// Score lists with deliberate ties.
void RandomLists(std::mt19937_64 &gen, std::vector<double> *tar, std::vector<double> *non) {
  std::uniform_int_distribution<int> size(1, 50);
  std::normal_distribution<double> z(0.0, 1.0);
  int nt = size(gen), nn = size(gen);
  tar->clear();
  non->clear();
  for (int i = 0; i < nt; ++i) tar->push_back(std::round((z(gen) + 1.0) * 4) / 4);
  for (int i = 0; i < nn; ++i) non->push_back(std::round(z(gen) * 4) / 4);
}

TEST(EerTest, Examples) {
  EXPECT_EQ(Eer({2.0, 3.0}, {0.0, 1.0}), 0.0);
  EXPECT_EQ(Eer({1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}), 0.5);
  // Thresholds 0.1, 0.4, 0.6, 0.9, inf give (p_miss, p_fa) = (0, 1), (0, .5),
  // (.5, .5), (.5, 0), (1, 0); the rates meet at 0.6.
  EXPECT_EQ(Eer({0.9, 0.4}, {0.6, 0.1}), 0.5);
  EXPECT_DOUBLE_EQ(OracleEer({0.9, 0.4}, {0.6, 0.1}), 0.5);
  // Interpolated: (miss, fa) goes (0, 1/3) -> (1/2, 1/3) between thresholds 1 and 2,
  // fa - miss changes sign 2/3 of the way, so EER = 1/3.
  EXPECT_NEAR(Eer({1.0, 3.0}, {0.0, 0.5, 2.0}), 1.0 / 3.0, 1e-15);
}

TEST(EerTest, MatchesOracle) {
  std::mt19937_64 gen(1);
  std::vector<double> tar, non;
  for (int rep = 0; rep < 300; ++rep) {
    RandomLists(gen, &tar, &non);
    ASSERT_NEAR(Eer(tar, non), OracleEer(tar, non), 1e-10) << rep;
  }
}

TEST(EerTest, EmptyList) {
  EXPECT_THROW(Eer({}, {1.0}), ContractError);
  EXPECT_THROW(Eer({1.0}, {}), ContractError);
}

TEST(DetTest, EndPoints) {
  auto det = DetCurve({1.0, 2.0}, {0.0, 1.5});
  ASSERT_EQ(det.size(), 5u);
  EXPECT_EQ(det.front().p_miss, 0.0);
  EXPECT_EQ(det.front().p_fa, 1.0);
  EXPECT_EQ(det.back().threshold, kInf);
  EXPECT_EQ(det.back().p_miss, 1.0);
  EXPECT_EQ(det.back().p_fa, 0.0);
}

TEST(MinDcfTest, Examples) {
  EXPECT_EQ(MinDcf({2.0, 3.0}, {0.0, 1.0}, kDcf08).cost, 0.0);
  // Threshold 0.9 leaves p_miss = .5, p_fa = 0: 10 * .01 * .5 / (10 * .01).
  DcfResult r = MinDcf({0.9, 0.4}, {0.6, 0.1}, kDcf08);
  EXPECT_NEAR(r.cost, 0.5, 1e-15);
  EXPECT_EQ(r.threshold, 0.9);
  EXPECT_NEAR(OracleMinDcf({0.9, 0.4}, {0.6, 0.1}, kDcf08), 0.5, 1e-15);
  // With targets below every nontarget, rejecting everything is best.
  r = MinDcf({0.0}, {1.0, 2.0}, kDcf10);
  EXPECT_EQ(r.cost, 1.0);
  EXPECT_EQ(r.threshold, kInf);
}

TEST(MinDcfTest, MatchesOracleAndIsBounded) {
  std::mt19937_64 gen(2);
  std::vector<double> tar, non;
  for (int rep = 0; rep < 300; ++rep) {
    RandomLists(gen, &tar, &non);
    for (DcfParams p : {kDcf08, kDcf10, DcfParams{1, 1, 0.5}}) {
      double c = MinDcf(tar, non, p).cost;
      ASSERT_NEAR(c, OracleMinDcf(tar, non, p), 1e-10) << rep;
      ASSERT_LE(c, 1.0);
    }
  }
  EXPECT_THROW(MinDcf({}, {1.0}, kDcf08), ContractError);
  EXPECT_THROW(MinDcf({1.0}, {1.0}, DcfParams{1, 1, 1.0}), ContractError);
}

TEST(CavgTest, Examples) {
  EXPECT_EQ(CAvg({{50, -50}, {-50, 50}}, {0, 1}, 2), 0.0);
  // Always wrong: every miss and every false alarm happens.
  EXPECT_EQ(CAvg({{-5, 5}, {5, -5}}, {0, 1}, 2), 1.0);
  EXPECT_EQ(OracleCavg({{-5, 5}, {5, -5}}, {0, 1}, 2), 1.0);
  // Rejecting everything costs only the misses.
  EXPECT_EQ(CAvg({{-1, -1, -1}, {-1, -1, -1}, {-1, -1, -1}}, {0, 1, 2}, 3), 0.5);
}

TEST(CavgTest, MatchesOracle) {
  std::mt19937_64 gen(3);
  std::normal_distribution<double> z(0.0, 1.0);
  for (int rep = 0; rep < 200; ++rep) {
    int n = 2 + rep % 4;
    std::size_t segs = n + gen() % (100 / n - 1);
    std::vector<std::vector<double>> llr(segs, std::vector<double>(n));
    std::vector<int> truth(segs);
    for (std::size_t s = 0; s < segs; ++s) {
      truth[s] = s < static_cast<std::size_t>(n) ? static_cast<int>(s) : static_cast<int>(gen() % n);
      for (int l = 0; l < n; ++l) llr[s][l] = std::round((z(gen) + (l == truth[s])) * 2) / 2;
    }
    ASSERT_NEAR(CAvg(llr, truth, n), OracleCavg(llr, truth, n), 1e-10) << rep;
  }
}

TEST(CavgTest, UniformScoresCostHalf) {
  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const int n = 4;
  std::vector<std::vector<double>> llr(40000, std::vector<double>(n));
  std::vector<int> truth(llr.size());
  for (std::size_t s = 0; s < llr.size(); ++s) {
    truth[s] = static_cast<int>(s % n);
    for (double &v : llr[s]) v = u(gen);
  }
  // Each miss and false-alarm probability is 1/2.
  EXPECT_NEAR(CAvg(llr, truth, n), 0.5, 0.01);
}

TEST(CavgTest, Errors) {
  EXPECT_THROW(CAvg({{1, 0}}, {0}, 1), ContractError);
  EXPECT_THROW(CAvg({{1, 0}, {0, 1}}, {0, 0}, 2), DataError);  // language 1 absent
  EXPECT_THROW(CAvg({{1, 0}}, {0, 1}, 2), ContractError);
}

TEST(MetricsTest, InvariantUnderMonotoneTransforms) {
  std::mt19937_64 gen(5);
  std::vector<double> tar, non;
  auto apply = [](const std::vector<double> &v, double (*f)(double)) {
    std::vector<double> out;
    for (double x : v) out.push_back(f(x));
    return out;
  };
  double (*general[])(double) = {[](double x) { return 3.0 * x - 7.0; },
                                 [](double x) { return std::exp(x); },
                                 [](double x) { return x * x * x + x; }};
  for (int rep = 0; rep < 100; ++rep) {
    RandomLists(gen, &tar, &non);
    for (auto f : general) {
      std::vector<double> ft = apply(tar, f), fn = apply(non, f);
      ASSERT_NEAR(Eer(ft, fn), Eer(tar, non), 1e-12);
      ASSERT_NEAR(MinDcf(ft, fn, kDcf08).cost, MinDcf(tar, non, kDcf08).cost, 1e-12);
      ASSERT_NEAR(MinDcf(ft, fn, kDcf10).cost, MinDcf(tar, non, kDcf10).cost, 1e-12);
    }
  }
  // Cavg decides at LLR 0, so its transforms must also keep the sign.
  double (*signed_maps[])(double) = {[](double x) { return 2.0 * x; },
                                     [](double x) { return x * x * x; },
                                     [](double x) { return std::sinh(x); }};
  std::normal_distribution<double> z(0.0, 1.0);
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<std::vector<double>> llr(30, std::vector<double>(3));
    std::vector<int> truth(30);
    for (std::size_t s = 0; s < 30; ++s) {
      truth[s] = static_cast<int>(s % 3);
      for (double &v : llr[s]) v = std::round(z(gen) * 4) / 4;
    }
    double base = CAvg(llr, truth, 3);
    for (auto f : signed_maps) {
      auto mapped = llr;
      for (auto &row : mapped)
        for (double &v : row) v = f(v);
      ASSERT_NEAR(CAvg(mapped, truth, 3), base, 1e-12);
    }
  }
}

TEST(CalibrationTest, LogSoftmaxPlusLogN) {
  std::vector<double> s = CalibrateLanguageScores(Tensor::Vector({0.0, 0.0, 0.0, 0.0}));
  for (double v : s) EXPECT_NEAR(v, 0.0, 1e-15);
  s = CalibrateLanguageScores(Tensor::Vector({1.0, 2.0}));
  EXPECT_NEAR(s[1] - s[0], 1.0, 1e-15);
  EXPECT_NEAR(std::exp(s[0]) + std::exp(s[1]), 2.0, 1e-15);
}

TEST(CosineTest, Examples) {
  Tensor a = Tensor::Vector({1.0, 2.0, 0.0});
  EXPECT_NEAR(CosineScore(a, Tensor::Vector({2.0, 4.0, 0.0})), 1.0, 1e-15);
  EXPECT_NEAR(CosineScore(a, Tensor::Vector({-2.0, 1.0, 5.0})), 0.0, 1e-15);
  EXPECT_NEAR(CosineScore(a, Tensor::Vector({-1.0, -2.0, 0.0})), -1.0, 1e-15);
  EXPECT_THROW(CosineScore(a, Tensor::Vector({0.0, 0.0, 0.0})), ContractError);
  EXPECT_THROW(CosineScore(a, Tensor::Vector({1.0})), ContractError);
}

// ---------------------------------------------------------------------------
// PLDA.

Tensor Mat2(double a, double b, double c, double d) { return Tensor::FromRows({{a, b}, {c, d}}); }

double Gauss1(double x, double var) { return std::exp(-0.5 * x * x / var) / std::sqrt(2 * M_PI * var); }

// LLR by integrating the shared latent class variable numerically.
double QuadratureLlr1(double b, double w, double e, double t) {
  const double sd = std::sqrt(b);
  const int n = 200000;
  const double lo = -14 * sd, hi = 14 * sd, h = (hi - lo) / n;
  double same = 0.0;
  for (int i = 0; i <= n; ++i) {
    double y = lo + i * h;
    double f = Gauss1(e - y, w) * Gauss1(t - y, w) * Gauss1(y, b);
    same += (i == 0 || i == n ? 0.5 : 1.0) * f;
  }
  same *= h;
  return std::log(same) - std::log(Gauss1(e, b + w)) - std::log(Gauss1(t, b + w));
}

double GaussN(const Eigen::Vector2d &x, const Eigen::Matrix2d &cov) {
  return std::exp(-0.5 * x.dot(cov.inverse() * x)) / (2 * M_PI * std::sqrt(cov.determinant()));
}

double QuadratureLlr2(const Eigen::Matrix2d &b, const Eigen::Matrix2d &w, const Eigen::Vector2d &e,
                      const Eigen::Vector2d &t) {
  const int n = 1200;
  const double r = 12 * std::sqrt(b.diagonal().maxCoeff()), h = 2 * r / n;
  double same = 0.0;
  for (int i = 0; i <= n; ++i) {
    for (int j = 0; j <= n; ++j) {
      Eigen::Vector2d y(-r + i * h, -r + j * h);
      double wt = (i == 0 || i == n ? 0.5 : 1.0) * (j == 0 || j == n ? 0.5 : 1.0);
      same += wt * GaussN(e - y, w) * GaussN(t - y, w) * GaussN(y, b);
    }
  }
  same *= h * h;
  return std::log(same) - std::log(GaussN(e, b + w)) - std::log(GaussN(t, b + w));
}

PldaConfig Raw() {
  PldaConfig c;
  c.length_normalize = false;
  return c;
}

TEST(PldaTest, MatchesQuadratureOneDim) {
  struct Case {
    double b, w, e, t;
  };
  for (Case c : {Case{1.0, 0.5, 0.3, -0.2}, Case{2.0, 0.3, 1.5, 1.2}, Case{0.5, 1.0, -2.0, 1.0},
                 Case{1.0, 0.1, 0.0, 3.0}}) {
    Plda plda(Tensor::Vector({0.0}), Tensor::FromRows({{c.b}}), Tensor::FromRows({{c.w}}), Raw());
    double llr = plda.ScorePreprocessed(Tensor::Vector({c.e}), Tensor::Vector({c.t}));
    double oracle = QuadratureLlr1(c.b, c.w, c.e, c.t);
    // Relative error of the likelihood ratio itself.
    EXPECT_LT(std::abs(std::expm1(llr - oracle)), 1e-6) << llr << " vs " << oracle;
    EXPECT_LT(std::abs(llr - oracle), 1e-6 * std::max(1.0, std::abs(oracle)));
  }
}

TEST(PldaTest, MatchesQuadratureTwoDim) {
  Eigen::Matrix2d b, w;
  b << 1.0, 0.3, 0.3, 0.6;
  w << 0.4, -0.1, -0.1, 0.3;
  Plda plda(Tensor::Vector({0.0, 0.0}), Mat2(1.0, 0.3, 0.3, 0.6), Mat2(0.4, -0.1, -0.1, 0.3), Raw());
  for (auto [e, t] : {std::pair{Eigen::Vector2d(0.5, -0.2), Eigen::Vector2d(0.4, 0.1)},
                      std::pair{Eigen::Vector2d(1.0, 1.0), Eigen::Vector2d(-1.0, 0.5)}}) {
    double llr = plda.ScorePreprocessed(Tensor::Vector({e[0], e[1]}), Tensor::Vector({t[0], t[1]}));
    double oracle = QuadratureLlr2(b, w, e, t);
    EXPECT_LT(std::abs(std::expm1(llr - oracle)), 1e-6) << llr << " vs " << oracle;
  }
}

struct Sampled {
  std::vector<Tensor> x;
  std::vector<int> labels;
};

Sampled SampleModel(const Eigen::MatrixXd &b, const Eigen::MatrixXd &w, const Eigen::VectorXd &mu,
                    int classes, int per_class, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  Eigen::MatrixXd lb = b.llt().matrixL(), lw = w.llt().matrixL();
  const Eigen::Index d = mu.size();
  Sampled s;
  for (int k = 0; k < classes; ++k) {
    Eigen::VectorXd g(d);
    for (Eigen::Index i = 0; i < d; ++i) g[i] = z(rng);
    Eigen::VectorXd y = lb * g;
    for (int j = 0; j < per_class; ++j) {
      for (Eigen::Index i = 0; i < d; ++i) g[i] = z(rng);
      Eigen::VectorXd x = mu + y + lw * g;
      Tensor t(Shape{static_cast<std::size_t>(d)});
      for (Eigen::Index i = 0; i < d; ++i) t[i] = x[i];
      s.x.push_back(t);
      s.labels.push_back(k);
    }
  }
  return s;
}

double FrobeniusRel(const Tensor &est, const Eigen::MatrixXd &truth) {
  return (est.matrix() - truth).norm() / truth.norm();
}

TEST(PldaTest, GenerateAndRecover) {
  Eigen::MatrixXd b(2, 2), w(2, 2);
  b << 2.0, 0.5, 0.5, 1.0;
  w << 0.5, 0.1, 0.1, 0.3;
  Eigen::VectorXd mu(2);
  mu << 1.0, -2.0;
  Sampled s = SampleModel(b, w, mu, 1000, 10, 7);  // 10^4 samples
  std::vector<double> trace;
  Plda plda = Plda::Fit(s.x, s.labels, Raw(), &trace);
  EXPECT_LT(FrobeniusRel(plda.between(), b), 0.1);
  EXPECT_LT(FrobeniusRel(plda.within(), w), 0.1);
  EXPECT_NEAR(plda.mean()[0], 1.0, 0.15);
  EXPECT_NEAR(plda.mean()[1], -2.0, 0.15);
  ASSERT_GE(trace.size(), 2u);
  for (std::size_t i = 1; i < trace.size(); ++i)
    EXPECT_GE(trace[i], trace[i - 1] - 1e-9 * std::abs(trace[i - 1])) << i;
}

TEST(PldaTest, EmLikelihoodNondecreasing) {
  Eigen::MatrixXd b = Eigen::MatrixXd::Identity(4, 4) * 0.7, w = Eigen::MatrixXd::Identity(4, 4);
  b(0, 1) = b(1, 0) = 0.3;
  w(2, 3) = w(3, 2) = -0.4;
  Sampled s = SampleModel(b, w, Eigen::VectorXd::Zero(4), 30, 3, 8);
  for (bool norm : {false, true}) {
    PldaConfig cfg;
    cfg.length_normalize = norm;
    cfg.tolerance = 0.0;
    cfg.max_iters = 40;
    std::vector<double> trace;
    Plda::Fit(s.x, s.labels, cfg, &trace);
    ASSERT_EQ(trace.size(), 41u);
    for (std::size_t i = 1; i < trace.size(); ++i)
      EXPECT_GE(trace[i], trace[i - 1] - 1e-9 * std::abs(trace[i - 1])) << i;
  }
}

TEST(PldaTest, ZeroWithinClassVarianceIsRegularized) {
  std::vector<Tensor> x;
  std::vector<int> labels;
  for (int k = 0; k < 5; ++k)
    for (int j = 0; j < 3; ++j) {
      x.push_back(Tensor::Vector({1.0 * k, 2.0 - k, 0.5 * k * k}));
      labels.push_back(k);
    }
  Plda plda = Plda::Fit(x, labels, Raw());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(plda.within().matrix()));
  EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
  double same = plda.Score({x[0]}, x[1]), diff = plda.Score({x[0]}, x[4]);
  EXPECT_TRUE(std::isfinite(same));
  EXPECT_TRUE(std::isfinite(diff));
  EXPECT_GT(same, diff);
}

TEST(PldaTest, Symmetric) {
  Eigen::MatrixXd b = Eigen::MatrixXd::Identity(3, 3), w = Eigen::MatrixXd::Identity(3, 3) * 0.5;
  Sampled s = SampleModel(b, w, Eigen::VectorXd::Zero(3), 20, 4, 9);
  Plda plda = Plda::Fit(s.x, s.labels, PldaConfig{});
  for (std::size_t i = 0; i + 1 < s.x.size(); i += 7) {
    EXPECT_NEAR(plda.Score({s.x[i]}, s.x[i + 1]), plda.Score({s.x[i + 1]}, s.x[i]), 1e-10);
    EXPECT_NEAR(plda.ScorePreprocessed(s.x[i], s.x[i + 1]), plda.ScorePreprocessed(s.x[i + 1], s.x[i]),
                1e-10);
  }
}

TEST(PldaTest, SameClassScoresHigherOnAverage) {
  Eigen::MatrixXd b = Eigen::MatrixXd::Identity(3, 3), w = Eigen::MatrixXd::Identity(3, 3);
  Sampled train = SampleModel(b, w, Eigen::VectorXd::Zero(3), 200, 5, 10);
  Plda plda = Plda::Fit(train.x, train.labels, PldaConfig{});
  Sampled test = SampleModel(b, w, Eigen::VectorXd::Zero(3), 400, 2, 11);
  double same = 0, diff = 0;
  for (std::size_t k = 0; k + 1 < 400; ++k) {
    same += plda.Score({test.x[2 * k]}, test.x[2 * k + 1]);
    diff += plda.Score({test.x[2 * k]}, test.x[2 * k + 2]);
  }
  EXPECT_GT(same / 399, diff / 399 + 0.5);
}

TEST(PldaTest, Errors) {
  std::vector<Tensor> x{Tensor::Vector({1.0}), Tensor::Vector({2.0})};
  EXPECT_THROW(Plda::Fit(x, {0, 0}, PldaConfig{}), DataError);  // single class
  EXPECT_THROW(Plda::Fit(x, {0, 1}, PldaConfig{}), DataError);  // no repeated class
  Plda plda(Tensor::Vector({0.0, 0.0}), Mat2(1, 0, 0, 1), Mat2(1, 0, 0, 1), PldaConfig{});
  EXPECT_THROW(plda.Score({Tensor::Vector({1.0})}, Tensor::Vector({1.0, 2.0})), ContractError);
  EXPECT_THROW(plda.ScorePreprocessed(Tensor::Vector({1.0}), Tensor::Vector({1.0, 2.0})),
               ContractError);
  EXPECT_THROW(plda.Score({}, Tensor::Vector({1.0, 2.0})), ContractError);
}

TEST(PldaTest, EnrollmentVectorsAreAveraged) {
  Plda plda(Tensor::Vector({0.5, -0.5}), Mat2(1, 0.2, 0.2, 1), Mat2(0.5, 0, 0, 0.5), PldaConfig{});
  Tensor a = Tensor::Vector({1.0, 2.0}), b = Tensor::Vector({-1.0, 0.5}), t = Tensor::Vector({0.2, 0.9});
  Tensor pa = plda.Preprocess(a), pb = plda.Preprocess(b);
  Tensor avg = Tensor::Vector({(pa[0] + pb[0]) / 2, (pa[1] + pb[1]) / 2});
  EXPECT_NEAR(plda.Score({a, b}, t), plda.ScorePreprocessed(avg, plda.Preprocess(t)), 1e-12);
}

TEST(PldaTest, LengthNormalization) {
  Plda plda(Tensor::Vector({1.0, 1.0}), Mat2(1, 0, 0, 1), Mat2(1, 0, 0, 1), PldaConfig{});
  Tensor p = plda.Preprocess(Tensor::Vector({4.0, 5.0}));
  EXPECT_NEAR(p[0] * p[0] + p[1] * p[1], 2.0, 1e-14);
  EXPECT_NEAR(p[1] / p[0], 4.0 / 3.0, 1e-14);
}

TEST(FloorEigenvaluesTest, Floors) {
  Tensor m = FloorEigenvalues(Mat2(1, 1, 1, 1), 0.1);  // eigenvalues 2 and 0
  EXPECT_NEAR(m(0, 0), 1.05, 1e-12);
  EXPECT_NEAR(m(0, 1), 0.95, 1e-12);
  EXPECT_EQ(m(0, 1), m(1, 0));
}

// ---------------------------------------------------------------------------
// Inference and score files.

LrHeadConfig SmallLr() {
  LrHeadConfig c;
  c.n_languages = 3;
  c.hidden = 5;
  c.channels = 4;
  return c;
}

Tensor Frames(std::size_t t, std::uint64_t seed) {
  Rng rng(seed);
  return NormalTensor({t, 6}, 1.0, rng);
}

TEST(PoolAndClassifyTest, ShortUtteranceIsOneSegment) {
  FeatureSource src = FeatureSource::Baseline(2, 6);
  for (LrVariant v : {LrVariant::kBiRecurrent, LrVariant::kDiCnn}) {
    LrHeadConfig cfg = SmallLr();
    cfg.variant = v;
    LrHead head(cfg, src.output_dim(), 3);
    Tensor x = Frames(30, 4);
    Tape tape;
    Var reps = src.Combine(tape, src.Extract(x), head.mixer());
    Tensor direct = LogSoftmax(head.Forward(tape, reps, false), 0).value();
    EXPECT_TRUE(PoolAndClassify(x, src, head, 100).BitwiseEquals(direct));
  }
}

TEST(PoolAndClassifyTest, DuplicatedSegmentKeepsPrediction) {
  FeatureSource src = FeatureSource::Baseline(2, 6);
  LrHead head(SmallLr(), src.output_dim(), 5);
  ParameterSet &p = head.params();
  Rng rng(6);
  p.Get("lr.sap.context").value = NormalTensor(p.Get("lr.sap.context").value.shape(), 1.0, rng);
  Tensor seg = Frames(20, 7);
  Tensor twice(Shape{40, 6});
  for (std::size_t t = 0; t < 40; ++t)
    for (std::size_t j = 0; j < 6; ++j) twice(t, j) = seg(t % 20, j);
  Tensor one = PoolAndClassify(seg, src, head, 20), two = PoolAndClassify(twice, src, head, 20);
  for (std::size_t l = 0; l < 3; ++l) EXPECT_NEAR(one[l], two[l], 1e-12);
}

TEST(PoolAndClassifyTest, ProbabilitiesSumToOne) {
  FeatureSource src = FeatureSource::Baseline(2, 6);
  LrHead head(SmallLr(), src.output_dim(), 8);
  for (std::size_t t : {1, 7, 99, 250}) {
    Tensor s = PoolAndClassify(Frames(t, t), src, head, 50);
    double total = 0;
    for (std::size_t l = 0; l < s.size(); ++l) total += std::exp(s[l]);
    EXPECT_NEAR(total, 1.0, 1e-9);
  }
  EXPECT_THROW(PoolAndClassify(Tensor(Shape{0, 6}), src, head, 50), DataError);
}

TEST(EmbeddingTest, DeterministicWithEmbeddingDim) {
  FeatureSource src = FeatureSource::Baseline(2, 6);
  SrHeadConfig cfg;
  cfg.n_speakers = 4;
  cfg.channels = 8;
  cfg.d_emb = 5;
  SrHead head(cfg, src.output_dim(), 9);
  Tensor x = Frames(40, 10);
  Tensor a = ExtractEmbedding(x, src, head), b = ExtractEmbedding(x, src, head);
  EXPECT_EQ(a.size(), 5u);
  EXPECT_TRUE(a.BitwiseEquals(b));
  EXPECT_THROW(ExtractEmbedding(Tensor(Shape{0, 6}), src, head), DataError);
}

TEST(EmbeddingTest, SpeakersClusterOnSyntheticCorpus) {
  GeneratorConfig g;
  g.n_speakers = 6;
  g.n_eval_speakers = 1;
  g.utts_per_speaker = 6;
  g.eval_utts_per_speaker = 2;
  g.seed = 12;
  Corpus c = CorpusGenerator(g).Generate().train;
  FeatureSource src = FeatureSource::Baseline(3, g.feature_dim);
  SrHeadConfig cfg;
  cfg.n_speakers = 6;
  SrHead head(cfg, src.output_dim(), 13);
  std::vector<Tensor> emb;
  for (const Utterance &u : c.utterances) emb.push_back(ExtractEmbedding(u.features, src, head));
  auto dist = [&](std::size_t i, std::size_t j) {
    double d = 0;
    for (std::size_t k = 0; k < emb[i].size(); ++k) d += (emb[i][k] - emb[j][k]) * (emb[i][k] - emb[j][k]);
    return std::sqrt(d);
  };
  // Mean silhouette over utterances, clusters = speakers.
  double total = 0;
  for (std::size_t i = 0; i < emb.size(); ++i) {
    std::vector<double> sum(6, 0.0), count(6, 0.0);
    for (std::size_t j = 0; j < emb.size(); ++j) {
      if (i == j) continue;
      sum[c.utterances[j].speaker] += dist(i, j);
      count[c.utterances[j].speaker] += 1;
    }
    int own = c.utterances[i].speaker;
    double a = sum[own] / count[own], b = kInf;
    for (int k = 0; k < 6; ++k)
      if (k != own) b = std::min(b, sum[k] / count[k]);
    total += (b - a) / std::max(a, b);
  }
  EXPECT_GT(total / emb.size(), 0.0);
}

TEST(ScoreFileTest, SrRoundTrip) {
  std::string path = (std::filesystem::temp_directory_path() / "cfrp_sr_scores.tsv").string();
  std::vector<SrScore> s{{"spk001", "spk001-utt003", 1.0 / 3.0, true},
                         {"spk002", "spk001-utt003", -1e-300, false}};
  WriteSrScores(s, path);
  std::vector<SrScore> r = ReadSrScores(path);
  ASSERT_EQ(r.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(r[i].enroll, s[i].enroll);
    EXPECT_EQ(r[i].test, s[i].test);
    EXPECT_EQ(r[i].score, s[i].score);
    EXPECT_EQ(r[i].target, s[i].target);
  }
  std::filesystem::remove(path);
  EXPECT_THROW(ReadSrScores(path), DataError);
}

TEST(ScoreFileTest, LrRoundTripAndMalformed) {
  std::string path = (std::filesystem::temp_directory_path() / "cfrp_lr_scores.tsv").string();
  LrScores s{{"a", "b"}, {0, 1}, {{0.1, -2.0 / 3.0}, {1e10, -1e-10}}};
  WriteLrScores(s, path);
  LrScores r = ReadLrScores(path);
  EXPECT_EQ(r.ids, s.ids);
  EXPECT_EQ(r.truth, s.truth);
  EXPECT_EQ(r.scores, s.scores);
  {
    std::ofstream out(path);
    out << "a\t0\t0.1,x\n";
  }
  EXPECT_THROW(ReadLrScores(path), DataError);
  {
    std::ofstream out(path);
    out << "a\t0\t0.1,0.2\nb\t1\t0.3\n";
  }
  EXPECT_THROW(ReadLrScores(path), DataError);
  std::filesystem::remove(path);
}

TEST(ReportTest, PerfectScores) {
  LrScores lr{{"a", "b", "c"}, {0, 1, 2}, {{5, -5, -5}, {-5, 5, -5}, {-5, -5, 5}}};
  Config m = LrMetrics(lr, 3);
  EXPECT_EQ(m.GetDouble("eer", -1), 0.0);
  EXPECT_EQ(m.GetDouble("cavg", -1), 0.0);
  EXPECT_EQ(m.GetDouble("accuracy", -1), 1.0);
  EXPECT_FALSE(m.Has("warning"));

  std::vector<SrScore> sr{{"x", "1", 2.0, true}, {"x", "2", -1.0, false}, {"y", "1", 0.0, false}};
  m = SrMetrics(sr);
  EXPECT_EQ(m.GetDouble("eer", -1), 0.0);
  EXPECT_EQ(m.GetDouble("mindcf08", -1), 0.0);
  EXPECT_EQ(m.GetUint("n_target", 0), 1u);
  EXPECT_EQ(m.GetUint("n_nontarget", 0), 2u);
}

TEST(ReportTest, ReversedScoresWarn) {
  std::vector<SrScore> sr{{"x", "1", -2.0, true}, {"x", "2", 1.0, false}};
  Config m = SrMetrics(sr);
  EXPECT_EQ(m.GetDouble("eer", -1), 1.0);
  EXPECT_TRUE(m.Has("warning"));
}

}  // namespace
}  // namespace cfrp
