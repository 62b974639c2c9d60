// src/ctc.cc

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

#include "cfrp/ctc.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cfrp/error.h"

namespace cfrp {
namespace {

constexpr Real kNegInf = -std::numeric_limits<Real>::infinity();

Real LogAdd(Real a, Real b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  Real hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

void ValidateLabel(const LabelSequence &label, std::size_t vocab) {
  if (label.empty()) throw ContractError("ctc: empty label sequence");
  for (int token : label)
    if (token < 0 || static_cast<std::size_t>(token) >= vocab)
      throw ContractError("ctc: token " + std::to_string(token) + " outside [0, " +
                          std::to_string(vocab) + ")");
}

void RequireFeasible(std::size_t frames, const LabelSequence &label) {
  std::size_t need = CtcMinFrames(label);
  if (frames < need)
    throw InfeasibleLabelError("ctc: label of length " + std::to_string(label.size()) + " needs " +
                               std::to_string(need) + " frames, got " + std::to_string(frames));
}

RowMatrix LogSoftmaxRows(const Tensor &logits) {
  if (!logits.AllFinite()) throw NumericError("ctc: non-finite logits");
  RowMatrix out(logits.rows(), logits.cols());
  for (std::size_t t = 0; t < logits.rows(); ++t) {
    Real max = logits.matrix().row(t).maxCoeff();
    Real total = 0.0;
    for (std::size_t k = 0; k < logits.cols(); ++k) total += std::exp(logits(t, k) - max);
    Real log_total = max + std::log(total);
    for (std::size_t k = 0; k < logits.cols(); ++k) out(t, k) = logits(t, k) - log_total;
  }
  return out;
}

}  // namespace

std::size_t CtcMinFrames(const LabelSequence &label) {
  std::size_t repeats = 0;
  for (std::size_t i = 1; i < label.size(); ++i)
    if (label[i] == label[i - 1]) ++repeats;
  return label.size() + repeats;
}

Var CtcLoss(Var logits, const LabelSequence &label) {
  const Tensor &lv = logits.value();
  if (lv.rank() != 2 || lv.dim(1) < 2)
    throw DimensionError("ctc: logits must be [T, V+1], got " + ShapeToString(lv.shape()));
  const std::size_t steps = lv.dim(0);
  const int blank = static_cast<int>(lv.dim(1)) - 1;
  ValidateLabel(label, static_cast<std::size_t>(blank));
  RequireFeasible(steps, label);

  // Extended label: blank, l1, blank, l2, ..., blank.
  const std::size_t states = 2 * label.size() + 1;
  std::vector<int> ext(states, blank);
  for (std::size_t i = 0; i < label.size(); ++i) ext[2 * i + 1] = label[i];
  auto can_skip = [&](std::size_t s) {  // transition s-2 -> s allowed
    return s >= 2 && ext[s] != blank && ext[s] != ext[s - 2];
  };

  RowMatrix log_probs = LogSoftmaxRows(lv);
  RowMatrix alpha = RowMatrix::Constant(steps, states, kNegInf);
  alpha(0, 0) = log_probs(0, blank);
  alpha(0, 1) = log_probs(0, ext[1]);
  for (std::size_t t = 1; t < steps; ++t) {
    for (std::size_t s = 0; s < states; ++s) {
      Real acc = alpha(t - 1, s);
      if (s >= 1) acc = LogAdd(acc, alpha(t - 1, s - 1));
      if (can_skip(s)) acc = LogAdd(acc, alpha(t - 1, s - 2));
      if (acc != kNegInf) alpha(t, s) = acc + log_probs(t, ext[s]);
    }
  }
  // beta(t, s): log-probability of emitting the rest of the label after
  // frame t given state s at frame t (excludes frame t's own emission).
  RowMatrix beta = RowMatrix::Constant(steps, states, kNegInf);
  beta(steps - 1, states - 1) = 0.0;
  beta(steps - 1, states - 2) = 0.0;
  for (std::size_t t = steps - 1; t-- > 0;) {
    for (std::size_t s = 0; s < states; ++s) {
      Real acc = beta(t + 1, s) + log_probs(t + 1, ext[s]);
      if (s + 1 < states) acc = LogAdd(acc, beta(t + 1, s + 1) + log_probs(t + 1, ext[s + 1]));
      if (s + 2 < states && can_skip(s + 2))
        acc = LogAdd(acc, beta(t + 1, s + 2) + log_probs(t + 1, ext[s + 2]));
      beta(t, s) = acc;
    }
  }
  Real log_likelihood = LogAdd(alpha(steps - 1, states - 1), alpha(steps - 1, states - 2));
  if (log_likelihood == kNegInf) throw InfeasibleLabelError("ctc: zero-probability label");

  // d(-log P)/d logit(t,k) = softmax(t,k) - sum_{s: ext[s]=k} exp(alpha + beta - log P).
  Tensor grad(lv.shape());
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t k = 0; k < lv.dim(1); ++k) grad(t, k) = std::exp(log_probs(t, k));
    for (std::size_t s = 0; s < states; ++s) {
      Real occ = alpha(t, s) + beta(t, s);
      if (occ != kNegInf) grad(t, ext[s]) -= std::exp(occ - log_likelihood);
    }
  }
  return logits.tape().Record(Tensor::Scalar(-log_likelihood), {logits},
                              [logits, grad = std::move(grad)](Tape &tape, const Tensor &g) {
                                Tensor &gl = tape.GradRef(logits);
                                for (std::size_t i = 0; i < gl.size(); ++i) gl[i] += g[0] * grad[i];
                              });
}

double BruteForceCtc(const Tensor &logits, const LabelSequence &label) {
  if (logits.rank() != 2 || logits.dim(1) < 2)
    throw DimensionError("ctc: logits must be [T, V+1], got " + ShapeToString(logits.shape()));
  const std::size_t steps = logits.dim(0), symbols = logits.dim(1);
  const int blank = static_cast<int>(symbols) - 1;
  ValidateLabel(label, static_cast<std::size_t>(blank));
  double paths = std::pow(static_cast<double>(symbols), static_cast<double>(steps));
  if (paths > 1e7)
    throw ContractError("brute_force_ctc: " + std::to_string(symbols) + "^" +
                        std::to_string(steps) + " paths exceeds the 1e7 enumeration limit");
  RowMatrix log_probs = LogSoftmaxRows(logits);
  std::vector<int> path(steps, 0);
  Real total = kNegInf;
  const std::size_t n_paths = static_cast<std::size_t>(paths);
  for (std::size_t code = 0; code < n_paths; ++code) {
    std::size_t rest = code;
    Real log_p = 0.0;
    for (std::size_t t = 0; t < steps; ++t) {
      path[t] = static_cast<int>(rest % symbols);
      rest /= symbols;
      log_p += log_probs(t, path[t]);
    }
    if (CollapsePath(path, blank) == label) total = LogAdd(total, log_p);
  }
  if (total == kNegInf)
    throw InfeasibleLabelError("brute_force_ctc: no path of length " + std::to_string(steps) +
                               " collapses to the label");
  return -total;
}

LabelSequence CollapsePath(const std::vector<int> &path, int blank) {
  LabelSequence out;
  int prev = -1;
  for (int symbol : path) {
    if (symbol != prev && symbol != blank) out.push_back(symbol);
    prev = symbol;
  }
  return out;
}

LabelSequence GreedyDecode(const Tensor &logits) {
  std::vector<int> path(logits.rows());
  for (std::size_t t = 0; t < logits.rows(); ++t) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < logits.cols(); ++k)
      if (logits(t, k) > logits(t, best)) best = k;
    path[t] = static_cast<int>(best);
  }
  return CollapsePath(path, static_cast<int>(logits.cols()) - 1);
}

std::size_t EditDistance(const LabelSequence &a, const LabelSequence &b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double TokenErrorRate(const LabelSequence &hyp, const LabelSequence &ref) {
  if (ref.empty()) throw ContractError("token_error_rate: empty reference");
  return static_cast<double>(EditDistance(hyp, ref)) / static_cast<double>(ref.size());
}

}  // namespace cfrp
