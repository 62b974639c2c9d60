// include/cfrp/ctc.h

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

#ifndef CFRP_CTC_H_
#define CFRP_CTC_H_

#include <cstddef>
#include <vector>

#include "cfrp/autodiff.h"

namespace cfrp {

/// Token indices in [0, V); the blank is never part of a label.
using LabelSequence = std::vector<int>;

// Logits are [T, V + 1] with the blank at the last column (index V).

/// Minimum number of frames that can emit `label`: its length plus one
/// separating blank per pair of equal adjacent tokens.
std::size_t CtcMinFrames(const LabelSequence &label);

/// Negative log-probability of `label` summed over all alignments,
/// computed by log-space forward-backward over the blank-interleaved
/// lattice. Differentiable w.r.t. `logits`. Infeasible lengths raise
/// InfeasibleLabelError; empty labels or out-of-range tokens ContractError.
Var CtcLoss(Var logits, const LabelSequence &label);

/// Reference value by enumerating every length-T symbol path. Refuses
/// (ContractError) when (V + 1)^T exceeds 1e7.
double BruteForceCtc(const Tensor &logits, const LabelSequence &label);

/// Collapses a frame-level symbol path: merge adjacent repeats, drop blanks.
LabelSequence CollapsePath(const std::vector<int> &path, int blank);

/// Per-frame argmax (lowest index on ties) followed by CollapsePath.
LabelSequence GreedyDecode(const Tensor &logits);

std::size_t EditDistance(const LabelSequence &a, const LabelSequence &b);

/// Levenshtein(hyp, ref) / |ref|; empty `ref` raises ContractError.
double TokenErrorRate(const LabelSequence &hyp, const LabelSequence &ref);

}  // namespace cfrp

#endif  // CFRP_CTC_H_
