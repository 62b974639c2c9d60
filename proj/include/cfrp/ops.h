// include/cfrp/ops.h

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

#ifndef CFRP_OPS_H_
#define CFRP_OPS_H_

#include <cstddef>
#include <vector>

#include "cfrp/autodiff.h"

namespace cfrp {

// Differentiable primitives. Every op records its backward rule on the tape
// of its first operand. Broadcasting is limited to AddBias; anything else
// needs an explicit Reshape.

Var MatMul(Var a, Var b);
Var Transpose(Var a);

Var Add(Var a, Var b);
Var Sub(Var a, Var b);
Var Mul(Var a, Var b);
Var Scale(Var a, Real factor);
/// x[T, d] + bias[d] broadcast over rows; also accepts x[d].
Var AddBias(Var x, Var bias);

Var Tanh(Var x);
Var Sigmoid(Var x);
Var Relu(Var x);
/// Natural log; non-positive input raises NumericError.
Var Log(Var x);

/// Softmax along `axis` (rank 1: axis 0; rank 2: axis 0 or 1), computed with
/// max subtraction. Non-finite input raises NumericError.
Var Softmax(Var x, std::size_t axis);
Var LogSoftmax(Var x, std::size_t axis);

/// Row-wise normalization of x[T, d] followed by gain * x_hat + bias.
Var LayerNorm(Var x, Var gain, Var bias, Real eps = 1e-5);

Var ConcatCols(const std::vector<Var> &parts);
Var SliceCols(Var x, std::size_t begin, std::size_t count);
Var ConcatRows(const std::vector<Var> &parts);
Var SliceRows(Var x, std::size_t begin, std::size_t count);
Var Reshape(Var x, Shape shape);

Var Sum(Var x);
Var Mean(Var x);

/// -log softmax(logits)[target] for rank-1 logits.
Var CrossEntropy(Var logits, std::size_t target);

/// sum_l weights[l] * layers[l] for equally shaped layers.
Var MixLayers(Var weights, const std::vector<Var> &layers);

enum class ConvPadding {
  kCentered,   // odd kernels: taps -(k-1)/2 .. (k-1)/2 (times dilation)
  kLeftAligned // any kernel: taps -(k/2) .. k-1-(k/2) (times dilation)
};

/// Tap offsets (in frames) of a length-preserving dilated convolution.
std::vector<long> ConvTapOffsets(std::size_t kernel_size, std::size_t dilation,
                                 ConvPadding padding);

/// Length-preserving dilated 1-D convolution with zero padding.
/// x[T, c_in], kernel[k, c_in, c_out], bias[c_out] -> [T, c_out].
Var Conv1d(Var x, Var kernel, Var bias, std::size_t dilation, ConvPadding padding);

}  // namespace cfrp

#endif  // CFRP_OPS_H_
