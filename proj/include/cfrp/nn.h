// include/cfrp/nn.h

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

#ifndef CFRP_NN_H_
#define CFRP_NN_H_

#include <cstdint>
#include <string>
#include <vector>

#include "cfrp/autodiff.h"
#include "cfrp/ops.h"

namespace cfrp {

// Parameter creation. Weights are uniform in +-sqrt(6 / fan_in) and drawn from
// a stream derived from (seed, parameter name), so adding or reordering
// layers never perturbs the initialization of the others.
Tensor HeUniform(Shape shape, std::size_t fan_in, std::uint64_t seed, const std::string &name);

struct DenseParams {
  const Parameter *weight = nullptr;  // [d_in, d_out]
  const Parameter *bias = nullptr;    // [d_out]

  std::size_t d_in() const { return weight->value.dim(0); }
  std::size_t d_out() const { return weight->value.dim(1); }
};

DenseParams MakeDense(ParameterSet &params, const std::string &prefix, std::size_t d_in,
                      std::size_t d_out, std::uint64_t seed);
Var Dense(Tape &tape, Var x, const DenseParams &p, bool trainable = true);

/// Query/key/value projections are stored as [d, d] matrices whose column
/// block h * d_head .. (h + 1) * d_head is head h's [d, d_head] projection.
struct AttentionParams {
  const Parameter *query = nullptr;
  const Parameter *key = nullptr;
  const Parameter *value = nullptr;
  const Parameter *output = nullptr;  // [heads * d_head, d]
  std::size_t n_heads = 1;

  std::size_t d_model() const { return query->value.dim(0); }
  std::size_t d_head() const { return d_model() / n_heads; }
};

AttentionParams MakeAttention(ParameterSet &params, const std::string &prefix, std::size_t d_model,
                              std::size_t n_heads, std::uint64_t seed);

/// Non-causal multi-head scaled dot-product self-attention over all T
/// positions. When `weights_out` is given it receives one [T, T] attention
/// matrix per head.
Var MultiHeadSelfAttention(Tape &tape, Var x, const AttentionParams &p, bool trainable = true,
                           std::vector<Tensor> *weights_out = nullptr);

struct Conv1dParams {
  const Parameter *kernel = nullptr;  // [k, c_in, c_out]
  const Parameter *bias = nullptr;    // [c_out]
  std::size_t dilation = 1;
  ConvPadding padding = ConvPadding::kCentered;

  std::size_t kernel_size() const { return kernel->value.dim(0); }
  std::size_t c_in() const { return kernel->value.dim(1); }
  std::size_t c_out() const { return kernel->value.dim(2); }
};

Conv1dParams MakeConv1d(ParameterSet &params, const std::string &prefix, std::size_t kernel_size,
                        std::size_t c_in, std::size_t c_out, std::size_t dilation,
                        ConvPadding padding, std::uint64_t seed);
Var Conv1dDilated(Tape &tape, Var x, const Conv1dParams &p, bool trainable = true);

/// LSTM cell with gates packed as [input | forget | output | candidate].
struct LstmCellParams {
  const Parameter *input_weight = nullptr;      // [d_in, 4h]
  const Parameter *recurrent_weight = nullptr;  // [h, 4h]
  const Parameter *bias = nullptr;              // [4h], forget slice initialized to 1
  std::size_t hidden() const { return recurrent_weight->value.dim(0); }
};

struct BiRecurrentParams {
  LstmCellParams forward;
  LstmCellParams backward;
};

BiRecurrentParams MakeBiRecurrent(ParameterSet &params, const std::string &prefix,
                                  std::size_t d_in, std::size_t hidden, std::uint64_t seed);

/// Runs one LSTM direction over x[T, d_in]; `reverse` scans right to left.
/// Output row t is the hidden state after consuming position t.
Var LstmScan(Tape &tape, Var x, const LstmCellParams &p, bool reverse, bool trainable = true);

/// [T, 2h]: forward-direction states followed by backward-direction states.
Var BiRecurrent(Tape &tape, Var x, const BiRecurrentParams &p, bool trainable = true);

/// Fixed sinusoidal table: row t holds sin(t * w_i), cos(t * w_i) pairs with
/// w_i = 10000^(-2i / d_pos).
Tensor PositionalEmbedding(std::size_t length, std::size_t d_pos);

}  // namespace cfrp

#endif  // CFRP_NN_H_
