// src/nn.cc

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

#include "cfrp/nn.h"

#include <cmath>

#include "cfrp/error.h"
#include "cfrp/random.h"

namespace cfrp {

Tensor HeUniform(Shape shape, std::size_t fan_in, std::uint64_t seed, const std::string &name) {
  Rng rng = MakeRng(seed, name);
  Real bound = std::sqrt(6.0 / static_cast<Real>(std::max<std::size_t>(fan_in, 1)));
  return UniformTensor(std::move(shape), -bound, bound, rng);
}

DenseParams MakeDense(ParameterSet &params, const std::string &prefix, std::size_t d_in,
                      std::size_t d_out, std::uint64_t seed) {
  DenseParams p;
  std::string w = prefix + ".weight";
  p.weight = &params.Add(w, HeUniform({d_in, d_out}, d_in, seed, w));
  p.bias = &params.Add(prefix + ".bias", Tensor(Shape{d_out}, 0.0));
  return p;
}

Var Dense(Tape &tape, Var x, const DenseParams &p, bool trainable) {
  return AddBias(MatMul(x, tape.Param(*p.weight, trainable)), tape.Param(*p.bias, trainable));
}

AttentionParams MakeAttention(ParameterSet &params, const std::string &prefix, std::size_t d_model,
                              std::size_t n_heads, std::uint64_t seed) {
  if (n_heads == 0 || d_model % n_heads != 0)
    throw ConfigError("attention: d_model " + std::to_string(d_model) +
                      " is not divisible by n_heads " + std::to_string(n_heads));
  AttentionParams p;
  p.n_heads = n_heads;
  auto add = [&](const char *suffix) {
    std::string name = prefix + "." + suffix;
    return &params.Add(name, HeUniform({d_model, d_model}, d_model, seed, name));
  };
  p.query = add("query");
  p.key = add("key");
  p.value = add("value");
  p.output = add("output");
  return p;
}

Var MultiHeadSelfAttention(Tape &tape, Var x, const AttentionParams &p, bool trainable,
                           std::vector<Tensor> *weights_out) {
  const std::size_t d = p.d_model();
  if (p.n_heads == 0 || d % p.n_heads != 0)
    throw ConfigError("attention: d_model not divisible by heads");
  if (x.value().rank() != 2 || x.value().dim(1) != d)
    throw DimensionError("attention: input " + ShapeToString(x.shape()) + " vs d_model " +
                         std::to_string(d));
  const std::size_t dh = p.d_head();
  Var q = MatMul(x, tape.Param(*p.query, trainable));
  Var k = MatMul(x, tape.Param(*p.key, trainable));
  Var v = MatMul(x, tape.Param(*p.value, trainable));
  const Real scale = 1.0 / std::sqrt(static_cast<Real>(dh));
  std::vector<Var> heads;
  if (weights_out) weights_out->clear();
  for (std::size_t h = 0; h < p.n_heads; ++h) {
    Var qh = SliceCols(q, h * dh, dh);
    Var kh = SliceCols(k, h * dh, dh);
    Var vh = SliceCols(v, h * dh, dh);
    Var weights = Softmax(Scale(MatMul(qh, Transpose(kh)), scale), 1);
    if (weights_out) weights_out->push_back(weights.value());
    heads.push_back(MatMul(weights, vh));
  }
  Var merged = heads.size() == 1 ? heads[0] : ConcatCols(heads);
  return MatMul(merged, tape.Param(*p.output, trainable));
}

Conv1dParams MakeConv1d(ParameterSet &params, const std::string &prefix, std::size_t kernel_size,
                        std::size_t c_in, std::size_t c_out, std::size_t dilation,
                        ConvPadding padding, std::uint64_t seed) {
  ConvTapOffsets(kernel_size, dilation, padding);  // validates the geometry
  Conv1dParams p;
  std::string k = prefix + ".kernel";
  p.kernel = &params.Add(k, HeUniform({kernel_size, c_in, c_out}, kernel_size * c_in, seed, k));
  p.bias = &params.Add(prefix + ".bias", Tensor(Shape{c_out}, 0.0));
  p.dilation = dilation;
  p.padding = padding;
  return p;
}

Var Conv1dDilated(Tape &tape, Var x, const Conv1dParams &p, bool trainable) {
  return Conv1d(x, tape.Param(*p.kernel, trainable), tape.Param(*p.bias, trainable), p.dilation,
                p.padding);
}

namespace {

LstmCellParams MakeLstmCell(ParameterSet &params, const std::string &prefix, std::size_t d_in,
                            std::size_t hidden, std::uint64_t seed) {
  LstmCellParams p;
  std::string wi = prefix + ".input_weight", wr = prefix + ".recurrent_weight";
  p.input_weight = &params.Add(wi, HeUniform({d_in, 4 * hidden}, d_in, seed, wi));
  p.recurrent_weight = &params.Add(wr, HeUniform({hidden, 4 * hidden}, hidden, seed, wr));
  Tensor bias(Shape{4 * hidden}, 0.0);
  for (std::size_t i = hidden; i < 2 * hidden; ++i) bias[i] = 1.0;
  p.bias = &params.Add(prefix + ".bias", std::move(bias));
  return p;
}

}  // namespace

BiRecurrentParams MakeBiRecurrent(ParameterSet &params, const std::string &prefix,
                                  std::size_t d_in, std::size_t hidden, std::uint64_t seed) {
  return {MakeLstmCell(params, prefix + ".fwd", d_in, hidden, seed),
          MakeLstmCell(params, prefix + ".bwd", d_in, hidden, seed)};
}

Var LstmScan(Tape &tape, Var x, const LstmCellParams &p, bool reverse, bool trainable) {
  const Tensor &xv = x.value();
  const std::size_t h = p.hidden();
  if (xv.rank() != 2 || xv.dim(1) != p.input_weight->value.dim(0))
    throw DimensionError("lstm: input " + ShapeToString(xv.shape()) + " vs weight " +
                         ShapeToString(p.input_weight->value.shape()));
  const std::size_t steps = xv.dim(0);
  // Input projections for all positions at once.
  Var projected = AddBias(MatMul(x, tape.Param(*p.input_weight, trainable)),
                          tape.Param(*p.bias, trainable));
  Var recurrent = tape.Param(*p.recurrent_weight, trainable);
  Var state = tape.Constant(Tensor(Shape{1, h}, 0.0));
  Var cell = tape.Constant(Tensor(Shape{1, h}, 0.0));
  std::vector<Var> outputs(steps);
  for (std::size_t i = 0; i < steps; ++i) {
    std::size_t t = reverse ? steps - 1 - i : i;
    Var gates = Add(SliceRows(projected, t, 1), MatMul(state, recurrent));
    Var in_gate = Sigmoid(SliceCols(gates, 0, h));
    Var forget_gate = Sigmoid(SliceCols(gates, h, h));
    Var out_gate = Sigmoid(SliceCols(gates, 2 * h, h));
    Var candidate = Tanh(SliceCols(gates, 3 * h, h));
    cell = Add(Mul(forget_gate, cell), Mul(in_gate, candidate));
    state = Mul(out_gate, Tanh(cell));
    outputs[t] = state;
  }
  return ConcatRows(outputs);
}

Var BiRecurrent(Tape &tape, Var x, const BiRecurrentParams &p, bool trainable) {
  if (p.forward.hidden() != p.backward.hidden())
    throw ConfigError("bi_recurrent: direction widths differ");
  Var fwd = LstmScan(tape, x, p.forward, false, trainable);
  Var bwd = LstmScan(tape, x, p.backward, true, trainable);
  return ConcatCols({fwd, bwd});
}

Tensor PositionalEmbedding(std::size_t length, std::size_t d_pos) {
  Tensor table(Shape{length, d_pos});
  for (std::size_t t = 0; t < length; ++t) {
    for (std::size_t i = 0; i < d_pos; ++i) {
      std::size_t pair = i / 2;
      Real rate = std::pow(10000.0, -2.0 * static_cast<Real>(pair) / static_cast<Real>(d_pos));
      Real angle = static_cast<Real>(t) * rate;
      table(t, i) = i % 2 == 0 ? std::sin(angle) : std::cos(angle);
    }
  }
  return table;
}

}  // namespace cfrp
