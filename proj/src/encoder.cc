// src/encoder.cc

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

#include "cfrp/encoder.h"

#include <cmath>
#include <cstdlib>

#include "cfrp/error.h"

namespace cfrp {

void EncoderConfig::Validate() const {
  if (n_layers == 0) throw ConfigError("encoder: n_layers must be positive");
  if (n_heads == 0 || d_model % n_heads != 0)
    throw ConfigError("encoder: n_heads " + std::to_string(n_heads) + " must divide d_model " +
                      std::to_string(d_model));
  if (d_pos >= d_model) throw ConfigError("encoder: d_pos must be smaller than d_model");
  if (stack_factor == 0) throw ConfigError("encoder: stack_factor must be >= 1");
  if (truncate_last >= n_layers)
    throw ConfigError("encoder: truncate_last " + std::to_string(truncate_last) +
                      " must be smaller than n_layers " + std::to_string(n_layers));
  if (input_dim == 0 || vocab_size == 0 || d_ff == 0)
    throw ConfigError("encoder: input_dim, vocab_size and d_ff must be positive");
}

Tensor StackFrames(const Tensor &features, std::size_t factor) {
  if (features.rank() != 2 || features.dim(0) == 0)
    throw DimensionError("stack_frames: expected [T, d] with T >= 1, got " +
                         ShapeToString(features.shape()));
  if (factor == 0) throw ConfigError("stack_frames: factor must be >= 1");
  const std::size_t steps = features.dim(0), d = features.dim(1);
  const std::size_t out_steps = (steps + factor - 1) / factor;
  Tensor out(Shape{out_steps, factor * d}, 0.0);
  for (std::size_t t = 0; t < steps; ++t) {
    std::size_t row = t / factor, slot = t % factor;
    for (std::size_t c = 0; c < d; ++c) out(row, slot * d + c) = features(t, c);
  }
  return out;
}

Encoder::Encoder(const EncoderConfig &config, std::uint64_t seed)
    : config_(config), params_(std::make_unique<ParameterSet>()) {
  config_.Validate();
  const std::size_t d = config_.d_model;
  ParameterSet &ps = *params_;
  input_ = MakeDense(ps, "encoder.input", config_.input_dim * config_.stack_factor,
                     d - config_.d_pos, seed);
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    std::string prefix = "encoder.block" + std::to_string(l + 1);
    Block b;
    b.attn_norm_gain = &ps.Add(prefix + ".attn_norm.gain", Tensor(Shape{d}, 1.0));
    b.attn_norm_bias = &ps.Add(prefix + ".attn_norm.bias", Tensor(Shape{d}, 0.0));
    b.attention = MakeAttention(ps, prefix + ".attention", d, config_.n_heads, seed);
    b.ffn_norm_gain = &ps.Add(prefix + ".ffn_norm.gain", Tensor(Shape{d}, 1.0));
    b.ffn_norm_bias = &ps.Add(prefix + ".ffn_norm.bias", Tensor(Shape{d}, 0.0));
    b.ffn_in = MakeDense(ps, prefix + ".ffn_in", d, config_.d_ff, seed);
    b.ffn_out = MakeDense(ps, prefix + ".ffn_out", config_.d_ff, d, seed);
    blocks_.push_back(b);
  }
  final_norm_gain_ = &ps.Add("encoder.final_norm.gain", Tensor(Shape{d}, 1.0));
  final_norm_bias_ = &ps.Add("encoder.final_norm.bias", Tensor(Shape{d}, 0.0));
  output_ = MakeDense(ps, "encoder.output", d, config_.vocab_size + 1, seed);
}

void Encoder::LoadValues(const ParameterSet &source) {
  if (source.size() != params_->size())
    throw ConfigError("encoder checkpoint holds " + std::to_string(source.size()) +
                      " tensors, model expects " + std::to_string(params_->size()));
  for (auto &[name, param] : *params_) {
    if (!source.Contains(name)) throw ConfigError("encoder checkpoint lacks tensor " + name);
    const Tensor &value = source.Get(name).value;
    if (value.shape() != param.value.shape())
      throw ConfigError("encoder tensor " + name + " has shape " + ShapeToString(value.shape()) +
                        ", model expects " + ShapeToString(param.value.shape()));
    param.value = value;
  }
}

Var Encoder::Embed(Tape &tape, const Tensor &features, bool trainable) const {
  if (features.rank() != 2 || features.dim(1) != config_.input_dim)
    throw ConfigError("encoder: features " + ShapeToString(features.shape()) +
                      " do not match input_dim " + std::to_string(config_.input_dim));
  Tensor stacked = StackFrames(features, config_.stack_factor);
  Var projected = Dense(tape, tape.Constant(std::move(stacked)), input_, trainable);
  Var positions = tape.Constant(PositionalEmbedding(projected.value().dim(0), config_.d_pos));
  return ConcatCols({projected, positions});
}

Var Encoder::RunBlock(Tape &tape, Var x, const Block &b, bool trainable) const {
  Var h = LayerNorm(x, tape.Param(*b.attn_norm_gain, trainable),
                    tape.Param(*b.attn_norm_bias, trainable));
  x = Add(x, MultiHeadSelfAttention(tape, h, b.attention, trainable));
  Var f = LayerNorm(x, tape.Param(*b.ffn_norm_gain, trainable),
                    tape.Param(*b.ffn_norm_bias, trainable));
  f = Dense(tape, Relu(Dense(tape, f, b.ffn_in, trainable)), b.ffn_out, trainable);
  return Add(x, f);
}

Var Encoder::NormalizedState(Tape &tape, Var x, std::size_t layer, bool trainable) const {
  if (layer < config_.n_layers) {
    const Block &next = blocks_[layer];
    return LayerNorm(x, tape.Param(*next.attn_norm_gain, trainable),
                     tape.Param(*next.attn_norm_bias, trainable));
  }
  return LayerNorm(x, tape.Param(*final_norm_gain_, trainable),
                   tape.Param(*final_norm_bias_, trainable));
}

Encoder::Output Encoder::Encode(Tape &tape, const Tensor &features, bool trainable) const {
  Output out;
  Var x = Embed(tape, features, trainable);
  Var top;
  for (std::size_t l = 1; l <= config_.n_layers; ++l) {
    x = RunBlock(tape, x, blocks_[l - 1], trainable);
    if (l <= config_.retained_layers()) out.states.push_back(NormalizedState(tape, x, l, trainable));
  }
  top = NormalizedState(tape, x, config_.n_layers, trainable);
  out.logits = Dense(tape, top, output_, trainable);
  return out;
}

std::vector<Tensor> Encoder::ExtractStates(const Tensor &features) const {
  Tape tape;
  Var x = Embed(tape, features, false);
  std::vector<Tensor> states;
  for (std::size_t l = 1; l <= config_.retained_layers(); ++l) {
    x = RunBlock(tape, x, blocks_[l - 1], false);
    states.push_back(NormalizedState(tape, x, l, false).value());
  }
  return states;
}

TapSpec TapSpec::Single(int layer) { return {TapMode::kSingle, {layer}}; }

TapSpec TapSpec::ConcatRange(int first, int last) {
  TapSpec spec{TapMode::kConcatRange, {}};
  for (int l = first; l <= last; ++l) spec.layers.push_back(l);
  return spec;
}

TapSpec TapSpec::LearnedMix(int first, int last) {
  TapSpec spec = ConcatRange(first, last);
  spec.mode = TapMode::kLearnedMix;
  return spec;
}

void TapSpec::Validate(std::size_t available) const {
  if (layers.empty()) throw ConfigError("tap: no layers selected");
  if (mode == TapMode::kSingle && layers.size() != 1)
    throw ConfigError("tap: single-layer mode takes exactly one layer");
  for (int l : layers)
    if (l < 1 || static_cast<std::size_t>(l) > available)
      throw ConfigError("tap: layer " + std::to_string(l) + " outside the " +
                        std::to_string(available) + " retained encoder layers");
}

std::size_t TapSpec::OutputDim(std::size_t d_model) const {
  return mode == TapMode::kConcatRange ? layers.size() * d_model : d_model;
}

std::string TapSpec::ToString() const {
  if (mode == TapMode::kSingle) return "single:" + std::to_string(layers.front());
  std::string range = std::to_string(layers.front()) + "-" + std::to_string(layers.back());
  return (mode == TapMode::kConcatRange ? "concat:" : "mix:") + range;
}

TapSpec TapSpec::Parse(const std::string &text) {
  auto colon = text.find(':');
  if (colon == std::string::npos) throw ConfigError("tap: cannot parse '" + text + "'");
  std::string kind = text.substr(0, colon), arg = text.substr(colon + 1);
  auto parse_int = [&](const std::string &s) {
    char *end = nullptr;
    long v = std::strtol(s.c_str(), &end, 10);
    if (s.empty() || *end != '\0') throw ConfigError("tap: bad layer index in '" + text + "'");
    return static_cast<int>(v);
  };
  if (kind == "single") return Single(parse_int(arg));
  auto dash = arg.find('-');
  if (dash == std::string::npos) throw ConfigError("tap: expected a range A-B in '" + text + "'");
  int first = parse_int(arg.substr(0, dash)), last = parse_int(arg.substr(dash + 1));
  if (last < first) throw ConfigError("tap: empty range in '" + text + "'");
  if (kind == "concat") return ConcatRange(first, last);
  if (kind == "mix") return LearnedMix(first, last);
  throw ConfigError("tap: unknown mode '" + kind + "'");
}

Tensor LayerMixer::NormalizedWeights() const {
  const Tensor &r = raw->value;
  Real max = r.matrix().maxCoeff();
  Tensor w(r.shape());
  Real total = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) total += (w[i] = std::exp(r[i] - max));
  for (Real &v : w.values()) v /= total;
  return w;
}

LayerMixer MakeLayerMixer(ParameterSet &params, const std::string &name, std::size_t n_layers) {
  return {&params.Add(name, Tensor(Shape{n_layers}, 0.0))};
}

Var Tap(Tape &tape, const std::vector<Var> &states, const TapSpec &spec, const LayerMixer *mixer,
        bool trainable) {
  spec.Validate(states.size());
  std::vector<Var> selected;
  for (int l : spec.layers) selected.push_back(states[l - 1]);
  switch (spec.mode) {
    case TapMode::kSingle:
      return selected.front();
    case TapMode::kConcatRange:
      return selected.size() == 1 ? selected.front() : ConcatCols(selected);
    case TapMode::kLearnedMix: {
      if (!mixer || mixer->raw->value.size() != selected.size())
        throw ConfigError("tap: learned mix needs a mixer with one weight per tapped layer");
      Var weights = Softmax(tape.Param(*mixer->raw, trainable), 0);
      return MixLayers(weights, selected);
    }
  }
  throw ConfigError("tap: unknown mode");
}

std::vector<std::pair<int, double>> LayerWeightReport(const Tensor &weights) {
  std::vector<std::pair<int, double>> curve;
  double total = 0.0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    total += weights[l];
    curve.emplace_back(static_cast<int>(l + 1), total);
  }
  return curve;
}

}  // namespace cfrp
