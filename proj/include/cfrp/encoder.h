// include/cfrp/encoder.h

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

#ifndef CFRP_ENCODER_H_
#define CFRP_ENCODER_H_

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "cfrp/autodiff.h"
#include "cfrp/nn.h"

namespace cfrp {

struct EncoderConfig {
  std::size_t input_dim = 12;     // raw frame dimension, before stacking
  std::size_t n_layers = 4;
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t d_pos = 16;         // sinusoidal features concatenated to the projection
  std::size_t d_ff = 128;
  std::size_t stack_factor = 3;
  std::size_t vocab_size = 24;    // CTC tokens, blank excluded
  std::size_t truncate_last = 2;  // layers dropped when used as a feature extractor

  /// Throws ConfigError on inconsistent values.
  void Validate() const;
  std::size_t retained_layers() const { return n_layers - truncate_last; }
};

/// Concatenates each run of `factor` consecutive frames; a trailing partial
/// group is zero-padded. [T, d] -> [ceil(T / factor), factor * d].
Tensor StackFrames(const Tensor &features, std::size_t factor);

/// Self-attentive CTC encoder with pre-norm residual blocks.
///
/// Layer state l (1-based) is the layer-normalized output of block l: the
/// normalization applied by block l + 1 before its attention, or the final
/// normalization for the top block. The CTC logits read the top state.
class Encoder {
 public:
  struct Output {
    std::vector<Var> states;  // layers 1 .. retained_layers()
    Var logits;               // [T', vocab_size + 1], blank last
  };

  Encoder(const EncoderConfig &config, std::uint64_t seed);

  Encoder(Encoder &&) = default;
  Encoder &operator=(Encoder &&) = default;

  const EncoderConfig &config() const { return config_; }
  ParameterSet &params() { return *params_; }
  const ParameterSet &params() const { return *params_; }

  /// Copies values from `source`, which must hold exactly this encoder's
  /// parameter names and shapes (ConfigError otherwise).
  void LoadValues(const ParameterSet &source);

  /// Full forward pass over raw frames [T, input_dim].
  Output Encode(Tape &tape, const Tensor &features, bool trainable = true) const;

  /// Frozen forward pass that stops after the last retained layer.
  std::vector<Tensor> ExtractStates(const Tensor &features) const;

 private:
  struct Block {
    const Parameter *attn_norm_gain, *attn_norm_bias;
    AttentionParams attention;
    const Parameter *ffn_norm_gain, *ffn_norm_bias;
    DenseParams ffn_in, ffn_out;
  };

  Var Embed(Tape &tape, const Tensor &features, bool trainable) const;
  Var RunBlock(Tape &tape, Var x, const Block &block, bool trainable) const;
  Var NormalizedState(Tape &tape, Var x, std::size_t layer, bool trainable) const;

  EncoderConfig config_;
  std::unique_ptr<ParameterSet> params_;
  DenseParams input_;
  std::vector<Block> blocks_;
  const Parameter *final_norm_gain_, *final_norm_bias_;
  DenseParams output_;
};

enum class TapMode { kSingle, kConcatRange, kLearnedMix };

/// Which retained layers feed a downstream head (1-based indices).
struct TapSpec {
  TapMode mode = TapMode::kSingle;
  std::vector<int> layers{1};

  static TapSpec Single(int layer);
  static TapSpec ConcatRange(int first, int last);
  static TapSpec LearnedMix(int first, int last);

  /// Throws ConfigError when a referenced layer is outside [1, available].
  void Validate(std::size_t available) const;
  std::size_t OutputDim(std::size_t d_model) const;

  /// "single:K", "concat:A-B" or "mix:A-B".
  std::string ToString() const;
  static TapSpec Parse(const std::string &text);
};

/// Softmax-normalized scalar weight per tapped layer.
struct LayerMixer {
  const Parameter *raw = nullptr;  // [L]
  Tensor NormalizedWeights() const;
};

/// Raw weights start at zero, i.e. a uniform mix.
LayerMixer MakeLayerMixer(ParameterSet &params, const std::string &name, std::size_t n_layers);

/// Applies a tap to layer states (states[l - 1] is layer l). Learned mixing
/// computes sum_l s_l * state_l with s = softmax(mixer raw weights).
Var Tap(Tape &tape, const std::vector<Var> &states, const TapSpec &spec,
        const LayerMixer *mixer = nullptr, bool trainable = true);

/// Cumulative mixing weights: (layer l, s_1 + ... + s_l) for each layer.
std::vector<std::pair<int, double>> LayerWeightReport(const Tensor &weights);

}  // namespace cfrp

#endif  // CFRP_ENCODER_H_
