// include/cfrp/heads.h

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

#ifndef CFRP_HEADS_H_
#define CFRP_HEADS_H_

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cfrp/autodiff.h"
#include "cfrp/encoder.h"
#include "cfrp/nn.h"

namespace cfrp {

// ---------------------------------------------------------------------------
// Self-attentive pooling.
//
//   h_t = tanh(W x_t + b),  alpha_t = softmax_t(h_t . mu),  e = sum_t alpha_t h_t
//
// With mu = 0 the weights are uniform and e is the temporal mean of h_t.

struct SapParams {
  DenseParams projection;
  const Parameter *context = nullptr;  // mu, [d_att]
  std::size_t dim() const { return projection.d_out(); }
};

struct SapOutput {
  Var embedding;  // [d_att]
  Var weights;    // [T]
};

/// The context vector starts at zero.
SapParams MakeSap(ParameterSet &params, const std::string &prefix, std::size_t d_in,
                  std::size_t d_att, std::uint64_t seed);
SapOutput SelfAttentivePooling(Tape &tape, Var frames, const SapParams &p, bool trainable = true);

// ---------------------------------------------------------------------------
// Dilated convolution block: six gated residual layers with dilations
// 1..32, per-layer skip outputs summed and merged with the stack output by
// a 1x1 convolution over [skip_sum | stack_out].

inline constexpr std::array<std::size_t, 6> kDiCnnDilations{1, 2, 4, 8, 16, 32};

struct DiCnnBlockParams {
  struct Layer {
    Conv1dParams filter;
    Conv1dParams gate;
    DenseParams residual;  // 1x1
  };
  std::vector<Layer> layers;
  DenseParams merge;  // 1x1, [2c] -> [c]
  std::size_t channels() const { return merge.d_out(); }
};

DiCnnBlockParams MakeDiCnnBlock(ParameterSet &params, const std::string &prefix,
                                std::size_t channels, std::size_t kernel_size, std::uint64_t seed);
Var DiCnnBlock(Tape &tape, Var x, const DiCnnBlockParams &p, bool trainable = true);

/// Input span seen by one output position: (k - 1) * sum(dilations) + 1.
std::size_t DiCnnReceptiveField(std::size_t kernel_size);

// ---------------------------------------------------------------------------
// Language recognition head: two BiLSTM layers or two DiCNN blocks, SAP,
// then a linear layer over languages.

enum class LrVariant { kBiRecurrent, kDiCnn };

/// "birnn" or "dicnn"; anything else is a ConfigError.
LrVariant ParseLrVariant(const std::string &name);
std::string LrVariantName(LrVariant variant);

struct LrHeadConfig {
  LrVariant variant = LrVariant::kBiRecurrent;
  std::size_t n_languages = 6;
  std::size_t hidden = 32;    // per LSTM direction
  std::size_t channels = 32;  // DiCNN width
  std::size_t kernel_size = 3;
};

class LrHead {
 public:
  /// `mix_layers` > 0 adds a trainable layer mixer for a learned-mix tap.
  LrHead(const LrHeadConfig &config, std::size_t d_in, std::uint64_t seed,
         std::size_t mix_layers = 0);
  LrHead(LrHead &&) = default;
  LrHead &operator=(LrHead &&) = default;

  const LrHeadConfig &config() const { return config_; }
  std::size_t d_in() const { return d_in_; }
  ParameterSet &params() { return *params_; }
  const ParameterSet &params() const { return *params_; }
  const LayerMixer *mixer() const { return mixer_ ? &*mixer_ : nullptr; }

  /// Frame-level features fed to pooling, [T, d_att].
  Var FrameFeatures(Tape &tape, Var reps, bool trainable = true) const;
  /// Pools frames (possibly from several segments) and returns logits [N].
  Var Classify(Tape &tape, Var frames, bool trainable = true) const;
  Var Forward(Tape &tape, Var reps, bool trainable = true) const {
    return Classify(tape, FrameFeatures(tape, reps, trainable), trainable);
  }

 private:
  LrHeadConfig config_;
  std::size_t d_in_;
  std::unique_ptr<ParameterSet> params_;
  std::vector<BiRecurrentParams> recurrent_;
  std::optional<DenseParams> input_projection_;
  std::vector<DiCnnBlockParams> dicnn_;
  SapParams sap_;
  DenseParams classifier_;
  std::optional<LayerMixer> mixer_;
};

// ---------------------------------------------------------------------------
// Speaker recognition head: 1-D convolutions with kernel sizes (2, 2, 3, 1),
// SAP, two dense + ReLU layers and a linear classifier over speakers. The
// embedding is the affine output of the first dense layer.

inline constexpr std::array<std::size_t, 4> kSrKernelSizes{2, 2, 3, 1};

struct SrHeadConfig {
  std::size_t n_speakers = 40;
  std::size_t channels = 64;
  std::size_t d_emb = 32;
  std::size_t hidden = 32;
};

class SrHead {
 public:
  struct Output {
    Var logits;     // [N]
    Var embedding;  // [d_emb], pre-ReLU
  };

  SrHead(const SrHeadConfig &config, std::size_t d_in, std::uint64_t seed,
         std::size_t mix_layers = 0);
  SrHead(SrHead &&) = default;
  SrHead &operator=(SrHead &&) = default;

  const SrHeadConfig &config() const { return config_; }
  std::size_t d_in() const { return d_in_; }
  ParameterSet &params() { return *params_; }
  const ParameterSet &params() const { return *params_; }
  const LayerMixer *mixer() const { return mixer_ ? &*mixer_ : nullptr; }

  Output Forward(Tape &tape, Var reps, bool trainable = true) const;

 private:
  SrHeadConfig config_;
  std::size_t d_in_;
  std::unique_ptr<ParameterSet> params_;
  std::vector<Conv1dParams> convs_;
  SapParams sap_;
  DenseParams embedding_, hidden_, classifier_;
  std::optional<LayerMixer> mixer_;
};

}  // namespace cfrp

#endif  // CFRP_HEADS_H_
