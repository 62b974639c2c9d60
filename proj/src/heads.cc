// src/heads.cc

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

#include "cfrp/heads.h"

#include <cmath>
#include <numeric>

#include "cfrp/error.h"

namespace cfrp {

SapParams MakeSap(ParameterSet &params, const std::string &prefix, std::size_t d_in,
                  std::size_t d_att, std::uint64_t seed) {
  SapParams p;
  p.projection = MakeDense(params, prefix + ".projection", d_in, d_att, seed);
  // Bound 1 / sqrt(d_in) rather than the He bound; keeps tanh out of
  // saturation for unbounded inputs such as DiCNN outputs.
  Tensor &w = params.Get(prefix + ".projection.weight").value;
  for (std::size_t i = 0; i < w.size(); ++i) w[i] /= std::sqrt(6.0);
  // Zero context: pooling starts out as a plain temporal mean.
  p.context = &params.Add(prefix + ".context", Tensor(Shape{d_att}, 0.0));
  return p;
}

SapOutput SelfAttentivePooling(Tape &tape, Var frames, const SapParams &p, bool trainable) {
  if (frames.value().rank() != 2 || frames.value().dim(0) == 0)
    throw DimensionError("sap: expected [T, d] frames with T >= 1, got " +
                         ShapeToString(frames.shape()));
  const std::size_t d = p.dim();
  Var hidden = Tanh(Dense(tape, frames, p.projection, trainable));
  Var mu = Reshape(tape.Param(*p.context, trainable), Shape{d, 1});
  const std::size_t steps = frames.value().dim(0);
  Var scores = Reshape(MatMul(hidden, mu), Shape{steps});
  Var weights = Softmax(scores, 0);
  Var pooled = MatMul(Reshape(weights, Shape{1, steps}), hidden);
  return {Reshape(pooled, Shape{d}), weights};
}

DiCnnBlockParams MakeDiCnnBlock(ParameterSet &params, const std::string &prefix,
                                std::size_t channels, std::size_t kernel_size, std::uint64_t seed) {
  DiCnnBlockParams p;
  for (std::size_t i = 0; i < kDiCnnDilations.size(); ++i) {
    std::string layer = prefix + ".layer" + std::to_string(i + 1);
    std::size_t dil = kDiCnnDilations[i];
    p.layers.push_back({MakeConv1d(params, layer + ".filter", kernel_size, channels, channels, dil,
                                   ConvPadding::kCentered, seed),
                        MakeConv1d(params, layer + ".gate", kernel_size, channels, channels, dil,
                                   ConvPadding::kCentered, seed),
                        MakeDense(params, layer + ".residual", channels, channels, seed)});
  }
  p.merge = MakeDense(params, prefix + ".merge", 2 * channels, channels, seed);
  return p;
}

Var DiCnnBlock(Tape &tape, Var x, const DiCnnBlockParams &p, bool trainable) {
  Var skip;
  for (const auto &layer : p.layers) {
    Var z = Mul(Tanh(Conv1dDilated(tape, x, layer.filter, trainable)),
                Sigmoid(Conv1dDilated(tape, x, layer.gate, trainable)));
    skip = skip.valid() ? Add(skip, z) : z;
    x = Add(x, Dense(tape, z, layer.residual, trainable));
  }
  return Dense(tape, ConcatCols({skip, x}), p.merge, trainable);
}

std::size_t DiCnnReceptiveField(std::size_t kernel_size) {
  std::size_t total = std::accumulate(kDiCnnDilations.begin(), kDiCnnDilations.end(),
                                      std::size_t{0});
  return (kernel_size - 1) * total + 1;
}

LrVariant ParseLrVariant(const std::string &name) {
  if (name == "birnn") return LrVariant::kBiRecurrent;
  if (name == "dicnn") return LrVariant::kDiCnn;
  throw ConfigError("unknown LR head variant '" + name + "' (expected birnn or dicnn)");
}

std::string LrVariantName(LrVariant variant) {
  return variant == LrVariant::kBiRecurrent ? "birnn" : "dicnn";
}

LrHead::LrHead(const LrHeadConfig &config, std::size_t d_in, std::uint64_t seed,
               std::size_t mix_layers)
    : config_(config), d_in_(d_in), params_(std::make_unique<ParameterSet>()) {
  if (config_.n_languages < 2) throw ConfigError("lr head: need at least 2 languages");
  ParameterSet &ps = *params_;
  std::size_t width = 0;
  switch (config_.variant) {
    case LrVariant::kBiRecurrent:
      recurrent_.push_back(MakeBiRecurrent(ps, "lr.rnn1", d_in, config_.hidden, seed));
      recurrent_.push_back(MakeBiRecurrent(ps, "lr.rnn2", 2 * config_.hidden, config_.hidden, seed));
      width = 2 * config_.hidden;
      break;
    case LrVariant::kDiCnn:
      input_projection_ = MakeDense(ps, "lr.input", d_in, config_.channels, seed);
      for (int b = 1; b <= 2; ++b)
        dicnn_.push_back(MakeDiCnnBlock(ps, "lr.dicnn" + std::to_string(b), config_.channels,
                                        config_.kernel_size, seed));
      width = config_.channels;
      break;
  }
  sap_ = MakeSap(ps, "lr.sap", width, width, seed);
  classifier_ = MakeDense(ps, "lr.classifier", width, config_.n_languages, seed);
  if (mix_layers > 0) mixer_ = MakeLayerMixer(ps, "lr.mixer", mix_layers);
}

Var LrHead::FrameFeatures(Tape &tape, Var reps, bool trainable) const {
  if (reps.value().rank() != 2 || reps.value().dim(1) != d_in_)
    throw ConfigError("lr head: input " + ShapeToString(reps.shape()) + " does not match d_in " +
                      std::to_string(d_in_));
  Var x = reps;
  if (config_.variant == LrVariant::kBiRecurrent) {
    for (const auto &layer : recurrent_) x = BiRecurrent(tape, x, layer, trainable);
  } else {
    x = Dense(tape, x, *input_projection_, trainable);
    for (const auto &block : dicnn_) x = DiCnnBlock(tape, x, block, trainable);
  }
  return x;
}

Var LrHead::Classify(Tape &tape, Var frames, bool trainable) const {
  SapOutput pooled = SelfAttentivePooling(tape, frames, sap_, trainable);
  Var e = Reshape(pooled.embedding, Shape{1, sap_.dim()});
  return Reshape(Dense(tape, e, classifier_, trainable), Shape{config_.n_languages});
}

SrHead::SrHead(const SrHeadConfig &config, std::size_t d_in, std::uint64_t seed,
               std::size_t mix_layers)
    : config_(config), d_in_(d_in), params_(std::make_unique<ParameterSet>()) {
  if (config_.n_speakers < 2) throw ConfigError("sr head: need at least 2 speakers");
  ParameterSet &ps = *params_;
  std::size_t c_in = d_in;
  for (std::size_t i = 0; i < kSrKernelSizes.size(); ++i) {
    std::size_t k = kSrKernelSizes[i];
    ConvPadding padding = k % 2 == 0 ? ConvPadding::kLeftAligned : ConvPadding::kCentered;
    convs_.push_back(MakeConv1d(ps, "sr.conv" + std::to_string(i + 1), k, c_in, config_.channels,
                                1, padding, seed));
    c_in = config_.channels;
  }
  sap_ = MakeSap(ps, "sr.sap", config_.channels, config_.channels, seed);
  embedding_ = MakeDense(ps, "sr.embedding", config_.channels, config_.d_emb, seed);
  hidden_ = MakeDense(ps, "sr.hidden", config_.d_emb, config_.hidden, seed);
  classifier_ = MakeDense(ps, "sr.classifier", config_.hidden, config_.n_speakers, seed);
  if (mix_layers > 0) mixer_ = MakeLayerMixer(ps, "sr.mixer", mix_layers);
}

SrHead::Output SrHead::Forward(Tape &tape, Var reps, bool trainable) const {
  if (reps.value().rank() != 2 || reps.value().dim(1) != d_in_)
    throw ConfigError("sr head: input " + ShapeToString(reps.shape()) + " does not match d_in " +
                      std::to_string(d_in_));
  Var x = reps;
  for (const auto &conv : convs_) x = Relu(Conv1dDilated(tape, x, conv, trainable));
  SapOutput pooled = SelfAttentivePooling(tape, x, sap_, trainable);
  Var e = Reshape(pooled.embedding, Shape{1, sap_.dim()});
  Var embedding = Dense(tape, e, embedding_, trainable);
  Var h = Relu(Dense(tape, Relu(embedding), hidden_, trainable));
  Var logits = Dense(tape, h, classifier_, trainable);
  return {Reshape(logits, Shape{config_.n_speakers}), Reshape(embedding, Shape{config_.d_emb})};
}

}  // namespace cfrp
