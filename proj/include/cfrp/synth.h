// include/cfrp/synth.h

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

#ifndef CFRP_SYNTH_H_
#define CFRP_SYNTH_H_

#include <cstdint>
#include <string>
#include <vector>

#include "cfrp/config.h"
#include "cfrp/ctc.h"
#include "cfrp/random.h"
#include "cfrp/tensor.h"

namespace cfrp {

// Synthetic speech-like corpus. Each language is a first-order Markov chain
// over a shared phoneme inventory; each phoneme emits a run of frames at its
// prototype vector, seen through a per-speaker affine channel and Gaussian
// noise. Fine labels come in `n_variants` close variants per base phoneme;
// the merge table maps a fine label to its base.

struct GeneratorConfig {
  std::size_t n_phonemes = 12;  // base phonemes
  std::size_t n_variants = 2;   // fine labels per base phoneme
  std::size_t n_languages = 6;
  std::size_t n_speakers = 40;       // training speakers
  std::size_t n_eval_speakers = 24;  // held-out speakers, test split only
  std::size_t utts_per_speaker = 20;
  std::size_t eval_utts_per_speaker = 16;
  std::size_t min_phonemes = 40, max_phonemes = 70;  // per utterance
  std::size_t min_frames = 4, max_frames = 8;        // per phoneme
  std::size_t feature_dim = 12;
  double noise = 0.8;            // frame noise stddev
  double prototype_scale = 1.0;  // stddev of base prototype entries
  double variant_spread = 0.5;   // stddev of a variant's offset from its base
  double speaker_scale = 0.3;    // A_s = I + speaker_scale * G / sqrt(d)
  double speaker_offset = 0.3;   // stddev of b_s entries
  double transition_sparsity = 0.3;  // gamma shape of transition weights
  std::uint64_t seed = 1;

  /// Throws ConfigError.
  void Validate() const;
  std::size_t n_fine() const { return n_phonemes * n_variants; }
  std::size_t n_coarse() const { return n_phonemes; }
  /// fine label -> coarse label.
  std::vector<int> MergeTable() const;

  void ToConfig(Config &cfg, const std::string &prefix) const;
  static GeneratorConfig FromConfig(const Config &cfg, const std::string &prefix);
};

struct Utterance {
  std::string id;
  int language = 0;
  int speaker = 0;  // global id; eval speakers follow the training ones
  Tensor features;  // [T, d], values representable as float
  LabelSequence labels;
  std::size_t frames() const { return features.rows(); }
};

struct Corpus {
  std::vector<Utterance> utterances;
  std::size_t n_languages = 0;
  std::size_t feature_dim = 0;
  std::size_t vocab_size = 0;
};

struct SyntheticCorpus {
  Corpus train;  // training speakers
  Corpus test;   // held-out speakers
};

struct SpeakerChannel {
  Tensor transform;  // [d, d]; a frame is prototype * transform + offset
  Tensor offset;     // [d]
};

class CorpusGenerator {
 public:
  explicit CorpusGenerator(const GeneratorConfig &config);

  const GeneratorConfig &config() const { return config_; }
  /// Row-stochastic [V, V] transitions and [V] initial distribution.
  const Tensor &transitions(int language) const { return transitions_.at(language); }
  const Tensor &initial(int language) const { return initial_.at(language); }
  const Tensor &prototypes() const { return prototypes_; }  // [V, d]
  SpeakerChannel Channel(int speaker) const;

  /// Draws `length` fine labels from a language's chain.
  LabelSequence SamplePhonemes(int language, std::size_t length, Rng &rng) const;

  Utterance GenerateUtterance(int speaker, std::size_t index) const;
  SyntheticCorpus Generate(int threads = 1) const;

 private:
  GeneratorConfig config_;
  std::vector<Tensor> transitions_, initial_;
  Tensor prototypes_;
};

/// Maps every label through `merge`; sequence length is unchanged.
/// Labels outside the table raise DataError.
Utterance CoarsenLabels(const Utterance &u, const std::vector<int> &merge);
Corpus CoarsenLabels(const Corpus &corpus, const std::vector<int> &merge);
/// Number of distinct values in the merge table.
std::size_t MergeImageSize(const std::vector<int> &merge);

// ---------------------------------------------------------------------------
// Segmentation and sampling.

struct Span {
  std::size_t begin = 0;
  std::size_t length = 0;
  bool operator==(const Span &o) const { return begin == o.begin && length == o.length; }
};

/// Windows of seg_len frames with hop seg_len * (1 - overlap). Frames past
/// the last full window form one more, shorter window when at least
/// seg_len / 2 of them are uncovered; that window starts one hop after the
/// last full one. T < seg_len gives the whole utterance.
std::vector<Span> SegmentFrames(std::size_t n_frames, std::size_t seg_len, double overlap);

struct Segment {
  std::size_t utterance = 0;  // index into the corpus
  Span span;
};

std::vector<Segment> SegmentCorpus(const Corpus &corpus, std::size_t seg_len, double overlap);
Tensor SegmentFeatures(const Corpus &corpus, const Segment &segment);

/// One epoch of class-balanced sampling: each class contributes a count
/// drawn uniformly from [min_count, max_count], without replacement when it
/// has enough segments. Returns shuffled indices into `classes`.
std::vector<std::size_t> BalancedEpoch(const std::vector<int> &classes, std::size_t n_classes,
                                       std::size_t min_count, std::size_t max_count,
                                       std::uint64_t seed, std::size_t epoch);

// ---------------------------------------------------------------------------
// Speaker verification trials.

struct TrialSet {
  struct Enrollment {
    int speaker = 0;
    std::vector<Segment> segments;
  };
  struct TestSegment {
    int speaker = 0;
    std::string id;
    Segment segment;
  };
  struct Trial {
    std::size_t enrollment = 0;  // index into enrollments
    std::size_t test = 0;        // index into tests
    bool target = false;
  };
  std::vector<Enrollment> enrollments;
  std::vector<TestSegment> tests;
  std::vector<Trial> trials;
};

/// Per speaker, test segments come from the first window of each of its last
/// `n_test` utterances and enrollment segments from its remaining
/// utterances, in order.
TrialSet BuildTrials(const Corpus &corpus, std::size_t n_enroll, std::size_t n_test,
                     std::size_t seg_len);

// ---------------------------------------------------------------------------
// On-disk corpus: <stem>.tsv manifest and <stem>.f32 features.
//
// Manifest line: utt_id \t lang \t spk \t n_frames \t labels \t byte_offset

void WriteCorpus(const Corpus &corpus, const std::string &stem);
/// Reads a corpus; `feature_dim`, `n_languages` and `vocab_size` come from the
/// caller (stored in the corpus config). Malformed input raises DataError.
Corpus ReadCorpus(const std::string &stem, std::size_t feature_dim, std::size_t n_languages,
                  std::size_t vocab_size);

}  // namespace cfrp

#endif  // CFRP_SYNTH_H_
