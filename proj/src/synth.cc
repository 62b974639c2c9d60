// src/synth.cc

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

#include "cfrp/synth.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "cfrp/error.h"
#include "cfrp/parallel.h"

namespace cfrp {

static_assert(std::endian::native == std::endian::little, "corpus IO assumes little-endian");

void GeneratorConfig::Validate() const {
  if (n_phonemes < 2) throw ConfigError("generator: need at least 2 phonemes");
  if (n_variants < 1) throw ConfigError("generator: n_variants must be >= 1");
  if (n_languages < 1) throw ConfigError("generator: need at least 1 language");
  if (n_speakers < 1) throw ConfigError("generator: need at least 1 speaker");
  if (utts_per_speaker < 1) throw ConfigError("generator: utts_per_speaker must be >= 1");
  if (min_phonemes < 1 || min_phonemes > max_phonemes)
    throw ConfigError("generator: bad phoneme count range");
  if (min_frames < 1 || min_frames > max_frames)
    throw ConfigError("generator: bad frames-per-phoneme range");
  if (feature_dim < 1) throw ConfigError("generator: feature_dim must be >= 1");
  if (!(noise >= 0) || !(prototype_scale > 0) || !(variant_spread >= 0) || !(speaker_scale >= 0) ||
      !(speaker_offset >= 0))
    throw ConfigError("generator: scales must be non-negative");
  if (!(transition_sparsity > 0)) throw ConfigError("generator: transition_sparsity must be > 0");
}

std::vector<int> GeneratorConfig::MergeTable() const {
  std::vector<int> merge(n_fine());
  for (std::size_t i = 0; i < merge.size(); ++i) merge[i] = static_cast<int>(i / n_variants);
  return merge;
}

void GeneratorConfig::ToConfig(Config &cfg, const std::string &p) const {
  cfg.Set(p + "n_phonemes", std::uint64_t{n_phonemes});
  cfg.Set(p + "n_variants", std::uint64_t{n_variants});
  cfg.Set(p + "n_languages", std::uint64_t{n_languages});
  cfg.Set(p + "n_speakers", std::uint64_t{n_speakers});
  cfg.Set(p + "n_eval_speakers", std::uint64_t{n_eval_speakers});
  cfg.Set(p + "utts_per_speaker", std::uint64_t{utts_per_speaker});
  cfg.Set(p + "eval_utts_per_speaker", std::uint64_t{eval_utts_per_speaker});
  cfg.Set(p + "min_phonemes", std::uint64_t{min_phonemes});
  cfg.Set(p + "max_phonemes", std::uint64_t{max_phonemes});
  cfg.Set(p + "min_frames", std::uint64_t{min_frames});
  cfg.Set(p + "max_frames", std::uint64_t{max_frames});
  cfg.Set(p + "feature_dim", std::uint64_t{feature_dim});
  cfg.Set(p + "noise", noise);
  cfg.Set(p + "prototype_scale", prototype_scale);
  cfg.Set(p + "variant_spread", variant_spread);
  cfg.Set(p + "speaker_scale", speaker_scale);
  cfg.Set(p + "speaker_offset", speaker_offset);
  cfg.Set(p + "transition_sparsity", transition_sparsity);
  cfg.Set(p + "seed", seed);
}

GeneratorConfig GeneratorConfig::FromConfig(const Config &cfg, const std::string &p) {
  GeneratorConfig g;
  g.n_phonemes = cfg.GetUint(p + "n_phonemes", g.n_phonemes);
  g.n_variants = cfg.GetUint(p + "n_variants", g.n_variants);
  g.n_languages = cfg.GetUint(p + "n_languages", g.n_languages);
  g.n_speakers = cfg.GetUint(p + "n_speakers", g.n_speakers);
  g.n_eval_speakers = cfg.GetUint(p + "n_eval_speakers", g.n_eval_speakers);
  g.utts_per_speaker = cfg.GetUint(p + "utts_per_speaker", g.utts_per_speaker);
  g.eval_utts_per_speaker = cfg.GetUint(p + "eval_utts_per_speaker", g.eval_utts_per_speaker);
  g.min_phonemes = cfg.GetUint(p + "min_phonemes", g.min_phonemes);
  g.max_phonemes = cfg.GetUint(p + "max_phonemes", g.max_phonemes);
  g.min_frames = cfg.GetUint(p + "min_frames", g.min_frames);
  g.max_frames = cfg.GetUint(p + "max_frames", g.max_frames);
  g.feature_dim = cfg.GetUint(p + "feature_dim", g.feature_dim);
  g.noise = cfg.GetDouble(p + "noise", g.noise);
  g.prototype_scale = cfg.GetDouble(p + "prototype_scale", g.prototype_scale);
  g.variant_spread = cfg.GetDouble(p + "variant_spread", g.variant_spread);
  g.speaker_scale = cfg.GetDouble(p + "speaker_scale", g.speaker_scale);
  g.speaker_offset = cfg.GetDouble(p + "speaker_offset", g.speaker_offset);
  g.transition_sparsity = cfg.GetDouble(p + "transition_sparsity", g.transition_sparsity);
  g.seed = cfg.GetUint(p + "seed", g.seed);
  return g;
}

namespace {

// Gamma-weighted row over the allowed entries, normalized.
void FillSparseRow(Real *row, std::size_t n, const std::vector<bool> &allowed, double shape,
                   Rng &rng) {
  std::gamma_distribution<double> gamma(shape, 1.0);
  double total = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    row[j] = allowed[j] ? std::max(gamma(rng), 1e-12) : 0.0;
    total += row[j];
  }
  for (std::size_t j = 0; j < n; ++j) row[j] /= total;
}

std::size_t Categorical(const Real *p, std::size_t n, Rng &rng) {
  double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t j = 0; j < n; ++j) {
    if (p[j] <= 0.0) continue;
    last = j;
    acc += p[j];
    if (u < acc) return j;
  }
  return last;
}

std::size_t UniformIndex(std::size_t lo, std::size_t hi, Rng &rng) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

}  // namespace

CorpusGenerator::CorpusGenerator(const GeneratorConfig &config) : config_(config) {
  config_.Validate();
  const std::size_t v = config_.n_fine(), d = config_.feature_dim;

  Rng proto_rng = MakeRng(config_.seed, "prototypes");
  Tensor base = NormalTensor({config_.n_phonemes, d}, config_.prototype_scale, proto_rng);
  prototypes_ = Tensor({v, d});
  for (std::size_t i = 0; i < v; ++i) {
    Tensor delta = NormalTensor({d}, config_.variant_spread, proto_rng);
    for (std::size_t c = 0; c < d; ++c) prototypes_(i, c) = base(i / config_.n_variants, c) + delta[c];
  }

  for (std::size_t l = 0; l < config_.n_languages; ++l) {
    Rng rng(DeriveSeed(DeriveSeed(config_.seed, "language"), l));
    Tensor trans({v, v}), init({v});
    for (std::size_t i = 0; i < v; ++i) {
      // No self loops and no moves within the same base phoneme, so adjacent
      // labels differ both before and after merging.
      std::vector<bool> allowed(v);
      for (std::size_t j = 0; j < v; ++j)
        allowed[j] = j / config_.n_variants != i / config_.n_variants;
      FillSparseRow(trans.data() + i * v, v, allowed, config_.transition_sparsity, rng);
    }
    FillSparseRow(init.data(), v, std::vector<bool>(v, true), 1.0, rng);
    transitions_.push_back(std::move(trans));
    initial_.push_back(std::move(init));
  }
}

SpeakerChannel CorpusGenerator::Channel(int speaker) const {
  const std::size_t d = config_.feature_dim;
  Rng rng(DeriveSeed(DeriveSeed(config_.seed, "speaker"), static_cast<std::uint64_t>(speaker)));
  SpeakerChannel ch;
  ch.transform = NormalTensor({d, d}, config_.speaker_scale / std::sqrt(static_cast<double>(d)), rng);
  for (std::size_t i = 0; i < d; ++i) ch.transform(i, i) += 1.0;
  ch.offset = NormalTensor({d}, config_.speaker_offset, rng);
  return ch;
}

LabelSequence CorpusGenerator::SamplePhonemes(int language, std::size_t length, Rng &rng) const {
  const std::size_t v = config_.n_fine();
  const Tensor &trans = transitions(language);
  LabelSequence out;
  out.reserve(length);
  if (length == 0) return out;
  out.push_back(static_cast<int>(Categorical(initial(language).data(), v, rng)));
  while (out.size() < length)
    out.push_back(static_cast<int>(Categorical(trans.data() + out.back() * v, v, rng)));
  return out;
}

Utterance CorpusGenerator::GenerateUtterance(int speaker, std::size_t index) const {
  const std::size_t d = config_.feature_dim;
  Rng rng(DeriveSeed(DeriveSeed(DeriveSeed(config_.seed, "utterance"),
                                static_cast<std::uint64_t>(speaker)),
                     index));
  Utterance u;
  u.speaker = speaker;
  u.language = static_cast<int>(UniformIndex(0, config_.n_languages - 1, rng));
  char id[64];
  std::snprintf(id, sizeof(id), "spk%03d-utt%03zu", speaker, index);
  u.id = id;
  u.labels = SamplePhonemes(u.language, UniformIndex(config_.min_phonemes, config_.max_phonemes, rng), rng);

  std::vector<std::size_t> runs(u.labels.size());
  std::size_t total = 0;
  for (auto &r : runs) total += (r = UniformIndex(config_.min_frames, config_.max_frames, rng));

  SpeakerChannel ch = Channel(speaker);
  RowMatrix images = prototypes_.matrix() * ch.transform.matrix();
  images.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(ch.offset.data(), static_cast<Eigen::Index>(d));

  u.features = Tensor({total, d});
  std::normal_distribution<double> noise(0.0, 1.0);
  std::size_t t = 0;
  for (std::size_t k = 0; k < runs.size(); ++k) {
    for (std::size_t f = 0; f < runs[k]; ++f, ++t) {
      for (std::size_t c = 0; c < d; ++c) {
        double x = images(u.labels[k], c) + config_.noise * noise(rng);
        // Stored on disk as float; keep the in-memory corpus identical.
        u.features(t, c) = static_cast<double>(static_cast<float>(x));
      }
    }
  }
  return u;
}

SyntheticCorpus CorpusGenerator::Generate(int threads) const {
  SyntheticCorpus out;
  auto fill = [&](Corpus &corpus, std::size_t first_speaker, std::size_t n_speakers,
                  std::size_t per_speaker) {
    corpus.n_languages = config_.n_languages;
    corpus.feature_dim = config_.feature_dim;
    corpus.vocab_size = config_.n_fine();
    corpus.utterances.resize(n_speakers * per_speaker);
    ParallelFor(corpus.utterances.size(), threads, [&](std::size_t i) {
      corpus.utterances[i] =
          GenerateUtterance(static_cast<int>(first_speaker + i / per_speaker), i % per_speaker);
    });
  };
  fill(out.train, 0, config_.n_speakers, config_.utts_per_speaker);
  fill(out.test, config_.n_speakers, config_.n_eval_speakers, config_.eval_utts_per_speaker);
  return out;
}

Utterance CoarsenLabels(const Utterance &u, const std::vector<int> &merge) {
  Utterance out = u;
  for (int &label : out.labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= merge.size())
      throw DataError("coarsen: label " + std::to_string(label) + " in " + u.id +
                      " is not covered by the merge table");
    label = merge[label];
  }
  return out;
}

Corpus CoarsenLabels(const Corpus &corpus, const std::vector<int> &merge) {
  Corpus out;
  out.n_languages = corpus.n_languages;
  out.feature_dim = corpus.feature_dim;
  out.vocab_size = MergeImageSize(merge);
  for (const Utterance &u : corpus.utterances) out.utterances.push_back(CoarsenLabels(u, merge));
  return out;
}

std::size_t MergeImageSize(const std::vector<int> &merge) {
  return std::set<int>(merge.begin(), merge.end()).size();
}

std::vector<Span> SegmentFrames(std::size_t n_frames, std::size_t seg_len, double overlap) {
  if (seg_len < 1) throw ContractError("segment: seg_len must be >= 1");
  if (!(overlap >= 0.0 && overlap < 1.0)) throw ContractError("segment: overlap must be in [0, 1)");
  std::vector<Span> out;
  if (n_frames == 0) return out;
  if (n_frames < seg_len) return {{0, n_frames}};
  std::size_t hop = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(static_cast<double>(seg_len) * (1.0 - overlap))));
  std::size_t s = 0;
  for (; s + seg_len <= n_frames; s += hop) out.push_back({s, seg_len});
  std::size_t last = out.back().begin;
  std::size_t uncovered = n_frames - (last + seg_len);
  if (uncovered > 0 && 2 * uncovered >= seg_len) out.push_back({last + hop, n_frames - last - hop});
  return out;
}

std::vector<Segment> SegmentCorpus(const Corpus &corpus, std::size_t seg_len, double overlap) {
  std::vector<Segment> out;
  for (std::size_t i = 0; i < corpus.utterances.size(); ++i)
    for (const Span &s : SegmentFrames(corpus.utterances[i].frames(), seg_len, overlap))
      out.push_back({i, s});
  return out;
}

Tensor SegmentFeatures(const Corpus &corpus, const Segment &segment) {
  const Utterance &u = corpus.utterances.at(segment.utterance);
  if (segment.span.begin + segment.span.length > u.frames())
    throw ContractError("segment exceeds utterance " + u.id);
  return u.features.RowRange(segment.span.begin, segment.span.length);
}

std::vector<std::size_t> BalancedEpoch(const std::vector<int> &classes, std::size_t n_classes,
                                       std::size_t min_count, std::size_t max_count,
                                       std::uint64_t seed, std::size_t epoch) {
  if (min_count > max_count) throw ConfigError("sampler: min count exceeds max count");
  std::vector<std::vector<std::size_t>> members(n_classes);
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i] < 0 || static_cast<std::size_t>(classes[i]) >= n_classes)
      throw DataError("sampler: class id " + std::to_string(classes[i]) + " out of range");
    members[classes[i]].push_back(i);
  }
  Rng rng(DeriveSeed(DeriveSeed(seed, "balanced-epoch"), epoch));
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < n_classes; ++c) {
    if (members[c].empty()) throw DataError("sampler: class " + std::to_string(c) + " has no segments");
    std::size_t k = UniformIndex(min_count, max_count, rng);
    std::vector<std::size_t> &pool = members[c];
    if (k <= pool.size()) {
      // Partial Fisher-Yates.
      for (std::size_t i = 0; i < k; ++i) std::swap(pool[i], pool[UniformIndex(i, pool.size() - 1, rng)]);
      out.insert(out.end(), pool.begin(), pool.begin() + static_cast<long>(k));
    } else {
      for (std::size_t i = 0; i < k; ++i) out.push_back(pool[UniformIndex(0, pool.size() - 1, rng)]);
    }
  }
  for (std::size_t i = out.size(); i > 1; --i) std::swap(out[i - 1], out[UniformIndex(0, i - 1, rng)]);
  return out;
}

TrialSet BuildTrials(const Corpus &corpus, std::size_t n_enroll, std::size_t n_test,
                     std::size_t seg_len) {
  std::map<int, std::vector<std::size_t>> by_speaker;
  for (std::size_t i = 0; i < corpus.utterances.size(); ++i)
    by_speaker[corpus.utterances[i].speaker].push_back(i);
  if (by_speaker.size() < 2) throw DataError("trials: need at least 2 speakers");

  TrialSet set;
  for (const auto &[spk, utts] : by_speaker) {
    if (utts.size() <= n_test)
      throw DataError("trials: speaker " + std::to_string(spk) + " has only " +
                      std::to_string(utts.size()) + " utterances");
    for (std::size_t k = utts.size() - n_test; k < utts.size(); ++k) {
      const Utterance &u = corpus.utterances[utts[k]];
      Span first = SegmentFrames(u.frames(), seg_len, 0.0).front();
      set.tests.push_back({spk, u.id, {utts[k], first}});
    }
    TrialSet::Enrollment enroll{spk, {}};
    for (std::size_t k = 0; k + n_test < utts.size() && enroll.segments.size() < n_enroll; ++k) {
      for (const Span &s : SegmentFrames(corpus.utterances[utts[k]].frames(), seg_len, 0.0)) {
        if (enroll.segments.size() == n_enroll) break;
        enroll.segments.push_back({utts[k], s});
      }
    }
    if (enroll.segments.size() < n_enroll)
      throw DataError("trials: speaker " + std::to_string(spk) + " has only " +
                      std::to_string(enroll.segments.size()) + " enrollment segments, need " +
                      std::to_string(n_enroll));
    set.enrollments.push_back(std::move(enroll));
  }
  for (std::size_t e = 0; e < set.enrollments.size(); ++e)
    for (std::size_t t = 0; t < set.tests.size(); ++t)
      set.trials.push_back({e, t, set.enrollments[e].speaker == set.tests[t].speaker});
  return set;
}

void WriteCorpus(const Corpus &corpus, const std::string &stem) {
  std::ofstream manifest(stem + ".tsv");
  std::ofstream feats(stem + ".f32", std::ios::binary);
  if (!manifest || !feats) throw DataError("cannot write corpus at " + stem);
  std::uint64_t offset = 0;
  std::vector<float> buf;
  for (const Utterance &u : corpus.utterances) {
    if (u.features.cols() != corpus.feature_dim)
      throw ContractError("corpus: utterance " + u.id + " has the wrong feature dim");
    manifest << u.id << '\t' << u.language << '\t' << u.speaker << '\t' << u.frames() << '\t';
    for (std::size_t i = 0; i < u.labels.size(); ++i) manifest << (i ? " " : "") << u.labels[i];
    manifest << '\t' << offset << '\n';
    buf.assign(u.features.size(), 0.0f);
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(u.features[i]);
    feats.write(reinterpret_cast<const char *>(buf.data()),
                static_cast<std::streamsize>(buf.size() * sizeof(float)));
    offset += buf.size() * sizeof(float);
  }
  if (!manifest || !feats) throw DataError("error writing corpus at " + stem);
}

Corpus ReadCorpus(const std::string &stem, std::size_t feature_dim, std::size_t n_languages,
                  std::size_t vocab_size) {
  std::ifstream manifest(stem + ".tsv");
  std::ifstream feats(stem + ".f32", std::ios::binary);
  if (!manifest) throw DataError("missing corpus manifest " + stem + ".tsv");
  if (!feats) throw DataError("missing corpus features " + stem + ".f32");
  Corpus corpus;
  corpus.feature_dim = feature_dim;
  corpus.n_languages = n_languages;
  corpus.vocab_size = vocab_size;
  std::string line;
  std::size_t lineno = 0;
  std::vector<float> buf;
  while (std::getline(manifest, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto bad = [&](const std::string &why) {
      return DataError(stem + ".tsv:" + std::to_string(lineno) + ": " + why);
    };
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
      std::size_t tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 6) throw bad("expected 6 tab-separated fields");
    Utterance u;
    u.id = fields[0];
    std::size_t n_frames = 0;
    std::uint64_t offset = 0;
    try {
      u.language = std::stoi(fields[1]);
      u.speaker = std::stoi(fields[2]);
      n_frames = std::stoul(fields[3]);
      offset = std::stoull(fields[5]);
    } catch (const std::exception &) {
      throw bad("malformed numeric field");
    }
    if (u.language < 0 || static_cast<std::size_t>(u.language) >= n_languages)
      throw bad("language id out of range");
    std::istringstream labels(fields[4]);
    int label;
    while (labels >> label) {
      if (label < 0 || static_cast<std::size_t>(label) >= vocab_size) throw bad("label out of range");
      u.labels.push_back(label);
    }
    if (!labels.eof()) throw bad("malformed label list");
    buf.resize(n_frames * feature_dim);
    feats.seekg(static_cast<std::streamoff>(offset));
    feats.read(reinterpret_cast<char *>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!feats) throw bad("feature file too short");
    u.features = Tensor({n_frames, feature_dim});
    for (std::size_t i = 0; i < buf.size(); ++i) u.features[i] = buf[i];
    corpus.utterances.push_back(std::move(u));
  }
  return corpus;
}

}  // namespace cfrp
