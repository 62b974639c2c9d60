// src/cli.cc

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

#include "cfrp/cli.h"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "cfrp/checkpoint.h"
#include "cfrp/error.h"
#include "cfrp/parallel.h"
#include "cfrp/random.h"

namespace cfrp {

namespace fs = std::filesystem;

namespace {

void SgdToConfig(const SgdConfig &s, Config &cfg, const std::string &p) {
  cfg.Set(p + "momentum", s.momentum);
  cfg.Set(p + "weight_decay", s.weight_decay);
  cfg.Set(p + "clip_norm", s.clip_norm);
}

SgdConfig SgdFromConfig(const Config &cfg, const std::string &p, const SgdConfig &d) {
  SgdConfig s;
  s.momentum = cfg.GetDouble(p + "momentum", d.momentum);
  s.weight_decay = cfg.GetDouble(p + "weight_decay", d.weight_decay);
  s.clip_norm = cfg.GetDouble(p + "clip_norm", d.clip_norm);
  return s;
}

void HeadTrainToConfig(const HeadTrainConfig &h, Config &cfg, const std::string &p) {
  SgdToConfig(h.sgd, cfg, p);
  h.schedule.ToConfig(cfg, p + "schedule.");
  cfg.Set(p + "epochs", std::uint64_t{h.epochs});
  cfg.Set(p + "batch_size", std::uint64_t{h.batch_size});
  cfg.Set(p + "seg_len", std::uint64_t{h.seg_len});
  cfg.Set(p + "overlap", h.overlap);
  cfg.Set(p + "per_class_min", std::uint64_t{h.per_class_min});
  cfg.Set(p + "per_class_max", std::uint64_t{h.per_class_max});
  cfg.Set(p + "val_fraction", h.val_fraction);
}

HeadTrainConfig HeadTrainFromConfig(const Config &cfg, const std::string &p,
                                    const HeadTrainConfig &d) {
  HeadTrainConfig h = d;
  h.sgd = SgdFromConfig(cfg, p, d.sgd);
  h.schedule = ScheduleConfig::FromConfig(cfg, p + "schedule.", d.schedule);
  h.epochs = cfg.GetUint(p + "epochs", d.epochs);
  h.batch_size = cfg.GetUint(p + "batch_size", d.batch_size);
  h.seg_len = cfg.GetUint(p + "seg_len", d.seg_len);
  h.overlap = cfg.GetDouble(p + "overlap", d.overlap);
  h.per_class_min = cfg.GetUint(p + "per_class_min", d.per_class_min);
  h.per_class_max = cfg.GetUint(p + "per_class_max", d.per_class_max);
  h.val_fraction = cfg.GetDouble(p + "val_fraction", d.val_fraction);
  return h;
}

// Keys of `cfg` starting with `prefix`.
Config Section(const Config &cfg, const std::string &prefix) {
  Config out;
  for (const auto &[k, v] : cfg.values())
    if (k.compare(0, prefix.size(), prefix) == 0) out.Set(k, v);
  return out;
}

void RequireSameSection(const Config &a, const Config &b, const std::string &prefix,
                        const std::string &what) {
  if (Section(a, prefix).values() != Section(b, prefix).values())
    throw ConfigError(what + ": '" + prefix + "*' settings do not match");
}

// Drops the keys a checkpoint manifest adds on top of the experiment config.
Config WithoutArtifactKeys(const Config &m) {
  Config rest;
  for (const auto &[k, v] : m.values())
    if (k != "artifact" && k.compare(0, 5, "head.") != 0) rest.Set(k, v);
  return rest;
}

std::string ReadFile(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void WriteText(const std::string &path, const std::string &text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw DataError("cannot write " + path);
}

void EnsureParent(const std::string &path) {
  fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

std::string DataConfigPath(const std::string &dir) { return (fs::path(dir) / "experiment.cfg").string(); }

}  // namespace

// Reads the corpus in `dir` after checking it was generated with the same
// data settings as `config`.
SyntheticCorpus LoadData(const ExperimentConfig &config, const std::string &dir) {
  std::string cfg_path = DataConfigPath(dir);
  if (!fs::exists(cfg_path)) throw DataError("no corpus in " + dir + " (missing " + cfg_path + ")");
  ExperimentConfig stored = ExperimentConfig::FromConfig(Config::Load(cfg_path));
  RequireSameSection(config.ToConfig(), stored.ToConfig(), "data.", "corpus in " + dir);
  const GeneratorConfig &g = config.data;
  std::string train = (fs::path(dir) / "train").string();
  std::string test = (fs::path(dir) / "test").string();
  SyntheticCorpus c;
  c.train = ReadCorpus(train, g.feature_dim, g.n_languages, g.n_fine());
  c.test = ReadCorpus(test, g.feature_dim, g.n_languages, g.n_fine());
  return c;
}

namespace {

std::uint64_t EncoderSeed(const ExperimentConfig &c) { return DeriveSeed(c.seed, "encoder-init"); }
std::uint64_t HeadSeed(const ExperimentConfig &c, Task task) {
  return DeriveSeed(c.seed, task == Task::kLanguage ? "lr-init" : "sr-init");
}

std::string TaskName(Task task) { return task == Task::kLanguage ? "lr" : "sr"; }

Task ParseTask(const std::string &name) {
  if (name == "lr") return Task::kLanguage;
  if (name == "sr") return Task::kSpeaker;
  throw ConfigError("unknown task '" + name + "' (expected lr or sr)");
}

}  // namespace

Encoder LoadEncoder(const ExperimentConfig &config, const std::string &path, std::string *digest) {
  std::string bytes = ReadFile(path);
  Checkpoint ckpt = ParseCheckpoint(bytes, path);
  Config manifest = Config::Parse(ckpt.manifest, path);
  if (manifest.GetString("artifact", "") != "encoder")
    throw ConfigError(path + " is not an encoder checkpoint");
  ExperimentConfig stored = ExperimentConfig::FromConfig(WithoutArtifactKeys(manifest));
  Config want = config.ToConfig(), have = stored.ToConfig();
  RequireSameSection(want, have, "encoder.", "encoder checkpoint " + path);
  RequireSameSection(want, have, "data.", "encoder checkpoint " + path);
  Encoder encoder(config.encoder, EncoderSeed(config));
  GetParameters(ckpt, encoder.params());
  if (digest) *digest = Digest(bytes);
  return encoder;
}

namespace {

const TapSpec &TaskTap(const ExperimentConfig &c, Task task) {
  return task == Task::kLanguage ? c.lr_tap : c.sr_tap;
}

FeatureSource MakeSource(const ExperimentConfig &c, Task task, const Encoder *encoder) {
  if (!encoder) return FeatureSource::Baseline(c.encoder.stack_factor, c.data.feature_dim);
  return FeatureSource(encoder, TaskTap(c, task), c.encoder.stack_factor, c.data.feature_dim);
}

// A head checkpoint: the manifest is the experiment config plus head.* keys
// that are not part of ExperimentConfig.
Config HeadManifest(const HeadArtifact &a) {
  Config m = a.config.ToConfig();
  m.Set("artifact", "head");
  m.Set("head.task", TaskName(a.task));
  m.Set("head.baseline", a.baseline);
  m.Set("head.encoder_digest", a.encoder_digest.empty() ? "none" : a.encoder_digest);
  return m;
}

HeadArtifact ParseHeadManifest(const Config &m, const std::string &origin) {
  if (m.GetString("artifact", "") != "head") throw ConfigError(origin + " is not a head checkpoint");
  HeadArtifact a;
  a.task = ParseTask(m.Require("head.task"));
  a.baseline = m.GetBool("head.baseline", false);
  a.encoder_digest = m.GetString("head.encoder_digest", "none");
  if (a.encoder_digest == "none") a.encoder_digest.clear();
  a.config = ExperimentConfig::FromConfig(WithoutArtifactKeys(m));
  return a;
}

// Owns whatever a trained head needs at inference time.
struct LoadedHead {
  HeadArtifact artifact;
  std::unique_ptr<Encoder> encoder;
  std::unique_ptr<FeatureSource> source;
  std::unique_ptr<LrHead> lr;
  std::unique_ptr<SrHead> sr;
};

LoadedHead LoadHead(const std::string &head_path, const std::string &encoder_path) {
  LoadedHead h;
  Checkpoint ckpt = LoadCheckpoint(head_path);
  h.artifact = ParseHeadManifest(Config::Parse(ckpt.manifest, head_path), head_path);
  const ExperimentConfig &c = h.artifact.config;
  if (!h.artifact.baseline) {
    if (encoder_path.empty())
      throw ConfigError(head_path + " was trained on encoder features; --encoder is required");
    std::string digest;
    h.encoder = std::make_unique<Encoder>(LoadEncoder(c, encoder_path, &digest));
    if (digest != h.artifact.encoder_digest)
      throw ConfigError(encoder_path + " is not the encoder " + head_path + " was trained on");
  }
  h.source = std::make_unique<FeatureSource>(MakeSource(c, h.artifact.task, h.encoder.get()));
  if (h.artifact.task == Task::kLanguage) {
    h.lr = std::make_unique<LrHead>(c.lr_head, h.source->output_dim(), HeadSeed(c, Task::kLanguage),
                                    h.source->mix_layers());
    GetParameters(ckpt, h.lr->params());
  } else {
    h.sr = std::make_unique<SrHead>(c.sr_head, h.source->output_dim(), HeadSeed(c, Task::kSpeaker),
                                    h.source->mix_layers());
    GetParameters(ckpt, h.sr->params());
  }
  return h;
}

void PrintMetrics(const Config &metrics, std::ostream &out) { out << metrics.ToString(); }

}  // namespace

// ---------------------------------------------------------------------------

ExperimentConfig::ExperimentConfig() {
  pretrain.epochs = 10;
  pretrain.batch_size = 8;
  pretrain.eval_utterances = 64;
  pretrain.schedule.kind = ScheduleKind::kInverseSqrt;
  pretrain.schedule.lambda = 1.0;  // peak 0.05
  pretrain.schedule.warmup = 400;
  pretrain.schedule.fix_epoch = 6;
  pretrain.schedule.interval = 2;
  pretrain.schedule.n_decays = 2;

  lr_train.epochs = 12;
  lr_train.seg_len = 100;
  lr_train.per_class_min = 100;
  lr_train.per_class_max = 150;
  lr_train.schedule.kind = ScheduleKind::kStepDecay;
  lr_train.schedule.hold = 8;
  lr_train.schedule.interval = 4;
  lr_train.schedule.n_decays = 1;
  lr_tap = TapSpec::Single(2);

  sr_train.epochs = 12;
  sr_train.seg_len = 300;
  sr_train.per_class_min = 20;
  sr_train.per_class_max = 30;
  sr_train.schedule.kind = ScheduleKind::kPlateau;
  sr_train.schedule.base_lr = 0.01;
  sr_tap = TapSpec::ConcatRange(1, 2);
  Resolve();
}

void ExperimentConfig::Resolve() {
  encoder.input_dim = data.feature_dim;
  encoder.vocab_size = pretrain_coarse ? data.n_coarse() : data.n_fine();
  lr_head.n_languages = data.n_languages;
  sr_head.n_speakers = data.n_speakers;
  data.seed = DeriveSeed(seed, "data");
  pretrain.seed = DeriveSeed(seed, "pretrain");
  lr_train.seed = DeriveSeed(seed, "lr-train");
  sr_train.seed = DeriveSeed(seed, "sr-train");
  lr_train.schedule.base_lr =
      lr_head.variant == LrVariant::kBiRecurrent ? lr_birnn_base_lr : lr_dicnn_base_lr;
  pretrain.threads = lr_train.threads = sr_train.threads = threads;
}

void ExperimentConfig::Validate() const {
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (!(lr_birnn_base_lr > 0.0) || !(lr_dicnn_base_lr > 0.0))
    throw ConfigError("lr.birnn.base_lr and lr.dicnn.base_lr must be > 0");
  data.Validate();
  encoder.Validate();
  pretrain.Validate();
  lr_train.Validate();
  sr_train.Validate();
  lr_tap.Validate(encoder.retained_layers());
  sr_tap.Validate(encoder.retained_layers());
  if (sr_backend != "plda" && sr_backend != "cosine")
    throw ConfigError("sr.backend must be plda or cosine, got '" + sr_backend + "'");
  if (lr_eval_seg_len < 1) throw ConfigError("lr.eval_seg_len must be >= 1");
  if (sr_n_enroll < 1 || sr_n_test < 1) throw ConfigError("sr.n_enroll and sr.n_test must be >= 1");
  if (sr_n_enroll + sr_n_test > data.eval_utts_per_speaker)
    throw ConfigError("sr.n_enroll + sr.n_test exceeds data.eval_utts_per_speaker");
  if (plda.max_iters < 1 || !(plda.ridge > 0.0)) throw ConfigError("bad sr.plda settings");
}

Config ExperimentConfig::ToConfig() const {
  Config cfg;
  cfg.Set("seed", seed);
  cfg.Set("output_dir", output_dir);

  Config data_cfg;
  data.ToConfig(data_cfg, "data.");
  for (const auto &[k, v] : data_cfg.values())
    if (k != "data.seed") cfg.Set(k, v);

  cfg.Set("encoder.n_layers", std::uint64_t{encoder.n_layers});
  cfg.Set("encoder.d_model", std::uint64_t{encoder.d_model});
  cfg.Set("encoder.n_heads", std::uint64_t{encoder.n_heads});
  cfg.Set("encoder.d_pos", std::uint64_t{encoder.d_pos});
  cfg.Set("encoder.d_ff", std::uint64_t{encoder.d_ff});
  cfg.Set("encoder.stack_factor", std::uint64_t{encoder.stack_factor});
  cfg.Set("encoder.truncate_last", std::uint64_t{encoder.truncate_last});
  cfg.Set("encoder.labels", pretrain_coarse ? "coarse" : "fine");

  SgdToConfig(pretrain.sgd, cfg, "pretrain.");
  pretrain.schedule.ToConfig(cfg, "pretrain.schedule.");
  cfg.Set("pretrain.epochs", std::uint64_t{pretrain.epochs});
  cfg.Set("pretrain.batch_size", std::uint64_t{pretrain.batch_size});
  cfg.Set("pretrain.eval_utterances", std::uint64_t{pretrain.eval_utterances});

  cfg.Set("lr.variant", LrVariantName(lr_head.variant));
  cfg.Set("lr.hidden", std::uint64_t{lr_head.hidden});
  cfg.Set("lr.channels", std::uint64_t{lr_head.channels});
  cfg.Set("lr.kernel_size", std::uint64_t{lr_head.kernel_size});
  cfg.Set("lr.tap", lr_tap.ToString());
  cfg.Set("lr.eval_seg_len", std::uint64_t{lr_eval_seg_len});
  cfg.Set("lr.birnn.base_lr", lr_birnn_base_lr);
  cfg.Set("lr.dicnn.base_lr", lr_dicnn_base_lr);
  Config lr_cfg;
  HeadTrainToConfig(lr_train, lr_cfg, "lr.train.");
  for (const auto &[k, v] : lr_cfg.values())
    if (k != "lr.train.schedule.base_lr") cfg.Set(k, v);  // set per variant

  cfg.Set("sr.channels", std::uint64_t{sr_head.channels});
  cfg.Set("sr.d_emb", std::uint64_t{sr_head.d_emb});
  cfg.Set("sr.hidden", std::uint64_t{sr_head.hidden});
  cfg.Set("sr.tap", sr_tap.ToString());
  cfg.Set("sr.backend", sr_backend);
  cfg.Set("sr.n_enroll", std::uint64_t{sr_n_enroll});
  cfg.Set("sr.n_test", std::uint64_t{sr_n_test});
  cfg.Set("sr.plda.max_iters", std::uint64_t{plda.max_iters});
  cfg.Set("sr.plda.tolerance", plda.tolerance);
  cfg.Set("sr.plda.length_normalize", plda.length_normalize);
  cfg.Set("sr.plda.ridge", plda.ridge);
  HeadTrainToConfig(sr_train, cfg, "sr.train.");
  return cfg;
}

ExperimentConfig ExperimentConfig::FromConfig(const Config &cfg) {
  ExperimentConfig d;
  ExperimentConfig c;
  c.seed = cfg.GetUint("seed", d.seed);
  std::int64_t threads = cfg.GetInt("threads", d.threads);
  if (threads < 1 || threads > 1024) throw ConfigError("threads must be in [1, 1024]");
  c.threads = static_cast<int>(threads);
  c.output_dir = cfg.GetString("output_dir", d.output_dir);

  c.data = GeneratorConfig::FromConfig(cfg, "data.");

  c.encoder.n_layers = cfg.GetUint("encoder.n_layers", d.encoder.n_layers);
  c.encoder.d_model = cfg.GetUint("encoder.d_model", d.encoder.d_model);
  c.encoder.n_heads = cfg.GetUint("encoder.n_heads", d.encoder.n_heads);
  c.encoder.d_pos = cfg.GetUint("encoder.d_pos", d.encoder.d_pos);
  c.encoder.d_ff = cfg.GetUint("encoder.d_ff", d.encoder.d_ff);
  c.encoder.stack_factor = cfg.GetUint("encoder.stack_factor", d.encoder.stack_factor);
  c.encoder.truncate_last = cfg.GetUint("encoder.truncate_last", d.encoder.truncate_last);
  std::string labels = cfg.GetString("encoder.labels", "fine");
  if (labels != "fine" && labels != "coarse")
    throw ConfigError("encoder.labels must be fine or coarse, got '" + labels + "'");
  c.pretrain_coarse = labels == "coarse";

  c.pretrain.sgd = SgdFromConfig(cfg, "pretrain.", d.pretrain.sgd);
  c.pretrain.schedule = ScheduleConfig::FromConfig(cfg, "pretrain.schedule.", d.pretrain.schedule);
  c.pretrain.epochs = cfg.GetUint("pretrain.epochs", d.pretrain.epochs);
  c.pretrain.batch_size = cfg.GetUint("pretrain.batch_size", d.pretrain.batch_size);
  c.pretrain.eval_utterances = cfg.GetUint("pretrain.eval_utterances", d.pretrain.eval_utterances);

  c.lr_head.variant = ParseLrVariant(cfg.GetString("lr.variant", LrVariantName(d.lr_head.variant)));
  c.lr_head.hidden = cfg.GetUint("lr.hidden", d.lr_head.hidden);
  c.lr_head.channels = cfg.GetUint("lr.channels", d.lr_head.channels);
  c.lr_head.kernel_size = cfg.GetUint("lr.kernel_size", d.lr_head.kernel_size);
  c.lr_tap = TapSpec::Parse(cfg.GetString("lr.tap", d.lr_tap.ToString()));
  c.lr_eval_seg_len = cfg.GetUint("lr.eval_seg_len", d.lr_eval_seg_len);
  c.lr_birnn_base_lr = cfg.GetDouble("lr.birnn.base_lr", d.lr_birnn_base_lr);
  c.lr_dicnn_base_lr = cfg.GetDouble("lr.dicnn.base_lr", d.lr_dicnn_base_lr);
  c.lr_train = HeadTrainFromConfig(cfg, "lr.train.", d.lr_train);

  c.sr_head.channels = cfg.GetUint("sr.channels", d.sr_head.channels);
  c.sr_head.d_emb = cfg.GetUint("sr.d_emb", d.sr_head.d_emb);
  c.sr_head.hidden = cfg.GetUint("sr.hidden", d.sr_head.hidden);
  c.sr_tap = TapSpec::Parse(cfg.GetString("sr.tap", d.sr_tap.ToString()));
  c.sr_backend = cfg.GetString("sr.backend", d.sr_backend);
  c.sr_n_enroll = cfg.GetUint("sr.n_enroll", d.sr_n_enroll);
  c.sr_n_test = cfg.GetUint("sr.n_test", d.sr_n_test);
  c.plda.max_iters = cfg.GetUint("sr.plda.max_iters", d.plda.max_iters);
  c.plda.tolerance = cfg.GetDouble("sr.plda.tolerance", d.plda.tolerance);
  c.plda.length_normalize = cfg.GetBool("sr.plda.length_normalize", d.plda.length_normalize);
  c.plda.ridge = cfg.GetDouble("sr.plda.ridge", d.plda.ridge);
  c.sr_train = HeadTrainFromConfig(cfg, "sr.train.", d.sr_train);

  c.Resolve();
  Config known = c.ToConfig();
  for (const auto &[k, v] : cfg.values())
    if (!known.Has(k) && k != "threads") throw ConfigError("unknown config key '" + k + "'");
  c.Validate();
  return c;
}

std::string Digest(const std::string &bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------

void CmdGenData(const ExperimentConfig &config, const std::string &out_dir, std::ostream &out) {
  config.Validate();
  fs::create_directories(out_dir);
  SyntheticCorpus c = CorpusGenerator(config.data).Generate(config.threads);
  WriteCorpus(c.train, (fs::path(out_dir) / "train").string());
  WriteCorpus(c.test, (fs::path(out_dir) / "test").string());
  config.ToConfig().Save(DataConfigPath(out_dir));

  auto stats = [&](const char *name, const Corpus &corpus) {
    std::size_t frames = 0, labels = 0;
    std::map<int, int> speakers;
    for (const Utterance &u : corpus.utterances) {
      frames += u.frames();
      labels += u.labels.size();
      speakers[u.speaker]++;
    }
    out << name << ": " << corpus.utterances.size() << " utterances, " << speakers.size()
        << " speakers, " << corpus.n_languages << " languages, " << frames << " frames, "
        << labels << " phonemes\n";
  };
  stats("train", c.train);
  stats("test", c.test);
  out << "wrote " << out_dir << "\n";
}

void CmdPretrain(const ExperimentConfig &config, const std::string &data_dir,
                 const std::string &out_path, std::ostream &out) {
  config.Validate();
  SyntheticCorpus data = LoadData(config, data_dir);
  if (config.pretrain_coarse) {
    std::vector<int> merge = config.data.MergeTable();
    data.train = CoarsenLabels(data.train, merge);
    data.test = CoarsenLabels(data.test, merge);
  }
  Encoder encoder(config.encoder, EncoderSeed(config));
  std::ostringstream echo;
  PretrainResult result = Pretrain(encoder, data.train, data.test, config.pretrain, &echo);
  out << echo.str();

  Checkpoint ckpt;
  Config manifest = config.ToConfig();
  manifest.Set("artifact", "encoder");
  ckpt.manifest = manifest.ToString();
  PutParameters(ckpt, encoder.params());
  EnsureParent(out_path);
  SaveCheckpoint(ckpt, out_path);
  config.ToConfig().Save(out_path + ".cfg");
  WriteText(out_path + ".log", result.log.ToString());
  out << "best held-out TER " << result.best_ter << " at epoch " << result.best_epoch << "\n";
  out << "wrote " << out_path << "\n";
}

void CmdTrainHead(Task task, const ExperimentConfig &config, const std::string &data_dir,
                  const std::string &encoder_path, bool baseline, const std::string &out_path,
                  std::ostream &out) {
  config.Validate();
  SyntheticCorpus data = LoadData(config, data_dir);
  HeadArtifact artifact;
  artifact.config = config;
  artifact.task = task;
  artifact.baseline = baseline;
  std::unique_ptr<Encoder> encoder;
  if (!baseline) {
    if (encoder_path.empty()) throw ConfigError("an encoder checkpoint is required unless --baseline");
    encoder = std::make_unique<Encoder>(LoadEncoder(config, encoder_path, &artifact.encoder_digest));
  }
  FeatureSource source = MakeSource(config, task, encoder.get());
  std::ostringstream echo;
  Checkpoint ckpt;
  HeadTrainResult result;
  if (task == Task::kLanguage) {
    LrHead head(config.lr_head, source.output_dim(), HeadSeed(config, task), source.mix_layers());
    LrTaskHead th(head);
    result = TrainHead(task, th, source, data.train, config.data.n_languages, config.lr_train, &echo);
    PutParameters(ckpt, head.params());
  } else {
    SrHead head(config.sr_head, source.output_dim(), HeadSeed(config, task), source.mix_layers());
    SrTaskHead th(head);
    result = TrainHead(task, th, source, data.train, config.data.n_speakers, config.sr_train, &echo);
    PutParameters(ckpt, head.params());
  }
  out << echo.str();
  ckpt.manifest = HeadManifest(artifact).ToString();
  EnsureParent(out_path);
  SaveCheckpoint(ckpt, out_path);
  config.ToConfig().Save(out_path + ".cfg");
  WriteText(out_path + ".log", result.log.ToString());
  out << "wrote " << out_path << "\n";
}

Config CmdEvaluate(Task task, const std::string &data_dir, const std::string &head_path,
                   const std::string &encoder_path, const std::string &out_dir, int threads,
                   std::ostream &out) {
  LoadedHead h = LoadHead(head_path, encoder_path);
  if (h.artifact.task != task)
    throw ConfigError(head_path + " is a " + TaskName(h.artifact.task) + " head, not " +
                      TaskName(task));
  const ExperimentConfig &c = h.artifact.config;
  SyntheticCorpus data = LoadData(c, data_dir);
  fs::create_directories(out_dir);
  std::string scores_path = (fs::path(out_dir) / "scores.tsv").string();
  Config metrics;

  if (task == Task::kLanguage) {
    const Corpus &test = data.test;
    LrScores scores;
    scores.scores.resize(test.utterances.size());
    ParallelFor(test.utterances.size(), threads, [&](std::size_t i) {
      Tensor logp = PoolAndClassify(test.utterances[i].features, *h.source, *h.lr, c.lr_eval_seg_len);
      scores.scores[i] = CalibrateLanguageScores(logp);
    });
    for (const Utterance &u : test.utterances) {
      scores.ids.push_back(u.id);
      scores.truth.push_back(u.language);
    }
    WriteLrScores(scores, scores_path);
    metrics = LrMetrics(scores, c.data.n_languages);
  } else {
    std::size_t seg_len = c.sr_train.seg_len;
    auto embed = [&](const Corpus &corpus, const std::vector<Segment> &segs) {
      std::vector<Tensor> e(segs.size());
      ParallelFor(segs.size(), threads, [&](std::size_t i) {
        e[i] = ExtractEmbedding(SegmentFeatures(corpus, segs[i]), *h.source, *h.sr);
      });
      return e;
    };
    TrialSet trials = BuildTrials(data.test, c.sr_n_enroll, c.sr_n_test, seg_len);
    std::vector<Segment> enroll_segs, test_segs;
    for (const auto &e : trials.enrollments)
      enroll_segs.insert(enroll_segs.end(), e.segments.begin(), e.segments.end());
    for (const auto &t : trials.tests) test_segs.push_back(t.segment);
    std::vector<Tensor> enroll_emb = embed(data.test, enroll_segs);
    std::vector<Tensor> test_emb = embed(data.test, test_segs);

    std::unique_ptr<Plda> plda;
    if (c.sr_backend == "plda") {
      std::vector<Segment> train_segs = SegmentCorpus(data.train, seg_len, 0.0);
      std::vector<Tensor> train_emb = embed(data.train, train_segs);
      std::vector<int> labels;
      for (const Segment &s : train_segs) labels.push_back(data.train.utterances[s.utterance].speaker);
      plda = std::make_unique<Plda>(Plda::Fit(train_emb, labels, c.plda));
    }

    std::vector<std::vector<Tensor>> enrolled;
    std::size_t k = 0;
    for (const auto &e : trials.enrollments) {
      enrolled.emplace_back(enroll_emb.begin() + k, enroll_emb.begin() + k + e.segments.size());
      k += e.segments.size();
    }
    std::vector<SrScore> scores(trials.trials.size());
    ParallelFor(trials.trials.size(), threads, [&](std::size_t i) {
      const TrialSet::Trial &t = trials.trials[i];
      const std::vector<Tensor> &en = enrolled[t.enrollment];
      double s;
      if (plda) {
        s = plda->Score(en, test_emb[t.test]);
      } else {
        Tensor mean(Shape{en[0].size()}, 0.0);
        for (const Tensor &e : en)
          for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += e[j] / static_cast<double>(en.size());
        s = CosineScore(mean, test_emb[t.test]);
      }
      char spk[16];
      std::snprintf(spk, sizeof spk, "spk%03d", trials.enrollments[t.enrollment].speaker);
      scores[i] = SrScore{spk, trials.tests[t.test].id, s, t.target};
    });
    WriteSrScores(scores, scores_path);
    metrics = SrMetrics(scores);
    metrics.Set("backend", c.sr_backend);
  }
  metrics.Set("baseline", h.artifact.baseline);
  metrics.Save((fs::path(out_dir) / "metrics.txt").string());
  PrintMetrics(metrics, out);
  return metrics;
}

Config CmdEvaluateScores(Task task, const std::string &scores_path, std::size_t n_languages,
                         const std::string &out_dir, std::ostream &out) {
  Config metrics = task == Task::kLanguage ? LrMetrics(ReadLrScores(scores_path), n_languages)
                                           : SrMetrics(ReadSrScores(scores_path));
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    metrics.Save((fs::path(out_dir) / "metrics.txt").string());
  }
  PrintMetrics(metrics, out);
  return metrics;
}

std::string CmdLayerWeights(const std::string &head_path, std::ostream &out) {
  Checkpoint ckpt = LoadCheckpoint(head_path);
  HeadArtifact a = ParseHeadManifest(Config::Parse(ckpt.manifest, head_path), head_path);
  std::string name = a.task == Task::kLanguage ? "lr.mixer" : "sr.mixer";
  auto it = ckpt.tensors.find(name);
  if (a.baseline || it == ckpt.tensors.end())
    throw ConfigError(head_path + " has no learned layer mix (train with a mix:A-B tap)");
  const TapSpec &tap = TaskTap(a.config, a.task);
  Parameter raw{name, it->second};
  LayerMixer mixer{&raw};
  Tensor w = mixer.NormalizedWeights();
  std::ostringstream s;
  s << "# task " << TaskName(a.task) << "\n# layer\tweight\tcumulative\n";
  auto curve = LayerWeightReport(w);
  for (std::size_t i = 0; i < curve.size(); ++i) {
    int layer = tap.layers.at(i);
    s << layer << "\t" << w[i] << "\t" << curve[i].second << "\n";
  }
  double mean = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) mean += tap.layers[i] * w[i];
  s << "mean_layer\t" << mean << "\n";
  out << s.str();
  return s.str();
}

// ---------------------------------------------------------------------------

namespace {

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> sets;
  int threads = 0;
};

void AddCommon(CLI::App *cmd, CommonOptions &o) {
  cmd->add_option("--config", o.config_path, "Experiment config file (key = value)");
  cmd->add_option("--set", o.sets, "Override a config entry, key=value (repeatable)");
  cmd->add_option("--threads", o.threads, "Worker threads")->check(CLI::Range(1, 1024));
}

// defaults < config file (or the corpus config) < CFRP_SEED < flags.
ExperimentConfig BuildConfig(const CommonOptions &o, const std::string &data_dir,
                             const std::vector<std::pair<std::string, std::string>> &flags) {
  Config cfg;
  if (!o.config_path.empty()) {
    cfg = Config::Load(o.config_path);
  } else if (!data_dir.empty() && fs::exists(DataConfigPath(data_dir))) {
    cfg = Config::Load(DataConfigPath(data_dir));
  }
  if (const char *seed = std::getenv("CFRP_SEED"); seed && *seed) cfg.Set("seed", seed);
  for (const std::string &kv : o.sets) {
    auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.Set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (o.threads > 0) cfg.Set("threads", o.threads);
  for (const auto &[k, v] : flags) cfg.Set(k, v);
  return ExperimentConfig::FromConfig(cfg);
}

}  // namespace

int RunCli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
  CLI::App app{"cfrp: pretrained speech representations for language and speaker recognition"};
  app.require_subcommand(1);

  CommonOptions common;
  std::string data_dir, out_path, encoder_path, head_path, scores_path, task_name, variant, tap;
  bool baseline = false, coarse = false;
  std::size_t n_languages = 0;

  CLI::App *gen = app.add_subcommand("gen-data", "Generate the synthetic corpus");
  AddCommon(gen, common);
  gen->add_option("--out", out_path, "Output directory (default: output_dir from the config)");

  CLI::App *pre = app.add_subcommand("pretrain", "Pretrain the CTC encoder");
  AddCommon(pre, common);
  pre->add_option("--data", data_dir, "Corpus directory")->required();
  pre->add_option("--out", out_path, "Encoder checkpoint to write")->required();
  pre->add_flag("--coarse", coarse, "Train on merged coarse labels");

  CLI::App *lr = app.add_subcommand("train-lr", "Train a language recognition head");
  CLI::App *sr = app.add_subcommand("train-sr", "Train a speaker recognition head");
  for (CLI::App *cmd : {lr, sr}) {
    AddCommon(cmd, common);
    cmd->add_option("--data", data_dir, "Corpus directory")->required();
    cmd->add_option("--encoder", encoder_path, "Pretrained encoder checkpoint");
    cmd->add_option("--out", out_path, "Head checkpoint to write")->required();
    cmd->add_flag("--baseline", baseline, "Train on stacked raw features instead of the encoder");
    cmd->add_option("--tap", tap, "Encoder layers: single:K, concat:A-B or mix:A-B");
  }
  lr->add_option("--variant", variant, "birnn or dicnn");

  CLI::App *ev = app.add_subcommand("evaluate", "Score the test split and report metrics");
  ev->add_option("--task", task_name, "lr or sr")->required();
  ev->add_option("--data", data_dir, "Corpus directory");
  ev->add_option("--head", head_path, "Head checkpoint");
  ev->add_option("--encoder", encoder_path, "Encoder checkpoint (not needed for baseline heads)");
  ev->add_option("--scores", scores_path, "Compute metrics from an existing score file instead");
  ev->add_option("--languages", n_languages, "Language count for --scores (default: from scores)");
  ev->add_option("--out", out_path, "Directory for scores.tsv and metrics.txt");
  ev->add_option("--threads", common.threads, "Worker threads")->check(CLI::Range(1, 1024));

  CLI::App *lw = app.add_subcommand("layer-weights", "Print the learned layer-mix curve of a head");
  lw->add_option("--head", head_path, "Head checkpoint")->required();
  lw->add_option("--out", out_path, "Also write the curve to this file");

  std::vector<std::string> reversed(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp &) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp &) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError &e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (gen->parsed()) {
      ExperimentConfig c = BuildConfig(common, "", {});
      CmdGenData(c, out_path.empty() ? c.output_dir : out_path, out);
    } else if (pre->parsed()) {
      std::vector<std::pair<std::string, std::string>> flags;
      if (coarse) flags.emplace_back("encoder.labels", "coarse");
      CmdPretrain(BuildConfig(common, data_dir, flags), data_dir, out_path, out);
    } else if (lr->parsed() || sr->parsed()) {
      Task task = lr->parsed() ? Task::kLanguage : Task::kSpeaker;
      std::vector<std::pair<std::string, std::string>> flags;
      if (!variant.empty()) flags.emplace_back("lr.variant", variant);
      if (!tap.empty()) flags.emplace_back(task == Task::kLanguage ? "lr.tap" : "sr.tap", tap);
      ExperimentConfig c = BuildConfig(common, data_dir, flags);
      // The encoder's own settings (e.g. coarse labels) travel with it.
      if (!baseline && !encoder_path.empty()) {
        Config m = Config::Parse(LoadCheckpoint(encoder_path).manifest, encoder_path);
        Config merged = c.ToConfig();
        for (const char *k : {"encoder.labels"})
          if (m.Has(k)) merged.Set(k, m.Require(k));
        c = ExperimentConfig::FromConfig(merged);
      }
      CmdTrainHead(task, c, data_dir, encoder_path, baseline, out_path, out);
    } else if (ev->parsed()) {
      Task task = ParseTask(task_name);
      if (!scores_path.empty()) {
        std::size_t n = n_languages;
        if (task == Task::kLanguage && n == 0) {
          for (const auto &row : ReadLrScores(scores_path).scores) n = std::max(n, row.size());
        }
        CmdEvaluateScores(task, scores_path, n, out_path, out);
      } else {
        if (head_path.empty() || data_dir.empty())
          throw ConfigError("evaluate needs --head and --data (or --scores)");
        CmdEvaluate(task, data_dir, head_path, encoder_path, out_path.empty() ? "." : out_path,
                    common.threads > 0 ? common.threads : 1, out);
      }
    } else if (lw->parsed()) {
      std::string curve = CmdLayerWeights(head_path, out);
      if (!out_path.empty()) {
        EnsureParent(out_path);
        WriteText(out_path, curve);
      }
    }
  } catch (const ConfigError &e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError &e) {
    err << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError &e) {
    err << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const fs::filesystem_error &e) {
    err << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception &e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

int RunCli(int argc, char **argv, std::ostream &out, std::ostream &err) {
  return RunCli(std::vector<std::string>(argv, argv + argc), out, err);
}

}  // namespace cfrp
