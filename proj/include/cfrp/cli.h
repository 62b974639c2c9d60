// include/cfrp/cli.h

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

#ifndef CFRP_CLI_H_
#define CFRP_CLI_H_

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "cfrp/config.h"
#include "cfrp/encoder.h"
#include "cfrp/eval.h"
#include "cfrp/heads.h"
#include "cfrp/synth.h"
#include "cfrp/trainer.h"

namespace cfrp {

/// Every setting of an experiment. Component seeds are derived from `seed`,
/// so the global seed alone fixes all randomness.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  int threads = 1;
  std::string output_dir = "run";

  GeneratorConfig data;
  EncoderConfig encoder;  // input_dim and vocab_size follow the data section

  PretrainConfig pretrain;
  bool pretrain_coarse = false;  // train CTC on merged labels

  LrHeadConfig lr_head;
  HeadTrainConfig lr_train;
  TapSpec lr_tap;
  std::size_t lr_eval_seg_len = 100;
  // Base learning rate per LR variant; Resolve() copies the active one into
  // lr_train.schedule.
  double lr_birnn_base_lr = 0.05, lr_dicnn_base_lr = 0.02;

  SrHeadConfig sr_head;
  HeadTrainConfig sr_train;
  TapSpec sr_tap;
  std::string sr_backend = "plda";  // plda | cosine
  PldaConfig plda;
  std::size_t sr_n_enroll = 10, sr_n_test = 3;

  ExperimentConfig();

  /// Fills derived fields (dimensions, component seeds, thread counts).
  void Resolve();
  /// Throws ConfigError.
  void Validate() const;

  /// Everything except `threads`, which never changes results.
  Config ToConfig() const;
  /// Keys missing from `cfg` keep their default values. Unknown keys raise
  /// ConfigError.
  static ExperimentConfig FromConfig(const Config &cfg);
};

/// Stable 64-bit FNV-1a digest, printed as 16 hex digits.
std::string Digest(const std::string &bytes);

/// Reads the corpus in `dir` (written by gen-data); its data settings must
/// match `config`. Throws DataError or ConfigError.
SyntheticCorpus LoadData(const ExperimentConfig &config, const std::string &dir);
/// Loads an encoder checkpoint whose encoder and data settings match
/// `config`. `digest`, when given, receives the digest of the file bytes.
Encoder LoadEncoder(const ExperimentConfig &config, const std::string &path,
                    std::string *digest = nullptr);

/// Checkpoint of a trained task head.
struct HeadArtifact {
  ExperimentConfig config;
  Task task = Task::kLanguage;
  bool baseline = false;
  std::string encoder_digest;  // empty for the baseline
};

// Subcommands. Each returns normally on success and throws the cfrp error
// types otherwise; `out` receives human-readable progress and reports.
void CmdGenData(const ExperimentConfig &config, const std::string &out_dir, std::ostream &out);
void CmdPretrain(const ExperimentConfig &config, const std::string &data_dir,
                 const std::string &out_path, std::ostream &out);
void CmdTrainHead(Task task, const ExperimentConfig &config, const std::string &data_dir,
                  const std::string &encoder_path, bool baseline, const std::string &out_path,
                  std::ostream &out);
/// Scores the test split with a trained head, writes scores.tsv and
/// metrics.txt to out_dir and returns the metrics.
Config CmdEvaluate(Task task, const std::string &data_dir, const std::string &head_path,
                   const std::string &encoder_path, const std::string &out_dir, int threads,
                   std::ostream &out);
/// Metrics of an existing score file.
Config CmdEvaluateScores(Task task, const std::string &scores_path, std::size_t n_languages,
                         const std::string &out_dir, std::ostream &out);
/// Cumulative mixing-weight curve of a head trained with a learned mix, one
/// "layer weight cumulative" line per tapped layer and a final
/// "mean_layer" line with the weighted mean layer index.
std::string CmdLayerWeights(const std::string &head_path, std::ostream &out);

/// Process entry point: parses argv, runs a subcommand and maps errors to
/// exit codes (2 config, 3 data, 4 numeric, 1 anything else).
int RunCli(int argc, char **argv, std::ostream &out, std::ostream &err);
int RunCli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);

}  // namespace cfrp

#endif  // CFRP_CLI_H_
