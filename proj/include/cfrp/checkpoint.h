// include/cfrp/checkpoint.h

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

#ifndef CFRP_CHECKPOINT_H_
#define CFRP_CHECKPOINT_H_

#include <cstdint>
#include <map>
#include <string>

#include "cfrp/autodiff.h"
#include "cfrp/tensor.h"

namespace cfrp {

// Binary layout, all integers little-endian:
//   "CFRP" | u32 version | u64 manifest length | manifest bytes |
//   u32 tensor count | per tensor: u32 name length | name | u8 dtype (0 = f64) |
//   u32 rank | u64 dims[rank] | f64 payload, row-major
// Tensors are written in name order.

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string manifest;  // key = value text
  std::map<std::string, Tensor> tensors;
};

std::string SerializeCheckpoint(const Checkpoint &ckpt);
/// Truncated or malformed bytes raise DataError; an unknown version raises
/// ConfigError.
Checkpoint ParseCheckpoint(const std::string &bytes, const std::string &origin = "<memory>");

void SaveCheckpoint(const Checkpoint &ckpt, const std::string &path);
Checkpoint LoadCheckpoint(const std::string &path);

/// Stores every parameter under prefix + name.
void PutParameters(Checkpoint &ckpt, const ParameterSet &params, const std::string &prefix = "");
/// Copies tensors named prefix + name into `params`; each parameter must be
/// present with a matching shape (ConfigError otherwise).
void GetParameters(const Checkpoint &ckpt, ParameterSet &params, const std::string &prefix = "");

}  // namespace cfrp

#endif  // CFRP_CHECKPOINT_H_
