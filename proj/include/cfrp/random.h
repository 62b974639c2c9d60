// include/cfrp/random.h

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

#ifndef CFRP_RANDOM_H_
#define CFRP_RANDOM_H_

#include <cstdint>
#include <random>
#include <string_view>

#include "cfrp/tensor.h"

namespace cfrp {

using Rng = std::mt19937_64;

/// Mixes a base seed with a stream name (FNV-1a, then splitmix64) so each
/// named consumer gets an independent deterministic stream.
std::uint64_t DeriveSeed(std::uint64_t seed, std::string_view stream);
std::uint64_t DeriveSeed(std::uint64_t seed, std::uint64_t index);

inline Rng MakeRng(std::uint64_t seed, std::string_view stream) {
  return Rng(DeriveSeed(seed, stream));
}

Tensor UniformTensor(Shape shape, Real low, Real high, Rng &rng);
Tensor NormalTensor(Shape shape, Real stddev, Rng &rng);

}  // namespace cfrp

#endif  // CFRP_RANDOM_H_
