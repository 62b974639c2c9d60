// include/cfrp/error.h

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

#ifndef CFRP_ERROR_H_
#define CFRP_ERROR_H_

#include <stdexcept>
#include <string>

namespace cfrp {

// Error categories. The CLI maps each category onto a process exit code.

/// Invalid configuration, incompatible shapes in a model definition,
/// version or checkpoint mismatches.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string &what) : std::runtime_error(what) {}
};

/// Malformed or insufficient data: bad corpus files, infeasible labels,
/// empty classes, missing segments.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string &what) : std::runtime_error(what) {}
};

/// Non-finite values encountered in a forward pass, loss or gradient.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string &what) : std::runtime_error(what) {}
};

/// Violated precondition of a function call (caller bug).
class ContractError : public std::logic_error {
 public:
  explicit ContractError(const std::string &what) : std::logic_error(what) {}
};

/// Operand shapes do not fit the operation.
class DimensionError : public ContractError {
 public:
  explicit DimensionError(const std::string &what) : ContractError(what) {}
};

/// A CTC label sequence that no alignment of the given length can produce.
class InfeasibleLabelError : public DataError {
 public:
  explicit InfeasibleLabelError(const std::string &what) : DataError(what) {}
};

}  // namespace cfrp

#endif  // CFRP_ERROR_H_
