// include/cfrp/autodiff.h

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

#ifndef CFRP_AUTODIFF_H_
#define CFRP_AUTODIFF_H_

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "cfrp/tensor.h"

namespace cfrp {

/// A named, trainable tensor owned by a ParameterSet.
struct Parameter {
  std::string name;
  Tensor value;
};

/// Name-ordered parameter container. Element addresses are stable for the
/// lifetime of the set, so layers may keep `const Parameter *` handles.
class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(const ParameterSet &) = delete;
  ParameterSet &operator=(const ParameterSet &) = delete;
  ParameterSet(ParameterSet &&) = default;
  ParameterSet &operator=(ParameterSet &&) = default;

  /// Throws ConfigError if `name` already exists.
  Parameter &Add(const std::string &name, Tensor init);
  bool Contains(const std::string &name) const { return params_.count(name) != 0; }
  /// Throws ConfigError for unknown names.
  Parameter &Get(const std::string &name);
  const Parameter &Get(const std::string &name) const;

  std::size_t size() const { return params_.size(); }
  std::size_t NumScalars() const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  /// Deep copy (ParameterSet itself is move-only).
  ParameterSet Clone() const;

  /// True when both sets hold the same names with bit-identical values.
  bool BitwiseEquals(const ParameterSet &other) const;

 private:
  std::map<std::string, Parameter> params_;
};

/// Per-parameter gradients keyed by parameter name.
using Gradients = std::map<std::string, Tensor>;

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape *tape, int id) : tape_(tape), id_(id) {}

  Tape &tape() const { return *tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Tensor &value() const;
  const Shape &shape() const { return value().shape(); }
  bool requires_grad() const;

 private:
  Tape *tape_ = nullptr;
  int id_ = -1;
};

/// Define-by-run computation graph. Nodes are appended in creation order,
/// which is a topological order; Backward() walks it once in reverse.
///
/// A tape is single-threaded. Concurrent forward/backward passes use one tape
/// each, reading parameters through const references.
class Tape {
 public:
  /// Receives the gradient of the node's output. Implementations accumulate
  /// into inputs via GradRef() after checking NeedsGrad().
  using BackwardFn = std::function<void(Tape &, const Tensor &)>;

  Tape() = default;
  Tape(const Tape &) = delete;
  Tape &operator=(const Tape &) = delete;

  Var Constant(Tensor value);
  Var Variable(Tensor value);
  /// Reads the parameter value by reference; the same parameter maps to a
  /// single node. Untrainable parameters behave as constants.
  Var Param(const Parameter &param, bool trainable = true);

  /// Appends an op node. The node requires grad iff any input does; when it
  /// does not, `backward` is dropped.
  Var Record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);
  Var Record(Tensor value, const std::vector<Var> &inputs, BackwardFn backward);

  /// Reverse sweep from a size-1 loss. Resets all gradients first.
  void Backward(Var loss);

  const Tensor &Value(Var v) const;
  bool NeedsGrad(Var v) const;
  /// Gradient buffer for `v`, allocated as zeros on first use.
  Tensor &GradRef(Var v);
  /// Gradient after Backward(); zeros for nodes the loss does not reach.
  Tensor Grad(Var v) const;

  /// Gradients of every trainable parameter node, keyed by name. Parameters
  /// not reached by the loss report zeros.
  Gradients ParamGrads() const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    const Tensor *external = nullptr;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    BackwardFn backward;
    const Parameter *param = nullptr;
  };

  const Node &node(Var v) const;
  Node &node(Var v);
  Var Push(Node node);

  std::deque<Node> nodes_;
  std::unordered_map<const Parameter *, int> param_nodes_;
};

}  // namespace cfrp

#endif  // CFRP_AUTODIFF_H_
