// src/autodiff.cc

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

#include "cfrp/autodiff.h"

#include "cfrp/error.h"

namespace cfrp {

Parameter &ParameterSet::Add(const std::string &name, Tensor init) {
  auto [it, inserted] = params_.try_emplace(name, Parameter{name, std::move(init)});
  if (!inserted) throw ConfigError("duplicate parameter name: " + name);
  return it->second;
}

Parameter &ParameterSet::Get(const std::string &name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter: " + name);
  return it->second;
}

const Parameter &ParameterSet::Get(const std::string &name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter: " + name);
  return it->second;
}

std::size_t ParameterSet::NumScalars() const {
  std::size_t n = 0;
  for (const auto &[name, p] : params_) n += p.value.size();
  return n;
}

ParameterSet ParameterSet::Clone() const {
  ParameterSet out;
  for (const auto &[name, p] : params_) out.Add(name, p.value);
  return out;
}

bool ParameterSet::BitwiseEquals(const ParameterSet &other) const {
  if (params_.size() != other.params_.size()) return false;
  auto a = params_.begin();
  auto b = other.params_.begin();
  for (; a != params_.end(); ++a, ++b) {
    if (a->first != b->first) return false;
    if (!a->second.value.BitwiseEquals(b->second.value)) return false;
  }
  return true;
}

const Tensor &Var::value() const { return tape_->Value(*this); }
bool Var::requires_grad() const { return tape_->NeedsGrad(*this); }

const Tape::Node &Tape::node(Var v) const {
  if (v.id() < 0 || static_cast<std::size_t>(v.id()) >= nodes_.size() || &v.tape() != this)
    throw ContractError("Var does not belong to this tape");
  return nodes_[v.id()];
}

Tape::Node &Tape::node(Var v) {
  return const_cast<Node &>(static_cast<const Tape *>(this)->node(v));
}

Var Tape::Push(Node n) {
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::Constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return Push(std::move(n));
}

Var Tape::Variable(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return Push(std::move(n));
}

Var Tape::Param(const Parameter &param, bool trainable) {
  auto it = param_nodes_.find(&param);
  if (it != param_nodes_.end()) {
    Node &existing = nodes_[it->second];
    if (existing.requires_grad != trainable)
      throw ContractError("parameter " + param.name +
                          " used both as trainable and frozen on one tape");
    return Var(this, it->second);
  }
  Node n;
  n.external = &param.value;
  n.requires_grad = trainable;
  n.param = &param;
  Var v = Push(std::move(n));
  param_nodes_.emplace(&param, v.id());
  return v;
}

Var Tape::Record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  for (const Var &in : inputs) {
    if (NeedsGrad(in)) {
      n.requires_grad = true;
      break;
    }
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return Push(std::move(n));
}

Var Tape::Record(Tensor value, const std::vector<Var> &inputs, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  for (const Var &in : inputs) {
    if (NeedsGrad(in)) {
      n.requires_grad = true;
      break;
    }
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return Push(std::move(n));
}

const Tensor &Tape::Value(Var v) const {
  const Node &n = node(v);
  return n.external ? *n.external : n.value;
}

bool Tape::NeedsGrad(Var v) const { return node(v).requires_grad; }

Tensor &Tape::GradRef(Var v) {
  Node &n = node(v);
  if (!n.has_grad) {
    n.grad = Tensor(Value(v).shape(), 0.0);
    n.has_grad = true;
  }
  return n.grad;
}

Tensor Tape::Grad(Var v) const {
  const Node &n = node(v);
  if (n.has_grad) return n.grad;
  return Tensor(Value(v).shape(), 0.0);
}

void Tape::Backward(Var loss) {
  if (Value(loss).size() != 1)
    throw ContractError("Backward() needs a scalar loss, got shape " +
                        ShapeToString(Value(loss).shape()));
  for (Node &n : nodes_) {
    n.has_grad = false;
    n.grad = Tensor();
  }
  if (!NeedsGrad(loss)) return;
  GradRef(loss).Fill(1.0);
  for (int id = loss.id(); id >= 0; --id) {
    Node &n = nodes_[id];
    if (!n.requires_grad || !n.has_grad || !n.backward) continue;
    n.backward(*this, n.grad);
  }
}

Gradients Tape::ParamGrads() const {
  Gradients out;
  for (const auto &[param, id] : param_nodes_) {
    const Node &n = nodes_[id];
    if (!n.requires_grad) continue;
    out.emplace(param->name, n.has_grad ? n.grad : Tensor(param->value.shape(), 0.0));
  }
  return out;
}

}  // namespace cfrp
