// src/ops.cc

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

#include "cfrp/ops.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "cfrp/error.h"

namespace cfrp {
namespace {

void RequireSameShape(const char *op, const Tensor &a, const Tensor &b) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         ShapeToString(a.shape()) + " vs " + ShapeToString(b.shape()));
}

void RequireRank2(const char *op, const Tensor &a) {
  if (a.rank() != 2)
    throw DimensionError(std::string(op) + ": expected a matrix, got shape " +
                         ShapeToString(a.shape()));
}

void RequireFinite(const char *op, const Tensor &t) {
  if (!t.AllFinite()) throw NumericError(std::string(op) + ": non-finite input");
}

// Decomposes a softmax axis into (outer, n, inner) strides.
struct AxisLayout {
  std::size_t outer, n, inner;
};

AxisLayout LayoutFor(const Tensor &x, std::size_t axis) {
  if (x.rank() == 1 && axis == 0) return {1, x.dim(0), 1};
  if (x.rank() == 2 && axis == 0) return {1, x.dim(0), x.dim(1)};
  if (x.rank() == 2 && axis == 1) return {x.dim(0), x.dim(1), 1};
  throw DimensionError("softmax axis " + std::to_string(axis) + " invalid for shape " +
                       ShapeToString(x.shape()));
}

}  // namespace

Var MatMul(Var a, Var b) {
  const Tensor &av = a.value();
  const Tensor &bv = b.value();
  RequireRank2("matmul", av);
  RequireRank2("matmul", bv);
  if (av.dim(1) != bv.dim(0))
    throw DimensionError("matmul: inner dimensions differ, " + ShapeToString(av.shape()) +
                         " x " + ShapeToString(bv.shape()));
  Tensor out(Shape{av.dim(0), bv.dim(1)});
  out.matrix().noalias() = av.matrix() * bv.matrix();
  return a.tape().Record(std::move(out), {a, b}, [a, b](Tape &t, const Tensor &g) {
    if (t.NeedsGrad(a)) t.GradRef(a).matrix().noalias() += g.matrix() * t.Value(b).matrix().transpose();
    if (t.NeedsGrad(b)) t.GradRef(b).matrix().noalias() += t.Value(a).matrix().transpose() * g.matrix();
  });
}

Var Transpose(Var a) {
  const Tensor &av = a.value();
  RequireRank2("transpose", av);
  Tensor out(Shape{av.dim(1), av.dim(0)});
  out.matrix() = av.matrix().transpose();
  return a.tape().Record(std::move(out), {a}, [a](Tape &t, const Tensor &g) {
    if (t.NeedsGrad(a)) t.GradRef(a).matrix() += g.matrix().transpose();
  });
}

Var Add(Var a, Var b) {
  RequireSameShape("add", a.value(), b.value());
  Tensor out = a.value();
  const Tensor &bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return a.tape().Record(std::move(out), {a, b}, [a, b](Tape &t, const Tensor &g) {
    for (Var v : {a, b}) {
      if (!t.NeedsGrad(v)) continue;
      Tensor &gv = t.GradRef(v);
      for (std::size_t i = 0; i < g.size(); ++i) gv[i] += g[i];
    }
  });
}

Var Sub(Var a, Var b) {
  RequireSameShape("sub", a.value(), b.value());
  Tensor out = a.value();
  const Tensor &bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return a.tape().Record(std::move(out), {a, b}, [a, b](Tape &t, const Tensor &g) {
    if (t.NeedsGrad(a)) {
      Tensor &ga = t.GradRef(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.NeedsGrad(b)) {
      Tensor &gb = t.GradRef(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var Mul(Var a, Var b) {
  RequireSameShape("mul", a.value(), b.value());
  Tensor out = a.value();
  const Tensor &bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return a.tape().Record(std::move(out), {a, b}, [a, b](Tape &t, const Tensor &g) {
    if (t.NeedsGrad(a)) {
      Tensor &ga = t.GradRef(a);
      const Tensor &bv = t.Value(b);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.NeedsGrad(b)) {
      Tensor &gb = t.GradRef(b);
      const Tensor &av = t.Value(a);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var Scale(Var a, Real factor) {
  Tensor out = a.value();
  for (Real &v : out.values()) v *= factor;
  return a.tape().Record(std::move(out), {a}, [a, factor](Tape &t, const Tensor &g) {
    if (!t.NeedsGrad(a)) return;
    Tensor &ga = t.GradRef(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += factor * g[i];
  });
}

Var AddBias(Var x, Var bias) {
  const Tensor &xv = x.value();
  const Tensor &bv = bias.value();
  if (bv.rank() != 1 || (xv.rank() != 1 && xv.rank() != 2) || xv.cols() != bv.dim(0))
    throw DimensionError("add_bias: cannot add bias " + ShapeToString(bv.shape()) + " to " +
                         ShapeToString(xv.shape()));
  Tensor out = xv;
  out.matrix().rowwise() += bv.matrix().row(0);
  return x.tape().Record(std::move(out), {x, bias}, [x, bias](Tape &t, const Tensor &g) {
    if (t.NeedsGrad(x)) t.GradRef(x).matrix() += g.matrix();
    if (t.NeedsGrad(bias)) t.GradRef(bias).matrix().row(0) += g.matrix().colwise().sum();
  });
}

Var Tanh(Var x) {
  Tensor out = x.value();
  for (Real &v : out.values()) v = std::tanh(v);
  auto y_holder = std::make_shared<Var>();
  Var y = x.tape().Record(std::move(out), {x}, [x, y_holder](Tape &t, const Tensor &g) {
    Tensor &gx = t.GradRef(x);
    const Tensor &yv = t.Value(*y_holder);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (1.0 - yv[i] * yv[i]);
  });
  *y_holder = y;
  return y;
}

Var Sigmoid(Var x) {
  Tensor out = x.value();
  for (Real &v : out.values()) v = 1.0 / (1.0 + std::exp(-v));
  return x.tape().Record(std::move(out), {x}, [x](Tape &t, const Tensor &g) {
    Tensor &gx = t.GradRef(x);
    const Tensor &xv = t.Value(x);
    for (std::size_t i = 0; i < g.size(); ++i) {
      Real s = 1.0 / (1.0 + std::exp(-xv[i]));
      gx[i] += g[i] * s * (1.0 - s);
    }
  });
}

Var Relu(Var x) {
  Tensor out = x.value();
  for (Real &v : out.values()) v = v > 0.0 ? v : 0.0;
  return x.tape().Record(std::move(out), {x}, [x](Tape &t, const Tensor &g) {
    Tensor &gx = t.GradRef(x);
    const Tensor &xv = t.Value(x);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (xv[i] > 0.0) gx[i] += g[i];
  });
}

Var Log(Var x) {
  Tensor out = x.value();
  for (Real &v : out.values()) {
    if (!(v > 0.0)) throw NumericError("log: non-positive input");
    v = std::log(v);
  }
  return x.tape().Record(std::move(out), {x}, [x](Tape &t, const Tensor &g) {
    Tensor &gx = t.GradRef(x);
    const Tensor &xv = t.Value(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] / xv[i];
  });
}

namespace {

Tensor SoftmaxValues(const Tensor &x, std::size_t axis, bool log_domain) {
  RequireFinite("softmax", x);
  AxisLayout l = LayoutFor(x, axis);
  Tensor out(x.shape());
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t in = 0; in < l.inner; ++in) {
      std::size_t base = o * l.n * l.inner + in;
      Real max = -std::numeric_limits<Real>::infinity();
      for (std::size_t j = 0; j < l.n; ++j) max = std::max(max, x[base + j * l.inner]);
      Real total = 0.0;
      for (std::size_t j = 0; j < l.n; ++j) total += std::exp(x[base + j * l.inner] - max);
      Real log_total = std::log(total);
      for (std::size_t j = 0; j < l.n; ++j) {
        Real z = x[base + j * l.inner] - max - log_total;
        out[base + j * l.inner] = log_domain ? z : std::exp(z);
      }
    }
  }
  return out;
}

}  // namespace

Var Softmax(Var x, std::size_t axis) {
  Tensor out = SoftmaxValues(x.value(), axis, false);
  AxisLayout l = LayoutFor(x.value(), axis);
  // The output id exists only after recording; backward reads it via the holder.
  auto y_holder = std::make_shared<Var>();
  Var y = x.tape().Record(std::move(out), {x}, [x, l, y_holder](Tape &t, const Tensor &g) {
    Tensor &gx = t.GradRef(x);
    const Tensor &yv = t.Value(*y_holder);
    for (std::size_t o = 0; o < l.outer; ++o) {
      for (std::size_t in = 0; in < l.inner; ++in) {
        std::size_t base = o * l.n * l.inner + in;
        Real dot = 0.0;
        for (std::size_t j = 0; j < l.n; ++j) {
          std::size_t k = base + j * l.inner;
          dot += g[k] * yv[k];
        }
        for (std::size_t j = 0; j < l.n; ++j) {
          std::size_t k = base + j * l.inner;
          gx[k] += yv[k] * (g[k] - dot);
        }
      }
    }
  });
  *y_holder = y;
  return y;
}

Var LogSoftmax(Var x, std::size_t axis) {
  Tensor out = SoftmaxValues(x.value(), axis, true);
  AxisLayout l = LayoutFor(x.value(), axis);
  auto y_holder = std::make_shared<Var>();
  Var y = x.tape().Record(std::move(out), {x}, [x, l, y_holder](Tape &t, const Tensor &g) {
    Tensor &gx = t.GradRef(x);
    const Tensor &yv = t.Value(*y_holder);
    for (std::size_t o = 0; o < l.outer; ++o) {
      for (std::size_t in = 0; in < l.inner; ++in) {
        std::size_t base = o * l.n * l.inner + in;
        Real total = 0.0;
        for (std::size_t j = 0; j < l.n; ++j) total += g[base + j * l.inner];
        for (std::size_t j = 0; j < l.n; ++j) {
          std::size_t k = base + j * l.inner;
          gx[k] += g[k] - std::exp(yv[k]) * total;
        }
      }
    }
  });
  *y_holder = y;
  return y;
}

Var LayerNorm(Var x, Var gain, Var bias, Real eps) {
  const Tensor &xv = x.value();
  if (xv.rank() != 2 && xv.rank() != 1)
    throw DimensionError("layer_norm: expected [T,d] input, got " + ShapeToString(xv.shape()));
  std::size_t rows = xv.rows(), d = xv.cols();
  if (gain.value().shape() != Shape{d} || bias.value().shape() != Shape{d})
    throw DimensionError("layer_norm: gain/bias must have shape [" + std::to_string(d) + "]");
  if (!(eps > 0.0)) throw ContractError("layer_norm: eps must be positive");
  Tensor normalized(xv.shape());
  std::vector<Real> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    Real mean = 0.0;
    for (std::size_t c = 0; c < d; ++c) mean += xv(r, c);
    mean /= static_cast<Real>(d);
    Real var = 0.0;
    for (std::size_t c = 0; c < d; ++c) var += (xv(r, c) - mean) * (xv(r, c) - mean);
    var /= static_cast<Real>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < d; ++c) normalized(r, c) = (xv(r, c) - mean) * inv_std[r];
  }
  const Tensor &gv = gain.value();
  const Tensor &bv = bias.value();
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < d; ++c) out(r, c) = gv[c] * normalized(r, c) + bv[c];
  return x.tape().Record(
      std::move(out), {x, gain, bias},
      [x, gain, bias, normalized = std::move(normalized), inv_std = std::move(inv_std), rows,
       d](Tape &t, const Tensor &g) {
        const Tensor &gv = t.Value(gain);
        if (t.NeedsGrad(gain)) {
          Tensor &gg = t.GradRef(gain);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < d; ++c) gg[c] += g(r, c) * normalized(r, c);
        }
        if (t.NeedsGrad(bias)) {
          Tensor &gb = t.GradRef(bias);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < d; ++c) gb[c] += g(r, c);
        }
        if (t.NeedsGrad(x)) {
          Tensor &gx = t.GradRef(x);
          for (std::size_t r = 0; r < rows; ++r) {
            Real mean_g = 0.0, mean_gx = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
              Real gh = g(r, c) * gv[c];
              mean_g += gh;
              mean_gx += gh * normalized(r, c);
            }
            mean_g /= static_cast<Real>(d);
            mean_gx /= static_cast<Real>(d);
            for (std::size_t c = 0; c < d; ++c) {
              Real gh = g(r, c) * gv[c];
              gx(r, c) += inv_std[r] * (gh - mean_g - normalized(r, c) * mean_gx);
            }
          }
        }
      });
}

Var ConcatCols(const std::vector<Var> &parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  std::size_t rows = parts[0].value().rows();
  std::size_t total = 0;
  for (const Var &p : parts) {
    RequireRank2("concat_cols", p.value());
    if (p.value().rows() != rows)
      throw DimensionError("concat_cols: row counts differ, " +
                           ShapeToString(parts[0].value().shape()) + " vs " +
                           ShapeToString(p.value().shape()));
    total += p.value().cols();
  }
  Tensor out(Shape{rows, total});
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const Var &p : parts) {
    std::size_t c = p.value().cols();
    out.matrix().block(0, offset, rows, c) = p.value().matrix();
    offsets.push_back(offset);
    offset += c;
  }
  return parts[0].tape().Record(std::move(out), parts,
                                [parts, offsets, rows](Tape &t, const Tensor &g) {
                                  for (std::size_t i = 0; i < parts.size(); ++i) {
                                    if (!t.NeedsGrad(parts[i])) continue;
                                    Tensor &gp = t.GradRef(parts[i]);
                                    gp.matrix() += g.matrix().block(0, offsets[i], rows, gp.cols());
                                  }
                                });
}

Var SliceCols(Var x, std::size_t begin, std::size_t count) {
  const Tensor &xv = x.value();
  RequireRank2("slice_cols", xv);
  if (begin + count > xv.cols())
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", +" + std::to_string(count) +
                         ") out of range for " + ShapeToString(xv.shape()));
  std::size_t rows = xv.rows();
  Tensor out(Shape{rows, count});
  out.matrix() = xv.matrix().block(0, begin, rows, count);
  return x.tape().Record(std::move(out), {x}, [x, begin, count, rows](Tape &t, const Tensor &g) {
    t.GradRef(x).matrix().block(0, begin, rows, count) += g.matrix();
  });
}

Var ConcatRows(const std::vector<Var> &parts) {
  if (parts.empty()) throw ContractError("concat_rows: no inputs");
  std::size_t cols = parts[0].value().cols();
  std::size_t total = 0;
  for (const Var &p : parts) {
    RequireRank2("concat_rows", p.value());
    if (p.value().cols() != cols)
      throw DimensionError("concat_rows: column counts differ, " +
                           ShapeToString(parts[0].value().shape()) + " vs " +
                           ShapeToString(p.value().shape()));
    total += p.value().rows();
  }
  std::vector<Real> values;
  values.reserve(total * cols);
  for (const Var &p : parts) values.insert(values.end(), p.value().values().begin(), p.value().values().end());
  Tensor out(Shape{total, cols}, std::move(values));
  return parts[0].tape().Record(std::move(out), parts, [parts](Tape &t, const Tensor &g) {
    std::size_t offset = 0;
    for (const Var &p : parts) {
      std::size_t n = t.Value(p).size();
      if (t.NeedsGrad(p)) {
        Tensor &gp = t.GradRef(p);
        for (std::size_t i = 0; i < n; ++i) gp[i] += g[offset + i];
      }
      offset += n;
    }
  });
}

Var SliceRows(Var x, std::size_t begin, std::size_t count) {
  const Tensor &xv = x.value();
  RequireRank2("slice_rows", xv);
  Tensor out = xv.RowRange(begin, count);
  std::size_t cols = xv.cols();
  return x.tape().Record(std::move(out), {x}, [x, begin, cols](Tape &t, const Tensor &g) {
    Tensor &gx = t.GradRef(x);
    Real *dst = gx.data() + begin * cols;
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
  });
}

Var Reshape(Var x, Shape shape) {
  Tensor out = x.value().Reshaped(std::move(shape));
  return x.tape().Record(std::move(out), {x}, [x](Tape &t, const Tensor &g) {
    Tensor &gx = t.GradRef(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Var Sum(Var x) {
  Real total = 0.0;
  for (Real v : x.value().values()) total += v;
  return x.tape().Record(Tensor::Scalar(total), {x}, [x](Tape &t, const Tensor &g) {
    Tensor &gx = t.GradRef(x);
    for (Real &v : gx.values()) v += g[0];
  });
}

Var Mean(Var x) {
  std::size_t n = x.value().size();
  if (n == 0) throw ContractError("mean of empty tensor");
  return Scale(Sum(x), 1.0 / static_cast<Real>(n));
}

Var CrossEntropy(Var logits, std::size_t target) {
  const Tensor &lv = logits.value();
  if (lv.rank() != 1 || target >= lv.size())
    throw DimensionError("cross_entropy: target " + std::to_string(target) +
                         " invalid for logits " + ShapeToString(lv.shape()));
  Tensor log_probs = SoftmaxValues(lv, 0, true);
  Real loss = -log_probs[target];
  return logits.tape().Record(
      Tensor::Scalar(loss), {logits},
      [logits, target, log_probs = std::move(log_probs)](Tape &t, const Tensor &g) {
        Tensor &gl = t.GradRef(logits);
        for (std::size_t k = 0; k < gl.size(); ++k)
          gl[k] += g[0] * (std::exp(log_probs[k]) - (k == target ? 1.0 : 0.0));
      });
}

Var MixLayers(Var weights, const std::vector<Var> &layers) {
  const Tensor &wv = weights.value();
  if (wv.rank() != 1 || wv.size() != layers.size() || layers.empty())
    throw DimensionError("mix_layers: " + std::to_string(layers.size()) +
                         " layers but weights of shape " + ShapeToString(wv.shape()));
  Tensor out(layers[0].value().shape(), 0.0);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const Tensor &lv = layers[l].value();
    RequireSameShape("mix_layers", out, lv);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += wv[l] * lv[i];
  }
  std::vector<Var> inputs = layers;
  inputs.push_back(weights);
  return weights.tape().Record(std::move(out), inputs, [weights, layers](Tape &t, const Tensor &g) {
    const Tensor &wv = t.Value(weights);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      if (t.NeedsGrad(weights)) {
        const Tensor &lv = t.Value(layers[l]);
        Real dot = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * lv[i];
        t.GradRef(weights)[l] += dot;
      }
      if (t.NeedsGrad(layers[l])) {
        Tensor &gl = t.GradRef(layers[l]);
        for (std::size_t i = 0; i < g.size(); ++i) gl[i] += wv[l] * g[i];
      }
    }
  });
}

std::vector<long> ConvTapOffsets(std::size_t kernel_size, std::size_t dilation,
                                 ConvPadding padding) {
  if (kernel_size == 0 || dilation == 0)
    throw ConfigError("conv1d: kernel size and dilation must be positive");
  if (padding == ConvPadding::kCentered && kernel_size % 2 == 0)
    throw ConfigError("conv1d: centered padding needs an odd kernel, got " +
                      std::to_string(kernel_size));
  long k = static_cast<long>(kernel_size);
  long first = padding == ConvPadding::kCentered ? -(k - 1) / 2 : -(k / 2);
  std::vector<long> offsets;
  for (long j = 0; j < k; ++j) offsets.push_back((first + j) * static_cast<long>(dilation));
  return offsets;
}

Var Conv1d(Var x, Var kernel, Var bias, std::size_t dilation, ConvPadding padding) {
  const Tensor &xv = x.value();
  const Tensor &kv = kernel.value();
  const Tensor &bv = bias.value();
  RequireRank2("conv1d", xv);
  if (kv.rank() != 3 || kv.dim(1) != xv.dim(1) || bv.shape() != Shape{kv.dim(2)})
    throw DimensionError("conv1d: kernel " + ShapeToString(kv.shape()) + " / bias " +
                         ShapeToString(bv.shape()) + " incompatible with input " +
                         ShapeToString(xv.shape()));
  std::vector<long> offsets = ConvTapOffsets(kv.dim(0), dilation, padding);
  const long steps = static_cast<long>(xv.dim(0));
  const std::size_t c_in = kv.dim(1), c_out = kv.dim(2);
  Tensor out(Shape{xv.dim(0), c_out});
  out.matrix().rowwise() = bv.matrix().row(0);
  // out[t] += x[t + off_j] * K_j over the rows where t + off_j is in range.
  auto valid_range = [steps](long off) {
    long lo = std::max(0L, -off);
    long hi = std::min(steps, steps - off);
    return std::pair<long, long>(lo, std::max(lo, hi));
  };
  for (std::size_t j = 0; j < offsets.size(); ++j) {
    auto [lo, hi] = valid_range(offsets[j]);
    if (hi <= lo) continue;
    ConstMatrixMap kj(kv.data() + j * c_in * c_out, c_in, c_out);
    out.matrix().middleRows(lo, hi - lo).noalias() +=
        xv.matrix().middleRows(lo + offsets[j], hi - lo) * kj;
  }
  return x.tape().Record(
      std::move(out), {x, kernel, bias},
      [x, kernel, bias, offsets, valid_range, c_in, c_out](Tape &t, const Tensor &g) {
        const Tensor &xv = t.Value(x);
        const Tensor &kv = t.Value(kernel);
        if (t.NeedsGrad(bias)) t.GradRef(bias).matrix().row(0) += g.matrix().colwise().sum();
        for (std::size_t j = 0; j < offsets.size(); ++j) {
          auto [lo, hi] = valid_range(offsets[j]);
          if (hi <= lo) continue;
          if (t.NeedsGrad(kernel)) {
            MatrixMap gk(t.GradRef(kernel).data() + j * c_in * c_out, c_in, c_out);
            gk.noalias() += xv.matrix().middleRows(lo + offsets[j], hi - lo).transpose() *
                            g.matrix().middleRows(lo, hi - lo);
          }
          if (t.NeedsGrad(x)) {
            ConstMatrixMap kj(kv.data() + j * c_in * c_out, c_in, c_out);
            t.GradRef(x).matrix().middleRows(lo + offsets[j], hi - lo).noalias() +=
                g.matrix().middleRows(lo, hi - lo) * kj.transpose();
          }
        }
      });
}

}  // namespace cfrp
