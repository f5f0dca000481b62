// Copyright 2026 The U2S Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include "u2s/tensor.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <sstream>

#include "u2s/error.hpp"
#include "u2s/random.hpp"

namespace u2s {

namespace {

std::atomic<std::uint64_t> g_next_graph_id{1};

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

Tensor::Tensor(Shape s, double fill) : shape(std::move(s)), values(shape_numel(shape), fill) {}

Tensor::Tensor(Shape s, std::vector<double> v) : shape(std::move(s)), values(std::move(v)) {
  if (shape_numel(shape) != values.size()) {
    fail(ErrorCode::kShape, "tensor of shape " + shape_string(shape) + " given " +
                                std::to_string(values.size()) + " values");
  }
}

Parameter::Parameter(std::string n, Tensor v)
    : name(std::move(n)), value(std::move(v)), grad(value.numel(), 0.0) {}

void Parameter::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

// ---------------------------------------------------------------------------
// Graph

Graph::Graph() : id_(g_next_graph_id.fetch_add(1)) {}

std::size_t Graph::index(Var v) const {
  if (v.graph != id_ || v.id >= nodes_.size()) {
    fail(ErrorCode::kDetachedGraph, "variable does not belong to this graph");
  }
  return v.id;
}

Var Graph::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{id_, nodes_.size() - 1};
}

Var Graph::parameter(Parameter& p, bool trainable) {
  Node n;
  n.value = p.value;
  n.requires_grad = trainable;
  n.param = trainable ? &p : nullptr;
  nodes_.push_back(std::move(n));
  return Var{id_, nodes_.size() - 1};
}

Var Graph::record(Tensor value, std::span<const Var> parents, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  for (Var p : parents) {
    if (nodes_[index(p)].requires_grad) n.requires_grad = true;
  }
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{id_, nodes_.size() - 1};
}

const Tensor& Graph::value(Var v) const { return nodes_[index(v)].value; }

bool Graph::requires_grad(Var v) const { return nodes_[index(v)].requires_grad; }

std::span<const double> Graph::grad(Var v) const {
  const Node& n = nodes_[index(v)];
  return n.grad;
}

std::span<double> Graph::grad_mut(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() != n.value.numel()) n.grad.assign(n.value.numel(), 0.0);
  return n.grad;
}

void Graph::backward(Var root) {
  const std::size_t r = index(root);
  if (nodes_[r].value.numel() != 1) {
    fail(ErrorCode::kNonScalarRoot,
         "backward root must be scalar, got shape " + shape_string(nodes_[r].value.shape));
  }
  for (Node& n : nodes_) n.grad.clear();
  for (Node& n : nodes_) {
    if (n.param) n.param->zero_grad();
  }
  if (!nodes_[r].requires_grad) return;
  grad_mut(r)[0] = 1.0;
  for (std::size_t i = r + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.empty()) continue;
    if (n.backward) n.backward(*this, i);
    if (n.param) {
      for (std::size_t k = 0; k < n.grad.size(); ++k) n.param->grad[k] += n.grad[k];
    }
  }
}

// ---------------------------------------------------------------------------
// Ops

namespace ops {

namespace {

void require_rank(const Tensor& t, std::size_t rank, std::string_view op, std::string_view what) {
  if (t.rank() != rank) {
    fail(ErrorCode::kShape, std::string(op) + ": " + std::string(what) + " must have rank " +
                                std::to_string(rank) + ", got shape " + shape_string(t.shape));
  }
}

void require_axis(const Tensor& t, std::size_t axis, std::size_t extent, std::string_view op,
                  std::string_view axis_name) {
  if (t.dim(axis) != extent) {
    fail(ErrorCode::kShape, std::string(op) + ": axis " + std::string(axis_name) + " (" +
                                std::to_string(axis) + ") has extent " +
                                std::to_string(t.dim(axis)) + ", expected " +
                                std::to_string(extent));
  }
}

}  // namespace

Var add(Graph& g, Var a, Var b) {
  const Tensor& ta = g.value(a);
  const Tensor& tb = g.value(b);
  if (ta.shape != tb.shape) {
    fail(ErrorCode::kShape,
         "add: shapes " + shape_string(ta.shape) + " and " + shape_string(tb.shape) + " differ");
  }
  Tensor out = ta;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += tb[i];
  const Var parents[] = {a, b};
  return g.record(std::move(out), parents, [a, b](Graph& gr, std::size_t self) {
    auto go = gr.grad_mut(self);
    for (Var p : {a, b}) {
      if (!gr.requires_grad(p)) continue;
      auto gp = gr.grad_mut(p.id);
      for (std::size_t i = 0; i < go.size(); ++i) gp[i] += go[i];
    }
  });
}

Var scale(Graph& g, Var a, double k) {
  Tensor out = g.value(a);
  for (double& v : out.values) v *= k;
  const Var parents[] = {a};
  return g.record(std::move(out), parents, [a, k](Graph& gr, std::size_t self) {
    auto go = gr.grad_mut(self);
    auto ga = gr.grad_mut(a.id);
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += k * go[i];
  });
}

Var sum(Graph& g, Var a) {
  double s = 0.0;
  for (double v : g.value(a).values) s += v;
  const Var parents[] = {a};
  return g.record(Tensor({1}, s), parents, [a](Graph& gr, std::size_t self) {
    const double go = gr.grad_mut(self)[0];
    for (double& v : gr.grad_mut(a.id)) v += go;
  });
}

Var weighted_sum(Graph& g, std::span<const Var> terms, std::span<const double> weights) {
  if (terms.size() != weights.size() || terms.empty()) {
    fail(ErrorCode::kInvalidArgument, "weighted_sum: need one weight per term");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    const Tensor& t = g.value(terms[i]);
    if (t.numel() != 1) fail(ErrorCode::kShape, "weighted_sum: terms must be scalars");
    s += weights[i] * t[0];
  }
  std::vector<Var> ts(terms.begin(), terms.end());
  std::vector<double> ws(weights.begin(), weights.end());
  return g.record(Tensor({1}, s), terms, [ts, ws](Graph& gr, std::size_t self) {
    const double go = gr.grad_mut(self)[0];
    for (std::size_t i = 0; i < ts.size(); ++i) {
      if (gr.requires_grad(ts[i])) gr.grad_mut(ts[i].id)[0] += ws[i] * go;
    }
  });
}

Var relu(Graph& g, Var x) {
  Tensor out = g.value(x);
  for (double& v : out.values) v = v > 0.0 ? v : 0.0;
  const Var parents[] = {x};
  return g.record(std::move(out), parents, [x](Graph& gr, std::size_t self) {
    auto go = gr.grad_mut(self);
    const Tensor& in = gr.value(x.id);
    auto gx = gr.grad_mut(x.id);
    for (std::size_t i = 0; i < go.size(); ++i) {
      if (in[i] > 0.0) gx[i] += go[i];
    }
  });
}

Var sigmoid(Graph& g, Var x) {
  Tensor out = g.value(x);
  for (double& v : out.values) {
    v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  const Var parents[] = {x};
  return g.record(std::move(out), parents, [x](Graph& gr, std::size_t self) {
    auto go = gr.grad_mut(self);
    const Tensor& y = gr.value(self);
    auto gx = gr.grad_mut(x.id);
    for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * y[i] * (1.0 - y[i]);
  });
}

Var dense(Graph& g, Var x, Var w, Var b) {
  const Tensor& tx = g.value(x);
  const Tensor& tw = g.value(w);
  const Tensor& tb = g.value(b);
  require_rank(tx, 2, "dense", "input");
  require_rank(tw, 2, "dense", "weight");
  require_axis(tx, 1, tw.dim(0), "dense", "C");
  require_rank(tb, 1, "dense", "bias");
  require_axis(tb, 0, tw.dim(1), "dense", "C_out");
  const std::size_t n = tx.dim(0), cin = tw.dim(0), cout = tw.dim(1);
  Tensor out({n, cout});
  for (std::size_t i = 0; i < n; ++i) {
    double* row = &out.values[i * cout];
    for (std::size_t o = 0; o < cout; ++o) row[o] = tb[o];
    for (std::size_t c = 0; c < cin; ++c) {
      const double xv = tx[i * cin + c];
      const double* wr = &tw.values[c * cout];
      for (std::size_t o = 0; o < cout; ++o) row[o] += xv * wr[o];
    }
  }
  const Var parents[] = {x, w, b};
  return g.record(std::move(out), parents, [x, w, b, n, cin, cout](Graph& gr, std::size_t self) {
    auto go = gr.grad_mut(self);
    const Tensor& tx = gr.value(x.id);
    const Tensor& tw = gr.value(w.id);
    if (gr.requires_grad(x)) {
      auto gx = gr.grad_mut(x.id);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < cin; ++c) {
          double s = 0.0;
          for (std::size_t o = 0; o < cout; ++o) s += go[i * cout + o] * tw[c * cout + o];
          gx[i * cin + c] += s;
        }
    }
    if (gr.requires_grad(w)) {
      auto gw = gr.grad_mut(w.id);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < cin; ++c) {
          const double xv = tx[i * cin + c];
          for (std::size_t o = 0; o < cout; ++o) gw[c * cout + o] += xv * go[i * cout + o];
        }
    }
    if (gr.requires_grad(b)) {
      auto gb = gr.grad_mut(b.id);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t o = 0; o < cout; ++o) gb[o] += go[i * cout + o];
    }
  });
}

Var per_position_linear(Graph& g, Var x, Var w, Var b) {
  const Tensor& tx = g.value(x);
  const Tensor& tw = g.value(w);
  const Tensor& tb = g.value(b);
  require_rank(tx, 5, "per_position_linear", "input");
  require_rank(tw, 2, "per_position_linear", "weight");
  require_axis(tx, 2, tw.dim(0), "per_position_linear", "C");
  require_rank(tb, 1, "per_position_linear", "bias");
  require_axis(tb, 0, tw.dim(1), "per_position_linear", "C_out");
  const std::size_t frames = tx.dim(0) * tx.dim(1);
  const std::size_t cin = tw.dim(0), cout = tw.dim(1);
  const std::size_t hw = tx.dim(3) * tx.dim(4);
  Tensor out({tx.dim(0), tx.dim(1), cout, tx.dim(3), tx.dim(4)});
  for (std::size_t f = 0; f < frames; ++f) {
    const double* in = &tx.values[f * cin * hw];
    double* o_base = &out.values[f * cout * hw];
    for (std::size_t o = 0; o < cout; ++o) std::fill(o_base + o * hw, o_base + (o + 1) * hw, tb[o]);
    for (std::size_t c = 0; c < cin; ++c) {
      const double* xc = in + c * hw;
      for (std::size_t o = 0; o < cout; ++o) {
        const double wv = tw[c * cout + o];
        double* oo = o_base + o * hw;
        for (std::size_t p = 0; p < hw; ++p) oo[p] += wv * xc[p];
      }
    }
  }
  const Var parents[] = {x, w, b};
  return g.record(std::move(out), parents,
                  [x, w, b, frames, cin, cout, hw](Graph& gr, std::size_t self) {
    auto go = gr.grad_mut(self);
    const Tensor& tx = gr.value(x.id);
    const Tensor& tw = gr.value(w.id);
    const bool need_x = gr.requires_grad(x);
    const bool need_w = gr.requires_grad(w);
    const bool need_b = gr.requires_grad(b);
    std::span<double> gx, gw, gb;
    if (need_x) gx = gr.grad_mut(x.id);
    if (need_w) gw = gr.grad_mut(w.id);
    if (need_b) gb = gr.grad_mut(b.id);
    for (std::size_t f = 0; f < frames; ++f) {
      const double* gof = &go[f * cout * hw];
      for (std::size_t c = 0; c < cin; ++c) {
        const double* xc = &tx.values[(f * cin + c) * hw];
        for (std::size_t o = 0; o < cout; ++o) {
          const double* goo = gof + o * hw;
          if (need_x) {
            const double wv = tw[c * cout + o];
            double* gxc = &gx[(f * cin + c) * hw];
            for (std::size_t p = 0; p < hw; ++p) gxc[p] += wv * goo[p];
          }
          if (need_w) {
            double s = 0.0;
            for (std::size_t p = 0; p < hw; ++p) s += xc[p] * goo[p];
            gw[c * cout + o] += s;
          }
        }
      }
      if (need_b) {
        for (std::size_t o = 0; o < cout; ++o) {
          double s = 0.0;
          for (std::size_t p = 0; p < hw; ++p) s += gof[o * hw + p];
          gb[o] += s;
        }
      }
    }
  });
}

Var global_avg_pool(Graph& g, Var x) {
  const Tensor& tx = g.value(x);
  require_rank(tx, 5, "global_avg_pool", "input");
  const std::size_t n = tx.dim(0), t = tx.dim(1), c = tx.dim(2), hw = tx.dim(3) * tx.dim(4);
  if (t * hw == 0) fail(ErrorCode::kShape, "global_avg_pool: empty spatiotemporal extent");
  const double inv = 1.0 / static_cast<double>(t * hw);
  Tensor out({n, c});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < c; ++k) {
      double s = 0.0;
      for (std::size_t f = 0; f < t; ++f) {
        const double* p = &tx.values[((i * t + f) * c + k) * hw];
        for (std::size_t q = 0; q < hw; ++q) s += p[q];
      }
      out[i * c + k] = s * inv;
    }
  const Var parents[] = {x};
  return g.record(std::move(out), parents, [x, n, t, c, hw, inv](Graph& gr, std::size_t self) {
    auto go = gr.grad_mut(self);
    auto gx = gr.grad_mut(x.id);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t f = 0; f < t; ++f)
        for (std::size_t k = 0; k < c; ++k) {
          const double v = go[i * c + k] * inv;
          double* p = &gx[((i * t + f) * c + k) * hw];
          for (std::size_t q = 0; q < hw; ++q) p[q] += v;
        }
  });
}

Var masked_broadcast_mul(Graph& g, Var features, Var mask) {
  const Tensor& tf = g.value(features);
  const Tensor& tm = g.value(mask);
  require_rank(tf, 5, "masked_broadcast_mul", "features");
  require_rank(tm, 5, "masked_broadcast_mul", "mask");
  require_axis(tm, 2, 1, "masked_broadcast_mul", "C");
  static constexpr std::string_view kAxes[] = {"N", "T", "C", "H", "W"};
  for (std::size_t a : {0u, 1u, 3u, 4u}) {
    require_axis(tm, a, tf.dim(a), "masked_broadcast_mul", kAxes[a]);
  }
  const std::size_t frames = tf.dim(0) * tf.dim(1), c = tf.dim(2), hw = tf.dim(3) * tf.dim(4);
  Tensor out = tf;
  for (std::size_t f = 0; f < frames; ++f)
    for (std::size_t k = 0; k < c; ++k) {
      double* p = &out.values[(f * c + k) * hw];
      const double* m = &tm.values[f * hw];
      for (std::size_t q = 0; q < hw; ++q) p[q] *= m[q];
    }
  const Var parents[] = {features, mask};
  return g.record(std::move(out), parents,
                  [features, mask, frames, c, hw](Graph& gr, std::size_t self) {
    auto go = gr.grad_mut(self);
    const Tensor& tf = gr.value(features.id);
    const Tensor& tm = gr.value(mask.id);
    const bool need_f = gr.requires_grad(features);
    const bool need_m = gr.requires_grad(mask);
    std::span<double> gf, gm;
    if (need_f) gf = gr.grad_mut(features.id);
    if (need_m) gm = gr.grad_mut(mask.id);
    for (std::size_t f = 0; f < frames; ++f)
      for (std::size_t k = 0; k < c; ++k) {
        const std::size_t base = (f * c + k) * hw;
        for (std::size_t q = 0; q < hw; ++q) {
          if (need_f) gf[base + q] += go[base + q] * tm[f * hw + q];
          if (need_m) gm[f * hw + q] += go[base + q] * tf[base + q];
        }
      }
  });
}

Var avg_pool_spatial(Graph& g, Var x, std::size_t radius) {
  const Tensor& tx = g.value(x);
  require_rank(tx, 5, "avg_pool_spatial", "input");
  const std::size_t planes = tx.dim(0) * tx.dim(1) * tx.dim(2);
  const std::size_t h = tx.dim(3), w = tx.dim(4);
  const auto r = static_cast<std::ptrdiff_t>(radius);
  // Window bounds and normalizers depend only on the cell, not on the plane.
  std::vector<double> inv_count(h * w);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      const auto i0 = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(i) - r);
      const auto i1 = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(h) - 1,
                                               static_cast<std::ptrdiff_t>(i) + r);
      const auto j0 = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(j) - r);
      const auto j1 = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(w) - 1,
                                               static_cast<std::ptrdiff_t>(j) + r);
      inv_count[i * w + j] = 1.0 / static_cast<double>((i1 - i0 + 1) * (j1 - j0 + 1));
    }
  auto window = [h, w, r](std::size_t i, std::size_t j) {
    const auto si = static_cast<std::ptrdiff_t>(i), sj = static_cast<std::ptrdiff_t>(j);
    return std::array<std::size_t, 4>{
        static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, si - r)),
        static_cast<std::size_t>(std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(h) - 1, si + r)),
        static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, sj - r)),
        static_cast<std::size_t>(std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(w) - 1, sj + r))};
  };
  Tensor out(tx.shape);
  for (std::size_t p = 0; p < planes; ++p) {
    const double* in = &tx.values[p * h * w];
    double* o = &out.values[p * h * w];
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        const auto [i0, i1, j0, j1] = window(i, j);
        double s = 0.0;
        for (std::size_t a = i0; a <= i1; ++a)
          for (std::size_t b = j0; b <= j1; ++b) s += in[a * w + b];
        o[i * w + j] = s * inv_count[i * w + j];
      }
  }
  const Var parents[] = {x};
  return g.record(std::move(out), parents,
                  [x, planes, h, w, inv_count, window](Graph& gr, std::size_t self) {
    auto go = gr.grad_mut(self);
    auto gx = gr.grad_mut(x.id);
    for (std::size_t p = 0; p < planes; ++p) {
      const double* gop = &go[p * h * w];
      double* gxp = &gx[p * h * w];
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
          const auto [i0, i1, j0, j1] = window(i, j);
          const double v = gop[i * w + j] * inv_count[i * w + j];
          for (std::size_t a = i0; a <= i1; ++a)
            for (std::size_t b = j0; b <= j1; ++b) gxp[a * w + b] += v;
        }
    }
  });
}

Var channel_weighted_mean(Graph& g, Var masks, const Tensor& weights) {
  const Tensor& tm = g.value(masks);
  require_rank(tm, 5, "channel_weighted_mean", "masks");
  require_rank(weights, 2, "channel_weighted_mean", "weights");
  require_axis(weights, 0, tm.dim(0), "channel_weighted_mean", "N");
  require_axis(weights, 1, tm.dim(2), "channel_weighted_mean", "M");
  const std::size_t n = tm.dim(0), t = tm.dim(1), m = tm.dim(2), hw = tm.dim(3) * tm.dim(4);
  Tensor norm = weights;
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < m; ++k) s += norm[i * m + k];
    if (!(s > 0.0)) {
      fail(ErrorCode::kInvalidArgument, "channel_weighted_mean: weight row " + std::to_string(i) +
                                            " does not have a positive sum");
    }
    for (std::size_t k = 0; k < m; ++k) norm[i * m + k] /= s;
  }
  Tensor out({n, t, 1, tm.dim(3), tm.dim(4)});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t f = 0; f < t; ++f) {
      double* o = &out.values[(i * t + f) * hw];
      for (std::size_t k = 0; k < m; ++k) {
        const double wk = norm[i * m + k];
        if (wk == 0.0) continue;
        const double* src = &tm.values[((i * t + f) * m + k) * hw];
        for (std::size_t q = 0; q < hw; ++q) o[q] += wk * src[q];
      }
    }
  const Var parents[] = {masks};
  return g.record(std::move(out), parents, [masks, norm, n, t, m, hw](Graph& gr, std::size_t self) {
    auto go = gr.grad_mut(self);
    auto gm = gr.grad_mut(masks.id);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t f = 0; f < t; ++f) {
        const double* gof = &go[(i * t + f) * hw];
        for (std::size_t k = 0; k < m; ++k) {
          const double wk = norm[i * m + k];
          if (wk == 0.0) continue;
          double* dst = &gm[((i * t + f) * m + k) * hw];
          for (std::size_t q = 0; q < hw; ++q) dst[q] += wk * gof[q];
        }
      }
  });
}

}  // namespace ops

Tensor softmax_rows(const Tensor& logits) {
  if (logits.rank() != 2) {
    fail(ErrorCode::kShape, "softmax: logits must be (N, M), got " + shape_string(logits.shape));
  }
  const std::size_t n = logits.dim(0), m = logits.dim(1);
  Tensor probs(logits.shape);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = &logits.values[i * m];
    const double mx = *std::max_element(row, row + m);
    double z = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      probs[i * m + k] = std::exp(row[k] - mx);
      z += probs[i * m + k];
    }
    for (std::size_t k = 0; k < m; ++k) probs[i * m + k] /= z;
  }
  return probs;
}

CrossEntropy softmax_cross_entropy(Graph& g, Var logits, std::span<const int> labels) {
  const Tensor& tl = g.value(logits);
  if (tl.rank() != 2) {
    fail(ErrorCode::kShape, "softmax_cross_entropy: logits must be (N, M), got " +
                                shape_string(tl.shape));
  }
  const std::size_t n = tl.dim(0), m = tl.dim(1);
  if (labels.size() != n) {
    fail(ErrorCode::kShape, "softmax_cross_entropy: axis N has extent " + std::to_string(n) +
                                " but " + std::to_string(labels.size()) + " labels were given");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= m) {
      fail(ErrorCode::kLabelRange, "softmax_cross_entropy: label " + std::to_string(labels[i]) +
                                       " at row " + std::to_string(i) + " outside [0, " +
                                       std::to_string(m) + ")");
    }
  }
  Tensor probs = softmax_rows(tl);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = &tl.values[i * m];
    const double mx = *std::max_element(row, row + m);
    double z = 0.0;
    for (std::size_t k = 0; k < m; ++k) z += std::exp(row[k] - mx);
    loss += (mx + std::log(z)) - row[labels[i]];
  }
  loss /= static_cast<double>(n);
  std::vector<int> lab(labels.begin(), labels.end());
  const Var parents[] = {logits};
  Var out = g.record(Tensor({1}, loss), parents,
                     [logits, probs, lab, n, m](Graph& gr, std::size_t self) {
    const double go = gr.grad_mut(self)[0] / static_cast<double>(n);
    auto gl = gr.grad_mut(logits.id);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < m; ++k) {
        const double target = static_cast<std::size_t>(lab[i]) == k ? 1.0 : 0.0;
        gl[i * m + k] += go * (probs[i * m + k] - target);
      }
  });
  return CrossEntropy{out, std::move(probs)};
}

// ---------------------------------------------------------------------------
// Layers

std::string_view layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::kDense: return "dense";
    case LayerKind::kPerPositionLinear: return "per_position_linear";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kSigmoid: return "sigmoid";
    case LayerKind::kGlobalAvgPool: return "global_avg_pool";
    case LayerKind::kMaskedBroadcastMul: return "masked_broadcast_mul";
    case LayerKind::kAvgPoolSpatial: return "avg_pool_spatial";
  }
  fail(ErrorCode::kUnknownKind, "unknown layer kind " + std::to_string(static_cast<int>(kind)));
}

LayerKind parse_layer_kind(std::string_view name) {
  for (LayerKind k : {LayerKind::kDense, LayerKind::kPerPositionLinear, LayerKind::kRelu,
                      LayerKind::kSigmoid, LayerKind::kGlobalAvgPool,
                      LayerKind::kMaskedBroadcastMul, LayerKind::kAvgPoolSpatial}) {
    if (layer_kind_name(k) == name) return k;
  }
  fail(ErrorCode::kUnknownKind, "unknown layer kind '" + std::string(name) + "'");
}

Layer::Layer(std::string name, LayerSpec spec) : name_(std::move(name)), spec_(spec) {
  if (spec.kind != LayerKind::kDense && spec.kind != LayerKind::kPerPositionLinear) return;
  if (spec.in_channels == 0 || spec.out_channels == 0) {
    fail(ErrorCode::kInvalidArgument, "layer '" + name_ + "': channel counts must be positive");
  }
  const double stddev = spec.weight_init.scale > 0.0
                            ? spec.weight_init.scale
                            : 1.0 / std::sqrt(static_cast<double>(spec.in_channels));
  Rng rng(spec.weight_init.seed);
  Tensor w({spec.in_channels, spec.out_channels});
  for (double& v : w.values) v = stddev * rng.normal();
  weight_.emplace(name_ + ".weight", std::move(w));
  bias_.emplace(name_ + ".bias", Tensor({spec.out_channels}, 0.0));
}

std::vector<Parameter*> Layer::parameters() {
  if (!weight_) return {};
  return {&*weight_, &*bias_};
}

Var apply_layer(Graph& g, Layer& layer, Var input, std::optional<Var> aux, bool trainable) {
  const LayerSpec& s = layer.spec();
  switch (s.kind) {
    case LayerKind::kDense:
      return ops::dense(g, input, g.parameter(layer.weight(), trainable),
                        g.parameter(layer.bias(), trainable));
    case LayerKind::kPerPositionLinear:
      return ops::per_position_linear(g, input, g.parameter(layer.weight(), trainable),
                                      g.parameter(layer.bias(), trainable));
    case LayerKind::kRelu: return ops::relu(g, input);
    case LayerKind::kSigmoid: return ops::sigmoid(g, input);
    case LayerKind::kGlobalAvgPool: return ops::global_avg_pool(g, input);
    case LayerKind::kMaskedBroadcastMul:
      if (!aux) fail(ErrorCode::kInvalidArgument, "masked_broadcast_mul requires a mask operand");
      return ops::masked_broadcast_mul(g, input, *aux);
    case LayerKind::kAvgPoolSpatial: return ops::avg_pool_spatial(g, input, s.radius);
  }
  fail(ErrorCode::kUnknownKind,
       "unknown layer kind " + std::to_string(static_cast<int>(s.kind)));
}

// ---------------------------------------------------------------------------
// Gradient checking

GradientCheck check_gradients(const std::function<Var(Graph&)>& loss_fn,
                              std::span<Parameter* const> params, double eps) {
  if (!(eps > 0.0)) fail(ErrorCode::kInvalidArgument, "check_gradients: eps must be positive");
  std::vector<std::vector<double>> analytic;
  {
    Graph g;
    Var loss = loss_fn(g);
    g.backward(loss);
    for (Parameter* p : params) analytic.push_back(p->grad);
  }
  auto evaluate = [&]() {
    Graph g;
    return g.value(loss_fn(g))[0];
  };
  GradientCheck result;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    for (std::size_t i = 0; i < p.value.numel(); ++i) {
      const double saved = p.value[i];
      p.value[i] = saved + eps;
      const double up = evaluate();
      p.value[i] = saved - eps;
      const double down = evaluate();
      p.value[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[k][i];
      const double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      if (result.worst_parameter.empty() || rel > result.max_relative_error) {
        result.max_relative_error = rel;
        result.worst_parameter = p.name;
        result.worst_index = i;
        result.analytic = a;
        result.numeric = numeric;
      }
    }
  }
  for (std::size_t k = 0; k < params.size(); ++k) params[k]->grad = analytic[k];
  return result;
}

// ---------------------------------------------------------------------------
// Optimizer

void sgd_step(std::span<Parameter* const> params, OptimizerState& state) {
  for (Parameter* p : params) {
    if (p->grad.size() != p->value.numel()) {
      fail(ErrorCode::kShape, "sgd_step: gradient of '" + p->name + "' has " +
                                  std::to_string(p->grad.size()) + " entries, parameter has " +
                                  std::to_string(p->value.numel()));
    }
    auto [it, inserted] = state.velocity.try_emplace(p->name, Tensor(p->value.shape, 0.0));
    Tensor& v = it->second;
    if (v.shape != p->value.shape) {
      fail(ErrorCode::kShape, "sgd_step: velocity of '" + p->name + "' has shape " +
                                  shape_string(v.shape) + ", parameter has " +
                                  shape_string(p->value.shape));
    }
    for (std::size_t i = 0; i < v.numel(); ++i) {
      v[i] = state.momentum * v[i] + p->grad[i] + state.weight_decay * p->value[i];
      p->value[i] -= state.learning_rate * v[i];
    }
  }
}

}  // namespace u2s
