#include "vad/autograd.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <unordered_set>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "vad/common.hpp"
#include "vad/threads.hpp"

namespace vad {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using MapConst = Eigen::Map<const RowMat>;

void Node::accumulate(const Tensor& g) { accumulate(g.data(), g.numel()); }

void Node::accumulate(const float* g, std::int64_t n) {
  if (!has_grad) {
    grad = Tensor(value.shape());
    has_grad = true;
  }
  float* dst = grad.data();
  for (std::int64_t i = 0; i < n; ++i) dst[i] += g[i];
}

Var make_leaf(Tensor value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return n;
}

Var make_leaf(float scalar_value, bool requires_grad) {
  return make_leaf(Tensor::scalar(scalar_value), requires_grad);
}

namespace {

Var make_op(const char* op, Tensor value, std::vector<Var> parents,
            std::function<void(Node&)> backward_fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->op = op;
  bool needs = false;
  for (const auto& p : parents) needs = needs || p->requires_grad;
  n->requires_grad = needs;
  if (needs) {
    n->parents = std::move(parents);
    n->backward_fn = std::move(backward_fn);
  }
  return n;
}

void topo_visit(const Var& v, std::unordered_set<Node*>& seen, std::vector<Var>& order) {
  // Iterative post-order DFS; graphs can be deep enough to care.
  struct Frame {
    Var node;
    std::size_t next_parent = 0;
  };
  if (seen.count(v.get())) return;
  std::vector<Frame> stack;
  stack.push_back({v});
  seen.insert(v.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      Var p = f.node->parents[f.next_parent++];
      if (!seen.count(p.get())) {
        seen.insert(p.get());
        stack.push_back({std::move(p)});
      }
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }
}

}  // namespace

void backward(const Var& root) {
  if (root->value.numel() != 1)
    throw ShapeError("backward() root must be scalar, got " + root->value.shape_str());
  std::unordered_set<Node*> seen;
  std::vector<Var> order;
  topo_visit(root, seen, order);
  root->accumulate(Tensor::scalar(1.f));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node& n = **it;
    if (n.requires_grad && n.has_grad && n.backward_fn) n.backward_fn(n);
  }
}

void zero_grad(const std::vector<Var>& params) {
  for (const auto& p : params) {
    p->has_grad = false;
    if (!p->grad.empty()) p->grad.zero();
  }
}

// ---------------------------------------------------------------------------
// elementwise / scalar
// ---------------------------------------------------------------------------

Var add(const Var& a, const Var& b) {
  if (!a->value.same_shape(b->value))
    throw ShapeError("add: shape mismatch " + a->value.shape_str() + " vs " + b->value.shape_str());
  Tensor out = a->value;
  const float* bd = b->value.data();
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] += bd[i];
  Var av = a, bv = b;
  return make_op("add", std::move(out), {a, b}, [av, bv](Node& n) {
    if (av->requires_grad) av->accumulate(n.grad);
    if (bv->requires_grad) bv->accumulate(n.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  if (!a->value.same_shape(b->value))
    throw ShapeError("sub: shape mismatch " + a->value.shape_str() + " vs " + b->value.shape_str());
  Tensor out = a->value;
  const float* bd = b->value.data();
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] -= bd[i];
  Var av = a, bv = b;
  return make_op("sub", std::move(out), {a, b}, [av, bv](Node& n) {
    if (av->requires_grad) av->accumulate(n.grad);
    if (bv->requires_grad) {
      Tensor neg = n.grad;
      for (std::int64_t i = 0; i < neg.numel(); ++i) neg[i] = -neg[i];
      bv->accumulate(neg);
    }
  });
}

Var add_const(const Var& a, float c) {
  Tensor out = a->value;
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] += c;
  Var av = a;
  return make_op("add_const", std::move(out), {a}, [av](Node& n) { av->accumulate(n.grad); });
}

Var scale(const Var& a, float c) {
  Tensor out = a->value;
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] *= c;
  Var av = a;
  return make_op("scale", std::move(out), {a}, [av, c](Node& n) {
    Tensor g = n.grad;
    for (std::int64_t i = 0; i < g.numel(); ++i) g[i] *= c;
    av->accumulate(g);
  });
}

Var relu(const Var& x) {
  Tensor out = x->value;
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = out[i] > 0.f ? out[i] : 0.f;
  Var xv = x;
  return make_op("relu", std::move(out), {x}, [xv](Node& n) {
    Tensor g = n.grad;
    const float* in = xv->value.data();
    for (std::int64_t i = 0; i < g.numel(); ++i)
      if (in[i] <= 0.f) g[i] = 0.f;
    xv->accumulate(g);
  });
}

Var sigmoid(const Var& x) {
  Tensor out = x->value;
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = 1.f / (1.f + std::exp(-out[i]));
  Var xv = x;
  Tensor saved = out;
  return make_op("sigmoid", std::move(out), {x}, [xv, saved](Node& n) {
    Tensor g = n.grad;
    const float* y = saved.data();
    for (std::int64_t i = 0; i < g.numel(); ++i) g[i] *= y[i] * (1.f - y[i]);
    xv->accumulate(g);
  });
}

Var mean_all(const Var& x) {
  const std::int64_t n = x->value.numel();
  double s = 0.0;
  for (std::int64_t i = 0; i < n; ++i) s += x->value[i];
  Var xv = x;
  return make_op("mean_all", Tensor::scalar(static_cast<float>(s / static_cast<double>(n))), {x},
                 [xv, n](Node& nd) {
                   const float g = nd.grad[0] / static_cast<float>(n);
                   Tensor dx(xv->value.shape(), g);
                   xv->accumulate(dx);
                 });
}

Var weighted_sum(const std::vector<Var>& terms, const std::vector<float>& weights) {
  if (terms.size() != weights.size())
    throw ShapeError("weighted_sum: " + std::to_string(terms.size()) + " terms vs " +
                     std::to_string(weights.size()) + " weights");
  double s = 0.0;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (terms[i]->value.numel() != 1)
      throw ShapeError("weighted_sum: term " + std::to_string(i) + " is not scalar");
    s += static_cast<double>(weights[i]) * terms[i]->value[0];
  }
  std::vector<Var> parents = terms;
  std::vector<float> ws = weights;
  return make_op("weighted_sum", Tensor::scalar(static_cast<float>(s)), std::move(parents),
                 [terms, ws](Node& n) {
                   for (std::size_t i = 0; i < terms.size(); ++i)
                     if (terms[i]->requires_grad)
                       terms[i]->accumulate(Tensor::scalar(n.grad[0] * ws[i]));
                 });
}

// ---------------------------------------------------------------------------
// conv stack
// ---------------------------------------------------------------------------

namespace {

// Gathers k x k patches of img (C,H,W planes at `img`) into cols
// (C*k*k x grid_h*grid_w), reading img at (gy*stride - pad + ky, ...).
// Out-of-bounds reads produce zeros. Shared by conv forward and the
// transposed-conv backward.
void gather_cols(const float* img, int c, int h, int w, int k, int stride, int pad, int grid_h,
                 int grid_w, float* cols) {
  const int p = grid_h * grid_w;
  for (int ci = 0; ci < c; ++ci) {
    const float* plane = img + static_cast<std::int64_t>(ci) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        float* row = cols + (static_cast<std::int64_t>(ci) * k * k + ky * k + kx) * p;
        for (int gy = 0; gy < grid_h; ++gy) {
          const int iy = gy * stride - pad + ky;
          float* out = row + static_cast<std::int64_t>(gy) * grid_w;
          if (iy < 0 || iy >= h) {
            std::memset(out, 0, sizeof(float) * static_cast<std::size_t>(grid_w));
            continue;
          }
          const float* src = plane + static_cast<std::int64_t>(iy) * w;
          for (int gx = 0; gx < grid_w; ++gx) {
            const int ix = gx * stride - pad + kx;
            out[gx] = (ix >= 0 && ix < w) ? src[ix] : 0.f;
          }
        }
      }
    }
  }
}

// Inverse of gather_cols: scatter-adds cols back into img planes.
void scatter_cols(const float* cols, int c, int h, int w, int k, int stride, int pad, int grid_h,
                  int grid_w, float* img) {
  const int p = grid_h * grid_w;
  for (int ci = 0; ci < c; ++ci) {
    float* plane = img + static_cast<std::int64_t>(ci) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const float* row = cols + (static_cast<std::int64_t>(ci) * k * k + ky * k + kx) * p;
        for (int gy = 0; gy < grid_h; ++gy) {
          const int iy = gy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          float* dst = plane + static_cast<std::int64_t>(iy) * w;
          const float* src = row + static_cast<std::int64_t>(gy) * grid_w;
          for (int gx = 0; gx < grid_w; ++gx) {
            const int ix = gx * stride - pad + kx;
            if (ix >= 0 && ix < w) dst[ix] += src[gx];
          }
        }
      }
    }
  }
}

struct ConvDims {
  int b, ci, h, w, co, k, ho, wo;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad) {
  if (x.ndim() != 4) throw ShapeError("conv2d: input must be 4-d, got " + x.shape_str());
  if (w.ndim() != 4) throw ShapeError("conv2d: weight must be 4-d, got " + w.shape_str());
  ConvDims d;
  d.b = x.dim(0);
  d.ci = x.dim(1);
  d.h = x.dim(2);
  d.w = x.dim(3);
  d.co = w.dim(0);
  d.k = w.dim(2);
  if (w.dim(1) != d.ci)
    throw ShapeError("conv2d: weight expects " + std::to_string(w.dim(1)) + " input channels, input has " +
                     std::to_string(d.ci));
  if (w.dim(3) != d.k) throw ShapeError("conv2d: non-square kernel " + w.shape_str());
  if (bias.numel() != d.co)
    throw ShapeError("conv2d: bias size " + std::to_string(bias.numel()) + " vs out channels " +
                     std::to_string(d.co));
  d.ho = (d.h + 2 * pad - d.k) / stride + 1;
  d.wo = (d.w + 2 * pad - d.k) / stride + 1;
  return d;
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
  const ConvDims d = conv_dims(x->value, w->value, b->value, stride, pad);
  const int kk = d.ci * d.k * d.k;
  const int p = d.ho * d.wo;
  Tensor out({d.b, d.co, d.ho, d.wo});

  const int nt = std::min(worker_threads(), d.b);
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
  for (int bi = 0; bi < d.b; ++bi) {
    std::vector<float> cols(static_cast<std::size_t>(kk) * p);
    gather_cols(x->value.data() + static_cast<std::int64_t>(bi) * d.ci * d.h * d.w, d.ci, d.h, d.w,
                d.k, stride, pad, d.ho, d.wo, cols.data());
    MapConst wm(w->value.data(), d.co, kk);
    MapConst cm(cols.data(), kk, p);
    MapMat om(out.data() + static_cast<std::int64_t>(bi) * d.co * p, d.co, p);
    om.noalias() = wm * cm;
    for (int co = 0; co < d.co; ++co) om.row(co).array() += b->value[co];
  }

  Var xv = x, wv = w, bv = b;
  return make_op("conv2d", std::move(out), {x, w, b}, [xv, wv, bv, d, stride, pad](Node& n) {
    const int kk = d.ci * d.k * d.k;
    const int p = d.ho * d.wo;
    const int nt = std::min(worker_threads(), d.b);
    Tensor dx;
    if (xv->requires_grad) dx = Tensor(xv->value.shape());
    std::vector<Tensor> dw_part, db_part;
    if (wv->requires_grad)
      for (int t = 0; t < nt; ++t) dw_part.emplace_back(wv->value.shape());
    if (bv->requires_grad)
      for (int t = 0; t < nt; ++t) db_part.emplace_back(bv->value.shape());

#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
    for (int bi = 0; bi < d.b; ++bi) {
#ifdef _OPENMP
      const int tid = nt > 1 ? omp_get_thread_num() : 0;
#else
      const int tid = 0;
#endif
      MapConst gm(n.grad.data() + static_cast<std::int64_t>(bi) * d.co * p, d.co, p);
      MapConst wm(wv->value.data(), d.co, kk);
      if (xv->requires_grad) {
        std::vector<float> dcols(static_cast<std::size_t>(kk) * p);
        MapMat dcm(dcols.data(), kk, p);
        dcm.noalias() = wm.transpose() * gm;
        scatter_cols(dcols.data(), d.ci, d.h, d.w, d.k, stride, pad, d.ho, d.wo,
                     dx.data() + static_cast<std::int64_t>(bi) * d.ci * d.h * d.w);
      }
      if (wv->requires_grad) {
        std::vector<float> cols(static_cast<std::size_t>(kk) * p);
        gather_cols(xv->value.data() + static_cast<std::int64_t>(bi) * d.ci * d.h * d.w, d.ci, d.h,
                    d.w, d.k, stride, pad, d.ho, d.wo, cols.data());
        MapConst cm(cols.data(), kk, p);
        MapMat dwm(dw_part[static_cast<std::size_t>(tid)].data(), d.co, kk);
        dwm.noalias() += gm * cm.transpose();
      }
      if (bv->requires_grad) {
        Tensor& db = db_part[static_cast<std::size_t>(tid)];
        for (int co = 0; co < d.co; ++co) db[co] += gm.row(co).sum();
      }
    }

    if (xv->requires_grad) xv->accumulate(dx);
    if (wv->requires_grad) {
      for (int t = 1; t < nt; ++t)
        for (std::int64_t i = 0; i < dw_part[0].numel(); ++i)
          dw_part[0][i] += dw_part[static_cast<std::size_t>(t)][i];
      wv->accumulate(dw_part[0]);
    }
    if (bv->requires_grad) {
      for (int t = 1; t < nt; ++t)
        for (std::int64_t i = 0; i < db_part[0].numel(); ++i)
          db_part[0][i] += db_part[static_cast<std::size_t>(t)][i];
      bv->accumulate(db_part[0]);
    }
  });
}

Var conv_transpose2d(const Var& x, const Var& w, const Var& b, int stride, int pad, int out_pad) {
  const Tensor& xv_ = x->value;
  const Tensor& wv_ = w->value;
  if (xv_.ndim() != 4 || wv_.ndim() != 4)
    throw ShapeError("conv_transpose2d: need 4-d input and weight");
  const int bn = xv_.dim(0), ci = xv_.dim(1), hs = xv_.dim(2), ws = xv_.dim(3);
  const int co = wv_.dim(1), k = wv_.dim(2);
  if (wv_.dim(0) != ci)
    throw ShapeError("conv_transpose2d: weight expects " + std::to_string(wv_.dim(0)) +
                     " input channels, input has " + std::to_string(ci));
  if (b->value.numel() != co)
    throw ShapeError("conv_transpose2d: bias size mismatch");
  const int ho = (hs - 1) * stride - 2 * pad + k + out_pad;
  const int wo = (ws - 1) * stride - 2 * pad + k + out_pad;
  const int kk = co * k * k;
  const int ps = hs * ws;

  Tensor out({bn, co, ho, wo});
  const int nt = std::min(worker_threads(), bn);
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
  for (int bi = 0; bi < bn; ++bi) {
    std::vector<float> cols(static_cast<std::size_t>(kk) * ps);
    MapConst wm(w->value.data(), ci, kk);
    MapConst xm(x->value.data() + static_cast<std::int64_t>(bi) * ci * ps, ci, ps);
    MapMat cm(cols.data(), kk, ps);
    cm.noalias() = wm.transpose() * xm;
    float* ob = out.data() + static_cast<std::int64_t>(bi) * co * ho * wo;
    scatter_cols(cols.data(), co, ho, wo, k, stride, pad, hs, ws, ob);
    for (int c = 0; c < co; ++c) {
      float* plane = ob + static_cast<std::int64_t>(c) * ho * wo;
      for (int i = 0; i < ho * wo; ++i) plane[i] += b->value[c];
    }
  }

  Var xv = x, wv = w, bv = b;
  return make_op(
      "conv_transpose2d", std::move(out), {x, w, b},
      [xv, wv, bv, bn, ci, hs, ws, co, k, ho, wo, stride, pad](Node& n) {
        const int kk = co * k * k;
        const int ps = hs * ws;
        const int nt = std::min(worker_threads(), bn);
        Tensor dx;
        if (xv->requires_grad) dx = Tensor(xv->value.shape());
        std::vector<Tensor> dw_part, db_part;
        if (wv->requires_grad)
          for (int t = 0; t < nt; ++t) dw_part.emplace_back(wv->value.shape());
        if (bv->requires_grad)
          for (int t = 0; t < nt; ++t) db_part.emplace_back(bv->value.shape());

#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
        for (int bi = 0; bi < bn; ++bi) {
#ifdef _OPENMP
          const int tid = nt > 1 ? omp_get_thread_num() : 0;
#else
          const int tid = 0;
#endif
          std::vector<float> gcols(static_cast<std::size_t>(kk) * ps);
          gather_cols(n.grad.data() + static_cast<std::int64_t>(bi) * co * ho * wo, co, ho, wo, k,
                      stride, pad, hs, ws, gcols.data());
          MapConst gcm(gcols.data(), kk, ps);
          if (xv->requires_grad) {
            MapConst wm(wv->value.data(), ci, kk);
            MapMat dxm(dx.data() + static_cast<std::int64_t>(bi) * ci * ps, ci, ps);
            dxm.noalias() = wm * gcm;
          }
          if (wv->requires_grad) {
            MapConst xm(xv->value.data() + static_cast<std::int64_t>(bi) * ci * ps, ci, ps);
            MapMat dwm(dw_part[static_cast<std::size_t>(tid)].data(), ci, kk);
            dwm.noalias() += xm * gcm.transpose();
          }
          if (bv->requires_grad) {
            Tensor& db = db_part[static_cast<std::size_t>(tid)];
            const float* gb = n.grad.data() + static_cast<std::int64_t>(bi) * co * ho * wo;
            for (int c = 0; c < co; ++c) {
              const float* plane = gb + static_cast<std::int64_t>(c) * ho * wo;
              float s = 0.f;
              for (int i = 0; i < ho * wo; ++i) s += plane[i];
              db[c] += s;
            }
          }
        }

        if (xv->requires_grad) xv->accumulate(dx);
        if (wv->requires_grad) {
          for (int t = 1; t < nt; ++t)
            for (std::int64_t i = 0; i < dw_part[0].numel(); ++i)
              dw_part[0][i] += dw_part[static_cast<std::size_t>(t)][i];
          wv->accumulate(dw_part[0]);
        }
        if (bv->requires_grad) {
          for (int t = 1; t < nt; ++t)
            for (std::int64_t i = 0; i < db_part[0].numel(); ++i)
              db_part[0][i] += db_part[static_cast<std::size_t>(t)][i];
          bv->accumulate(db_part[0]);
        }
      });
}

Var max_pool2(const Var& x) {
  const Tensor& v = x->value;
  if (v.ndim() != 4) throw ShapeError("max_pool2: need 4-d input, got " + v.shape_str());
  const int b = v.dim(0), c = v.dim(1), h = v.dim(2), w = v.dim(3);
  if (h % 2 || w % 2)
    throw ShapeError("max_pool2: spatial dims must be even, got " + v.shape_str());
  const int ho = h / 2, wo = w / 2;
  Tensor out({b, c, ho, wo});
  auto argmax = std::make_shared<std::vector<std::int64_t>>(out.numel());
  std::int64_t oi = 0;
  for (int bi = 0; bi < b; ++bi)
    for (int ci = 0; ci < c; ++ci) {
      const float* plane = v.data() + (static_cast<std::int64_t>(bi) * c + ci) * h * w;
      const std::int64_t base = (static_cast<std::int64_t>(bi) * c + ci) * h * w;
      for (int y = 0; y < ho; ++y)
        for (int xo = 0; xo < wo; ++xo, ++oi) {
          const int iy = 2 * y, ix = 2 * xo;
          float best = plane[iy * w + ix];
          std::int64_t bidx = base + iy * w + ix;
          const int dy[3] = {0, 1, 1};
          const int dx[3] = {1, 0, 1};
          for (int t = 0; t < 3; ++t) {
            const float cand = plane[(iy + dy[t]) * w + ix + dx[t]];
            if (cand > best) {
              best = cand;
              bidx = base + (iy + dy[t]) * w + ix + dx[t];
            }
          }
          out[oi] = best;
          (*argmax)[static_cast<std::size_t>(oi)] = bidx;
        }
    }
  Var xv = x;
  return make_op("max_pool2", std::move(out), {x}, [xv, argmax](Node& n) {
    Tensor dx(xv->value.shape());
    for (std::int64_t i = 0; i < n.grad.numel(); ++i)
      dx[(*argmax)[static_cast<std::size_t>(i)]] += n.grad[i];
    xv->accumulate(dx);
  });
}

Var concat_channels(const Var& a, const Var& b) {
  const Tensor& av_ = a->value;
  const Tensor& bv_ = b->value;
  if (av_.ndim() != 4 || bv_.ndim() != 4 || av_.dim(0) != bv_.dim(0) || av_.dim(2) != bv_.dim(2) ||
      av_.dim(3) != bv_.dim(3))
    throw ShapeError("concat_channels: incompatible shapes " + av_.shape_str() + " vs " +
                     bv_.shape_str());
  const int bn = av_.dim(0), ca = av_.dim(1), cb = bv_.dim(1), h = av_.dim(2), w = av_.dim(3);
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  Tensor out({bn, ca + cb, h, w});
  for (int bi = 0; bi < bn; ++bi) {
    std::memcpy(out.data() + (static_cast<std::int64_t>(bi) * (ca + cb)) * plane,
                av_.data() + static_cast<std::int64_t>(bi) * ca * plane,
                sizeof(float) * static_cast<std::size_t>(ca * plane));
    std::memcpy(out.data() + (static_cast<std::int64_t>(bi) * (ca + cb) + ca) * plane,
                bv_.data() + static_cast<std::int64_t>(bi) * cb * plane,
                sizeof(float) * static_cast<std::size_t>(cb * plane));
  }
  Var av = a, bv = b;
  return make_op("concat_channels", std::move(out), {a, b}, [av, bv, bn, ca, cb, plane](Node& n) {
    if (av->requires_grad) {
      Tensor da(av->value.shape());
      for (int bi = 0; bi < bn; ++bi)
        std::memcpy(da.data() + static_cast<std::int64_t>(bi) * ca * plane,
                    n.grad.data() + (static_cast<std::int64_t>(bi) * (ca + cb)) * plane,
                    sizeof(float) * static_cast<std::size_t>(ca * plane));
      av->accumulate(da);
    }
    if (bv->requires_grad) {
      Tensor db(bv->value.shape());
      for (int bi = 0; bi < bn; ++bi)
        std::memcpy(db.data() + static_cast<std::int64_t>(bi) * cb * plane,
                    n.grad.data() + (static_cast<std::int64_t>(bi) * (ca + cb) + ca) * plane,
                    sizeof(float) * static_cast<std::size_t>(cb * plane));
      bv->accumulate(db);
    }
  });
}

Var batch_norm2d(const Var& x, const Var& gamma, const Var& beta, Tensor& run_mean,
                 Tensor& run_var, bool training, float momentum, float eps) {
  const Tensor& v = x->value;
  if (v.ndim() != 4) throw ShapeError("batch_norm2d: need 4-d input, got " + v.shape_str());
  const int b = v.dim(0), c = v.dim(1), h = v.dim(2), w = v.dim(3);
  if (gamma->value.numel() != c || beta->value.numel() != c || run_mean.numel() != c ||
      run_var.numel() != c)
    throw ShapeError("batch_norm2d: parameter size mismatch for " + std::to_string(c) +
                     " channels");
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  const std::int64_t m = static_cast<std::int64_t>(b) * plane;

  auto mean = std::make_shared<Tensor>(std::vector<int>{c});
  auto inv_std = std::make_shared<Tensor>(std::vector<int>{c});
  if (training) {
    for (int ci = 0; ci < c; ++ci) {
      double s = 0.0;
      for (int bi = 0; bi < b; ++bi) {
        const float* p = v.data() + ((static_cast<std::int64_t>(bi) * c + ci)) * plane;
        for (std::int64_t i = 0; i < plane; ++i) s += p[i];
      }
      const double mu = s / static_cast<double>(m);
      double var = 0.0;
      for (int bi = 0; bi < b; ++bi) {
        const float* p = v.data() + ((static_cast<std::int64_t>(bi) * c + ci)) * plane;
        for (std::int64_t i = 0; i < plane; ++i) {
          const double d = p[i] - mu;
          var += d * d;
        }
      }
      var /= static_cast<double>(m);
      (*mean)[ci] = static_cast<float>(mu);
      (*inv_std)[ci] = static_cast<float>(1.0 / std::sqrt(var + eps));
      run_mean[ci] = (1.f - momentum) * run_mean[ci] + momentum * static_cast<float>(mu);
      run_var[ci] = (1.f - momentum) * run_var[ci] + momentum * static_cast<float>(var);
    }
  } else {
    for (int ci = 0; ci < c; ++ci) {
      (*mean)[ci] = run_mean[ci];
      (*inv_std)[ci] = 1.f / std::sqrt(run_var[ci] + eps);
    }
  }

  Tensor out(v.shape());
  for (int bi = 0; bi < b; ++bi)
    for (int ci = 0; ci < c; ++ci) {
      const float* p = v.data() + ((static_cast<std::int64_t>(bi) * c + ci)) * plane;
      float* o = out.data() + ((static_cast<std::int64_t>(bi) * c + ci)) * plane;
      const float mu = (*mean)[ci], is = (*inv_std)[ci];
      const float g = gamma->value[ci], bt = beta->value[ci];
      for (std::int64_t i = 0; i < plane; ++i) o[i] = g * (p[i] - mu) * is + bt;
    }

  Var xv = x, gv = gamma, bv = beta;
  return make_op(
      "batch_norm2d", std::move(out), {x, gamma, beta},
      [xv, gv, bv, mean, inv_std, b, c, plane, m, training](Node& n) {
        // xhat recomputed from the saved input; per-channel reductions first.
        Tensor dgamma({c}), dbeta({c});
        for (int ci = 0; ci < c; ++ci) {
          double sg = 0.0, sgx = 0.0;
          const float mu = (*mean)[ci], is = (*inv_std)[ci];
          for (int bi = 0; bi < b; ++bi) {
            const float* g = n.grad.data() + ((static_cast<std::int64_t>(bi) * c + ci)) * plane;
            const float* p = xv->value.data() + ((static_cast<std::int64_t>(bi) * c + ci)) * plane;
            for (std::int64_t i = 0; i < plane; ++i) {
              sg += g[i];
              sgx += g[i] * (p[i] - mu) * is;
            }
          }
          dbeta[ci] = static_cast<float>(sg);
          dgamma[ci] = static_cast<float>(sgx);
        }
        if (gv->requires_grad) gv->accumulate(dgamma);
        if (bv->requires_grad) bv->accumulate(dbeta);
        if (xv->requires_grad) {
          Tensor dx(xv->value.shape());
          for (int ci = 0; ci < c; ++ci) {
            const float mu = (*mean)[ci], is = (*inv_std)[ci];
            const float g = gv->value[ci];
            const float mean_dg = dbeta[ci] / static_cast<float>(m);
            const float mean_dgx = dgamma[ci] / static_cast<float>(m);
            for (int bi = 0; bi < b; ++bi) {
              const float* gr = n.grad.data() + ((static_cast<std::int64_t>(bi) * c + ci)) * plane;
              const float* p = xv->value.data() + ((static_cast<std::int64_t>(bi) * c + ci)) * plane;
              float* d = dx.data() + ((static_cast<std::int64_t>(bi) * c + ci)) * plane;
              if (training) {
                for (std::int64_t i = 0; i < plane; ++i) {
                  const float xhat = (p[i] - mu) * is;
                  d[i] = g * is * (gr[i] - mean_dg - xhat * mean_dgx);
                }
              } else {
                for (std::int64_t i = 0; i < plane; ++i) d[i] = g * is * gr[i];
              }
            }
          }
          xv->accumulate(dx);
        }
      });
}

// ---------------------------------------------------------------------------
// attention / feature ops
// ---------------------------------------------------------------------------

Var flatten_rows(const Var& x) {
  const Tensor& v = x->value;
  if (v.ndim() < 2) throw ShapeError("flatten_rows: need >= 2-d input");
  const int b = v.dim(0);
  const int dd = static_cast<int>(v.numel() / b);
  Tensor out = v.reshaped({b, dd});
  Var xv = x;
  return make_op("flatten_rows", std::move(out), {x}, [xv](Node& n) {
    xv->accumulate(n.grad.data(), n.grad.numel());
  });
}

Var cosine_rows(const Var& q, const Var& m) {
  const Tensor& qv_ = q->value;
  const Tensor& mv_ = m->value;
  if (qv_.ndim() != 2 || mv_.ndim() != 2 || qv_.dim(1) != mv_.dim(1))
    throw ShapeError("cosine_rows: incompatible shapes " + qv_.shape_str() + " vs " +
                     mv_.shape_str());
  const int b = qv_.dim(0), n_items = mv_.dim(0), dd = qv_.dim(1);

  auto qn = std::make_shared<std::vector<float>>(static_cast<std::size_t>(b));
  auto mn = std::make_shared<std::vector<float>>(static_cast<std::size_t>(n_items));
  MapConst qm(qv_.data(), b, dd);
  MapConst mm(mv_.data(), n_items, dd);
  for (int i = 0; i < b; ++i) (*qn)[static_cast<std::size_t>(i)] = qm.row(i).norm();
  for (int j = 0; j < n_items; ++j) {
    const float nj = mm.row(j).norm();
    if (nj == 0.f)
      throw NumericError("cosine_rows: memory item " + std::to_string(j) +
                         " is the zero vector (cosine undefined)");
    (*mn)[static_cast<std::size_t>(j)] = nj;
  }

  Tensor out({b, n_items});
  MapMat om(out.data(), b, n_items);
  om.noalias() = qm * mm.transpose();
  for (int i = 0; i < b; ++i) {
    const float ni = (*qn)[static_cast<std::size_t>(i)];
    if (ni == 0.f) {
      om.row(i).setZero();  // degenerate query: cosine defined as 0
      continue;
    }
    for (int j = 0; j < n_items; ++j) om(i, j) /= ni * (*mn)[static_cast<std::size_t>(j)];
  }

  Var qvar = q, mvar = m;
  Tensor cos_saved = out;
  return make_op(
      "cosine_rows", std::move(out), {q, m},
      [qvar, mvar, qn, mn, cos_saved, b, n_items, dd](Node& nd) {
        MapConst qm(qvar->value.data(), b, dd);
        MapConst mm(mvar->value.data(), n_items, dd);
        MapConst cm(cos_saved.data(), b, n_items);
        MapConst gm(nd.grad.data(), b, n_items);

        // Scaled gradient with degenerate (zero-norm) query rows masked out.
        RowMat gq(b, n_items);  // g_ij / (|q_i| |m_j|)
        Eigen::VectorXf rowdot(b);  // sum_j g_ij cos_ij
        for (int i = 0; i < b; ++i) {
          const float ni = (*qn)[static_cast<std::size_t>(i)];
          if (ni == 0.f) {
            gq.row(i).setZero();
            rowdot(i) = 0.f;
            continue;
          }
          rowdot(i) = gm.row(i).cwiseProduct(cm.row(i)).sum();
          for (int j = 0; j < n_items; ++j)
            gq(i, j) = gm(i, j) / (ni * (*mn)[static_cast<std::size_t>(j)]);
        }

        if (qvar->requires_grad) {
          RowMat dq(b, dd);
          dq.noalias() = gq * mm;
          for (int i = 0; i < b; ++i) {
            const float ni = (*qn)[static_cast<std::size_t>(i)];
            if (ni == 0.f) {
              dq.row(i).setZero();
              continue;
            }
            dq.row(i) -= (rowdot(i) / (ni * ni)) * qm.row(i);
          }
          qvar->accumulate(dq.data(), dq.size());
        }
        if (mvar->requires_grad) {
          RowMat dm(n_items, dd);
          dm.noalias() = gq.transpose() * qm;
          // Column reductions of g .* cos give the per-item correction.
          for (int j = 0; j < n_items; ++j) {
            float coldot = 0.f;
            for (int i = 0; i < b; ++i) {
              if ((*qn)[static_cast<std::size_t>(i)] == 0.f) continue;
              coldot += gm(i, j) * cm(i, j);
            }
            const float nj = (*mn)[static_cast<std::size_t>(j)];
            dm.row(j) -= (coldot / (nj * nj)) * mm.row(j);
          }
          mvar->accumulate(dm.data(), dm.size());
        }
      });
}

Var softmax_rows(const Var& x) {
  const Tensor& v = x->value;
  if (v.ndim() != 2) throw ShapeError("softmax_rows: need 2-d input, got " + v.shape_str());
  const int b = v.dim(0), n_items = v.dim(1);
  Tensor out(v.shape());
  for (int i = 0; i < b; ++i) {
    const float* row = v.data() + static_cast<std::int64_t>(i) * n_items;
    float* o = out.data() + static_cast<std::int64_t>(i) * n_items;
    float mx = row[0];
    for (int j = 1; j < n_items; ++j) mx = std::max(mx, row[j]);
    double s = 0.0;
    for (int j = 0; j < n_items; ++j) {
      o[j] = std::exp(row[j] - mx);
      s += o[j];
    }
    const float inv = static_cast<float>(1.0 / s);
    for (int j = 0; j < n_items; ++j) o[j] *= inv;
  }
  Var xv = x;
  Tensor y = out;
  return make_op("softmax_rows", std::move(out), {x}, [xv, y, b, n_items](Node& nd) {
    Tensor dx(xv->value.shape());
    for (int i = 0; i < b; ++i) {
      const float* yr = y.data() + static_cast<std::int64_t>(i) * n_items;
      const float* gr = nd.grad.data() + static_cast<std::int64_t>(i) * n_items;
      float* dr = dx.data() + static_cast<std::int64_t>(i) * n_items;
      double dot = 0.0;
      for (int j = 0; j < n_items; ++j) dot += static_cast<double>(gr[j]) * yr[j];
      for (int j = 0; j < n_items; ++j) dr[j] = yr[j] * (gr[j] - static_cast<float>(dot));
    }
    xv->accumulate(dx);
  });
}

Var row_max(const Var& x) {
  const Tensor& v = x->value;
  if (v.ndim() != 2) throw ShapeError("row_max: need 2-d input, got " + v.shape_str());
  const int b = v.dim(0), n_items = v.dim(1);
  Tensor out({b});
  auto arg = std::make_shared<std::vector<int>>(static_cast<std::size_t>(b));
  for (int i = 0; i < b; ++i) {
    const float* row = v.data() + static_cast<std::int64_t>(i) * n_items;
    int best = 0;
    for (int j = 1; j < n_items; ++j)
      if (row[j] > row[best]) best = j;
    out[i] = row[best];
    (*arg)[static_cast<std::size_t>(i)] = best;
  }
  Var xv = x;
  return make_op("row_max", std::move(out), {x}, [xv, arg, n_items](Node& nd) {
    Tensor dx(xv->value.shape());
    for (std::int64_t i = 0; i < nd.grad.numel(); ++i)
      dx[i * n_items + (*arg)[static_cast<std::size_t>(i)]] = nd.grad[i];
    xv->accumulate(dx);
  });
}

Var scale_rows(const Var& x, const Var& s) {
  const Tensor& v = x->value;
  const int b = v.dim(0);
  if (s->value.numel() != b)
    throw ShapeError("scale_rows: scale count " + std::to_string(s->value.numel()) +
                     " vs batch " + std::to_string(b));
  const std::int64_t per = v.numel() / b;
  Tensor out = v;
  for (int bi = 0; bi < b; ++bi) {
    float* o = out.data() + bi * per;
    const float sc = s->value[bi];
    for (std::int64_t i = 0; i < per; ++i) o[i] *= sc;
  }
  Var xv = x, sv = s;
  return make_op("scale_rows", std::move(out), {x, s}, [xv, sv, b, per](Node& nd) {
    if (xv->requires_grad) {
      Tensor dx(xv->value.shape());
      for (int bi = 0; bi < b; ++bi) {
        const float sc = sv->value[bi];
        const float* g = nd.grad.data() + bi * per;
        float* d = dx.data() + bi * per;
        for (std::int64_t i = 0; i < per; ++i) d[i] = g[i] * sc;
      }
      xv->accumulate(dx);
    }
    if (sv->requires_grad) {
      Tensor ds(sv->value.shape());
      for (int bi = 0; bi < b; ++bi) {
        const float* g = nd.grad.data() + bi * per;
        const float* xp = xv->value.data() + bi * per;
        double acc = 0.0;
        for (std::int64_t i = 0; i < per; ++i) acc += static_cast<double>(g[i]) * xp[i];
        ds[bi] = static_cast<float>(acc);
      }
      sv->accumulate(ds);
    }
  });
}

Var cosine_pairwise(const Var& a, const Var& b) {
  const Tensor& av_ = a->value;
  const Tensor& bv_ = b->value;
  if (!av_.same_shape(bv_) || av_.ndim() != 2)
    throw ShapeError("cosine_pairwise: need matching 2-d shapes, got " + av_.shape_str() + " vs " +
                     bv_.shape_str());
  const int bn = av_.dim(0), dd = av_.dim(1);
  Tensor out({bn});
  auto an = std::make_shared<std::vector<float>>(static_cast<std::size_t>(bn));
  auto bnrm = std::make_shared<std::vector<float>>(static_cast<std::size_t>(bn));
  for (int i = 0; i < bn; ++i) {
    MapConst ar(av_.data() + static_cast<std::int64_t>(i) * dd, 1, dd);
    MapConst br(bv_.data() + static_cast<std::int64_t>(i) * dd, 1, dd);
    const float na = ar.norm(), nb = br.norm();
    (*an)[static_cast<std::size_t>(i)] = na;
    (*bnrm)[static_cast<std::size_t>(i)] = nb;
    out[i] = (na == 0.f || nb == 0.f) ? 0.f : ar.row(0).dot(br.row(0)) / (na * nb);
  }
  Var av = a, bv = b;
  Tensor cos_saved = out;
  return make_op("cosine_pairwise", std::move(out), {a, b},
                 [av, bv, an, bnrm, cos_saved, bn, dd](Node& nd) {
                   Tensor da, db;
                   if (av->requires_grad) da = Tensor(av->value.shape());
                   if (bv->requires_grad) db = Tensor(bv->value.shape());
                   for (int i = 0; i < bn; ++i) {
                     const float na = (*an)[static_cast<std::size_t>(i)];
                     const float nb = (*bnrm)[static_cast<std::size_t>(i)];
                     if (na == 0.f || nb == 0.f) continue;  // subgradient 0 at degenerate input
                     const float g = nd.grad[i];
                     const float cs = cos_saved[i];
                     const float* ap = av->value.data() + static_cast<std::int64_t>(i) * dd;
                     const float* bp = bv->value.data() + static_cast<std::int64_t>(i) * dd;
                     if (av->requires_grad) {
                       float* d = da.data() + static_cast<std::int64_t>(i) * dd;
                       for (int k = 0; k < dd; ++k)
                         d[k] = g * (bp[k] / (na * nb) - cs * ap[k] / (na * na));
                     }
                     if (bv->requires_grad) {
                       float* d = db.data() + static_cast<std::int64_t>(i) * dd;
                       for (int k = 0; k < dd; ++k)
                         d[k] = g * (ap[k] / (na * nb) - cs * bp[k] / (nb * nb));
                     }
                   }
                   if (av->requires_grad) av->accumulate(da);
                   if (bv->requires_grad) bv->accumulate(db);
                 });
}

Var gather_rows(const Var& m, std::vector<int> idx) {
  const Tensor& mv_ = m->value;
  if (mv_.ndim() != 2) throw ShapeError("gather_rows: need 2-d input, got " + mv_.shape_str());
  const int dd = mv_.dim(1);
  const int b = static_cast<int>(idx.size());
  Tensor out({b, dd});
  for (int i = 0; i < b; ++i) {
    if (idx[static_cast<std::size_t>(i)] < 0 || idx[static_cast<std::size_t>(i)] >= mv_.dim(0))
      throw ShapeError("gather_rows: index out of range");
    std::memcpy(out.data() + static_cast<std::int64_t>(i) * dd,
                mv_.data() + static_cast<std::int64_t>(idx[static_cast<std::size_t>(i)]) * dd,
                sizeof(float) * static_cast<std::size_t>(dd));
  }
  Var mv = m;
  auto ids = std::make_shared<std::vector<int>>(std::move(idx));
  return make_op("gather_rows", std::move(out), {m}, [mv, ids, dd](Node& nd) {
    Tensor dm(mv->value.shape());
    for (std::size_t i = 0; i < ids->size(); ++i) {
      const float* g = nd.grad.data() + static_cast<std::int64_t>(i) * dd;
      float* d = dm.data() + static_cast<std::int64_t>((*ids)[i]) * dd;
      for (int k = 0; k < dd; ++k) d[k] += g[k];
    }
    mv->accumulate(dm);
  });
}

Var rowdiff_sq(const Var& a, const Var& b) {
  const Tensor& av_ = a->value;
  const Tensor& bv_ = b->value;
  if (!av_.same_shape(bv_) || av_.ndim() != 2)
    throw ShapeError("rowdiff_sq: need matching 2-d shapes");
  const int bn = av_.dim(0), dd = av_.dim(1);
  Tensor out({bn});
  for (int i = 0; i < bn; ++i) {
    const float* ap = av_.data() + static_cast<std::int64_t>(i) * dd;
    const float* bp = bv_.data() + static_cast<std::int64_t>(i) * dd;
    double s = 0.0;
    for (int k = 0; k < dd; ++k) {
      const double d = static_cast<double>(ap[k]) - bp[k];
      s += d * d;
    }
    out[i] = static_cast<float>(s);
  }
  Var av = a, bv = b;
  return make_op("rowdiff_sq", std::move(out), {a, b}, [av, bv, bn, dd](Node& nd) {
    Tensor da, db;
    if (av->requires_grad) da = Tensor(av->value.shape());
    if (bv->requires_grad) db = Tensor(bv->value.shape());
    for (int i = 0; i < bn; ++i) {
      const float g = 2.f * nd.grad[i];
      const float* ap = av->value.data() + static_cast<std::int64_t>(i) * dd;
      const float* bp = bv->value.data() + static_cast<std::int64_t>(i) * dd;
      for (int k = 0; k < dd; ++k) {
        const float d = g * (ap[k] - bp[k]);
        if (av->requires_grad) da[static_cast<std::int64_t>(i) * dd + k] = d;
        if (bv->requires_grad) db[static_cast<std::int64_t>(i) * dd + k] = -d;
      }
    }
    if (av->requires_grad) av->accumulate(da);
    if (bv->requires_grad) bv->accumulate(db);
  });
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

Var mse_loss(const Var& pred, const Tensor& target) {
  if (!pred->value.same_shape(target))
    throw ShapeError("mse_loss: prediction " + pred->value.shape_str() + " vs target " +
                     target.shape_str());
  const std::int64_t n = target.numel();
  double s = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(pred->value[i]) - target[i];
    s += d * d;
  }
  Var pv = pred;
  auto tgt = std::make_shared<Tensor>(target);
  return make_op("mse_loss", Tensor::scalar(static_cast<float>(s / static_cast<double>(n))),
                 {pred}, [pv, tgt, n](Node& nd) {
                   const float g = nd.grad[0] * 2.f / static_cast<float>(n);
                   Tensor dx(pv->value.shape());
                   for (std::int64_t i = 0; i < n; ++i)
                     dx[i] = g * (pv->value[i] - (*tgt)[i]);
                   pv->accumulate(dx);
                 });
}

namespace {
inline float sgn(float x) { return x > 0.f ? 1.f : (x < 0.f ? -1.f : 0.f); }
}  // namespace

Var gradient_diff_loss(const Var& pred, const Tensor& target) {
  const Tensor& p = pred->value;
  if (!p.same_shape(target))
    throw ShapeError("gradient_diff_loss: prediction " + p.shape_str() + " vs target " +
                     target.shape_str());
  if (p.ndim() != 4) throw ShapeError("gradient_diff_loss: need 4-d tensors");
  const int b = p.dim(0), c = p.dim(1), h = p.dim(2), w = p.dim(3);
  const std::int64_t count =
      static_cast<std::int64_t>(b) * c * ((static_cast<std::int64_t>(h) - 1) * w + static_cast<std::int64_t>(h) * (w - 1));
  double s = 0.0;
  for (int bi = 0; bi < b; ++bi)
    for (int ci = 0; ci < c; ++ci) {
      const std::int64_t base = (static_cast<std::int64_t>(bi) * c + ci) * h * w;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const std::int64_t i = base + static_cast<std::int64_t>(y) * w + x;
          if (y > 0) {
            const float dp = p[i] - p[i - w];
            const float dt = target[i] - target[i - w];
            s += std::abs(std::abs(dp) - std::abs(dt));
          }
          if (x > 0) {
            const float dp = p[i] - p[i - 1];
            const float dt = target[i] - target[i - 1];
            s += std::abs(std::abs(dp) - std::abs(dt));
          }
        }
    }
  Var pv = pred;
  auto tgt = std::make_shared<Tensor>(target);
  return make_op(
      "gradient_diff_loss", Tensor::scalar(static_cast<float>(s / static_cast<double>(count))),
      {pred}, [pv, tgt, b, c, h, w, count](Node& nd) {
        const Tensor& p = pv->value;
        const Tensor& t = *tgt;
        const float g = nd.grad[0] / static_cast<float>(count);
        Tensor dx(p.shape());
        for (int bi = 0; bi < b; ++bi)
          for (int ci = 0; ci < c; ++ci) {
            const std::int64_t base = (static_cast<std::int64_t>(bi) * c + ci) * h * w;
            for (int y = 0; y < h; ++y)
              for (int x = 0; x < w; ++x) {
                const std::int64_t i = base + static_cast<std::int64_t>(y) * w + x;
                if (y > 0) {
                  const float dp = p[i] - p[i - w];
                  const float dt = t[i] - t[i - w];
                  const float d = g * sgn(std::abs(dp) - std::abs(dt)) * sgn(dp);
                  dx[i] += d;
                  dx[i - w] -= d;
                }
                if (x > 0) {
                  const float dp = p[i] - p[i - 1];
                  const float dt = t[i] - t[i - 1];
                  const float d = g * sgn(std::abs(dp) - std::abs(dt)) * sgn(dp);
                  dx[i] += d;
                  dx[i - 1] -= d;
                }
              }
          }
        pv->accumulate(dx);
      });
}

}  // namespace vad
