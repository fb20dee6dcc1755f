#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <utility>
#include <vector>

#include "rtsac/tensor.hpp"

namespace rtsac::nn {

// ---------------------------------------------------------------------------
// Shared kernels. Both the no-grad inference path and the recorded graph use
// these, so training and acting are numerically the same computation.

namespace kernels {

template <class S>
TensorT<S> conv2d_forward(const TensorT<S>& x, const TensorT<S>& k,
                          const TensorT<S>& bias, int stride) {
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int F = k.dim(0), KH = k.dim(2), KW = k.dim(3);
  if (k.dim(1) != C) throw std::invalid_argument("conv2d: channel mismatch");
  const int OH = (H - KH) / stride + 1;
  const int OW = (W - KW) / stride + 1;
  if (OH <= 0 || OW <= 0) throw std::invalid_argument("conv2d: kernel larger than input");
  TensorT<S> y({B, F, OH, OW});
  for (int b = 0; b < B; ++b)
    for (int f = 0; f < F; ++f)
      for (int oh = 0; oh < OH; ++oh)
        for (int ow = 0; ow < OW; ++ow) {
          S acc = bias[static_cast<std::size_t>(f)];
          const int h0 = oh * stride, w0 = ow * stride;
          for (int c = 0; c < C; ++c)
            for (int kh = 0; kh < KH; ++kh)
              for (int kw = 0; kw < KW; ++kw)
                acc += x.at4(b, c, h0 + kh, w0 + kw) * k.at4(f, c, kh, kw);
          y.at4(b, f, oh, ow) = acc;
        }
  return y;
}

template <class S>
void conv2d_backward(const TensorT<S>& x, const TensorT<S>& k, int stride,
                     const TensorT<S>& dy, TensorT<S>* dx, TensorT<S>* dk,
                     TensorT<S>* db) {
  const int B = x.dim(0), C = x.dim(1);
  const int F = k.dim(0), KH = k.dim(2), KW = k.dim(3);
  const int OH = dy.dim(2), OW = dy.dim(3);
  for (int b = 0; b < B; ++b)
    for (int f = 0; f < F; ++f)
      for (int oh = 0; oh < OH; ++oh)
        for (int ow = 0; ow < OW; ++ow) {
          const S g = dy.at4(b, f, oh, ow);
          if (db) (*db)[static_cast<std::size_t>(f)] += g;
          const int h0 = oh * stride, w0 = ow * stride;
          for (int c = 0; c < C; ++c)
            for (int kh = 0; kh < KH; ++kh)
              for (int kw = 0; kw < KW; ++kw) {
                if (dk) dk->at4(f, c, kh, kw) += g * x.at4(b, c, h0 + kh, w0 + kw);
                if (dx) dx->at4(b, c, h0 + kh, w0 + kw) += g * k.at4(f, c, kh, kw);
              }
        }
}

// x [B,I] * W [O,I] + b [O] -> [B,O]
template <class S>
TensorT<S> linear_forward(const TensorT<S>& x, const TensorT<S>& w,
                          const TensorT<S>& bias) {
  const int B = x.dim(0), I = x.dim(1), O = w.dim(0);
  if (w.dim(1) != I) throw std::invalid_argument("linear: fan-in mismatch");
  TensorT<S> y({B, O});
  for (int b = 0; b < B; ++b)
    for (int o = 0; o < O; ++o) {
      S acc = bias[static_cast<std::size_t>(o)];
      for (int i = 0; i < I; ++i) acc += x.at2(b, i) * w.at2(o, i);
      y.at2(b, o) = acc;
    }
  return y;
}

template <class S>
void linear_backward(const TensorT<S>& x, const TensorT<S>& w,
                     const TensorT<S>& dy, TensorT<S>* dx, TensorT<S>* dw,
                     TensorT<S>* db) {
  const int B = x.dim(0), I = x.dim(1), O = w.dim(0);
  for (int b = 0; b < B; ++b)
    for (int o = 0; o < O; ++o) {
      const S g = dy.at2(b, o);
      if (db) (*db)[static_cast<std::size_t>(o)] += g;
      for (int i = 0; i < I; ++i) {
        if (dw) dw->at2(o, i) += g * x.at2(b, i);
        if (dx) dx->at2(b, i) += g * w.at2(o, i);
      }
    }
}

// Softmax over each feature map, then expected pixel coordinates with both
// axes normalized to [-1, 1]. Output [B, 2C], layout (x_c, y_c) per map.
// Returns the per-pixel probabilities for the backward pass.
template <class S>
std::pair<TensorT<S>, TensorT<S>> spatial_softmax_forward(const TensorT<S>& x) {
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  TensorT<S> y({B, 2 * C});
  TensorT<S> p(x.shape);
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      S mx = x.at4(b, c, 0, 0);
      for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j) mx = std::max(mx, x.at4(b, c, i, j));
      S z = 0;
      for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j) {
          const S e = std::exp(x.at4(b, c, i, j) - mx);
          p.at4(b, c, i, j) = e;
          z += e;
        }
      S cx = 0, cy = 0;
      for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j) {
          const S q = p.at4(b, c, i, j) / z;
          p.at4(b, c, i, j) = q;
          const S xj = W > 1 ? S(-1) + S(2) * j / S(W - 1) : S(0);
          const S yi = H > 1 ? S(-1) + S(2) * i / S(H - 1) : S(0);
          cx += q * xj;
          cy += q * yi;
        }
      y.at2(b, 2 * c) = cx;
      y.at2(b, 2 * c + 1) = cy;
    }
  return {std::move(y), std::move(p)};
}

template <class S>
void spatial_softmax_backward(const TensorT<S>& p, const TensorT<S>& y,
                              const TensorT<S>& dy, TensorT<S>* dx) {
  const int B = p.dim(0), C = p.dim(1), H = p.dim(2), W = p.dim(3);
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      const S cx = y.at2(b, 2 * c), cy = y.at2(b, 2 * c + 1);
      const S gx = dy.at2(b, 2 * c), gy = dy.at2(b, 2 * c + 1);
      for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j) {
          const S xj = W > 1 ? S(-1) + S(2) * j / S(W - 1) : S(0);
          const S yi = H > 1 ? S(-1) + S(2) * i / S(H - 1) : S(0);
          dx->at4(b, c, i, j) +=
              p.at4(b, c, i, j) * (gx * (xj - cx) + gy * (yi - cy));
        }
    }
}

template <class S>
S softplus(S x) {
  // log(1 + e^x), stable on both tails
  if (x > S(0)) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

}  // namespace kernels

// ---------------------------------------------------------------------------
// Tape-based reverse-mode graph. Nodes are created in topological order;
// backward walks the tape in reverse and accumulates exact gradients into
// every node that can reach a parameter leaf.

template <class S>
class GraphT {
 public:
  using Tensor = TensorT<S>;

  struct Var {
    int idx = -1;
    bool valid() const { return idx >= 0; }
  };

  // Parameter leaf: participates in gradients.
  Var param(const Tensor& t) { return push(t, true, {}); }
  // Constant input: recorded but never differentiated.
  Var constant(Tensor t) { return push(std::move(t), false, {}); }

  const Tensor& value(Var v) const { return nodes_[v.idx].value; }

  const Tensor& grad(Var v) const {
    const Node& n = nodes_[v.idx];
    if (!ran_backward_ || !n.requires_grad)
      throw std::logic_error("grad: no recorded gradient for this node");
    return n.grad;
  }

  // -- elementwise ----------------------------------------------------------

  Var add(Var a, Var b) {
    const Tensor &ta = val(a), &tb = val(b);
    if (!ta.same_shape(tb)) throw std::invalid_argument("add: shape mismatch");
    Tensor out = ta;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += tb[i];
    return push(std::move(out), needs(a) || needs(b),
                [a, b](GraphT& g, const Node& n) {
                  g.accum(a, n.grad, [](S gr, std::size_t) { return gr; });
                  g.accum(b, n.grad, [](S gr, std::size_t) { return gr; });
                });
  }

  Var sub(Var a, Var b) {
    const Tensor &ta = val(a), &tb = val(b);
    if (!ta.same_shape(tb)) throw std::invalid_argument("sub: shape mismatch");
    Tensor out = ta;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= tb[i];
    return push(std::move(out), needs(a) || needs(b),
                [a, b](GraphT& g, const Node& n) {
                  g.accum(a, n.grad, [](S gr, std::size_t) { return gr; });
                  g.accum(b, n.grad, [](S gr, std::size_t) { return -gr; });
                });
  }

  Var mul(Var a, Var b) {
    const Tensor &ta = val(a), &tb = val(b);
    if (!ta.same_shape(tb)) throw std::invalid_argument("mul: shape mismatch");
    Tensor out = ta;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= tb[i];
    return push(std::move(out), needs(a) || needs(b),
                [a, b](GraphT& g, const Node& n) {
                  const Tensor &va = g.val(a), &vb = g.val(b);
                  g.accum(a, n.grad, [&](S gr, std::size_t i) { return gr * vb[i]; });
                  g.accum(b, n.grad, [&](S gr, std::size_t i) { return gr * va[i]; });
                });
  }

  Var scale(Var a, S c) {
    Tensor out = val(a);
    for (auto& v : out.data) v *= c;
    return push(std::move(out), needs(a), [a, c](GraphT& g, const Node& n) {
      g.accum(a, n.grad, [&](S gr, std::size_t) { return gr * c; });
    });
  }

  Var add_scalar(Var a, S c) {
    Tensor out = val(a);
    for (auto& v : out.data) v += c;
    return push(std::move(out), needs(a), [a](GraphT& g, const Node& n) {
      g.accum(a, n.grad, [](S gr, std::size_t) { return gr; });
    });
  }

  Var square(Var a) {
    Tensor out = val(a);
    for (auto& v : out.data) v *= v;
    return push(std::move(out), needs(a), [a](GraphT& g, const Node& n) {
      const Tensor& va = g.val(a);
      g.accum(a, n.grad, [&](S gr, std::size_t i) { return gr * S(2) * va[i]; });
    });
  }

  Var relu(Var a) {
    Tensor out = val(a);
    for (auto& v : out.data) v = v > S(0) ? v : S(0);
    return push(std::move(out), needs(a), [a](GraphT& g, const Node& n) {
      const Tensor& va = g.val(a);
      g.accum(a, n.grad,
              [&](S gr, std::size_t i) { return va[i] > S(0) ? gr : S(0); });
    });
  }

  Var tanh_(Var a) {
    Tensor out = val(a);
    for (auto& v : out.data) v = std::tanh(v);
    return push(std::move(out), needs(a), [a](GraphT& g, const Node& n) {
      const Tensor& y = n.value;
      g.accum(a, n.grad,
              [&](S gr, std::size_t i) { return gr * (S(1) - y[i] * y[i]); });
    });
  }

  Var exp_(Var a) {
    Tensor out = val(a);
    for (auto& v : out.data) v = std::exp(v);
    return push(std::move(out), needs(a), [a](GraphT& g, const Node& n) {
      const Tensor& y = n.value;
      g.accum(a, n.grad, [&](S gr, std::size_t i) { return gr * y[i]; });
    });
  }

  Var softplus_(Var a) {
    Tensor out = val(a);
    for (auto& v : out.data) v = kernels::softplus(v);
    return push(std::move(out), needs(a), [a](GraphT& g, const Node& n) {
      const Tensor& va = g.val(a);
      g.accum(a, n.grad, [&](S gr, std::size_t i) {
        const S sig = S(1) / (S(1) + std::exp(-va[i]));
        return gr * sig;
      });
    });
  }

  // Hard clamp with pass-through gradient strictly inside the bounds.
  Var clamp(Var a, S lo, S hi) {
    Tensor out = val(a);
    for (auto& v : out.data) v = std::min(hi, std::max(lo, v));
    return push(std::move(out), needs(a), [a, lo, hi](GraphT& g, const Node& n) {
      const Tensor& va = g.val(a);
      g.accum(a, n.grad, [&](S gr, std::size_t i) {
        return (va[i] > lo && va[i] < hi) ? gr : S(0);
      });
    });
  }

  // Elementwise min; ties route the gradient to `a`.
  Var min2(Var a, Var b) {
    const Tensor &ta = val(a), &tb = val(b);
    if (!ta.same_shape(tb)) throw std::invalid_argument("min2: shape mismatch");
    Tensor out = ta;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(ta[i], tb[i]);
    return push(std::move(out), needs(a) || needs(b),
                [a, b](GraphT& g, const Node& n) {
                  const Tensor &va = g.val(a), &vb = g.val(b);
                  g.accum(a, n.grad, [&](S gr, std::size_t i) {
                    return va[i] <= vb[i] ? gr : S(0);
                  });
                  g.accum(b, n.grad, [&](S gr, std::size_t i) {
                    return va[i] <= vb[i] ? S(0) : gr;
                  });
                });
  }

  // -- shape ops -------------------------------------------------------------

  Var reshape(Var a, std::vector<int> shp) {
    Tensor out(std::move(shp));
    if (out.size() != val(a).size())
      throw std::invalid_argument("reshape: element count mismatch");
    out.data = val(a).data;
    return push(std::move(out), needs(a), [a](GraphT& g, const Node& n) {
      g.accum(a, n.grad, [](S gr, std::size_t) { return gr; });
    });
  }

  Var concat_cols(Var a, Var b) {
    const Tensor &ta = val(a), &tb = val(b);
    if (ta.ndim() != 2 || tb.ndim() != 2 || ta.dim(0) != tb.dim(0))
      throw std::invalid_argument("concat_cols: bad shapes");
    const int B = ta.dim(0), n1 = ta.dim(1), n2 = tb.dim(1);
    Tensor out({B, n1 + n2});
    for (int r = 0; r < B; ++r) {
      for (int c = 0; c < n1; ++c) out.at2(r, c) = ta.at2(r, c);
      for (int c = 0; c < n2; ++c) out.at2(r, n1 + c) = tb.at2(r, c);
    }
    return push(std::move(out), needs(a) || needs(b),
                [a, b, B, n1, n2](GraphT& g, const Node& n) {
                  if (g.needs(a)) {
                    Tensor& da = g.nodes_[a.idx].grad;
                    for (int r = 0; r < B; ++r)
                      for (int c = 0; c < n1; ++c)
                        da.at2(r, c) += n.grad.at2(r, c);
                  }
                  if (g.needs(b)) {
                    Tensor& db = g.nodes_[b.idx].grad;
                    for (int r = 0; r < B; ++r)
                      for (int c = 0; c < n2; ++c)
                        db.at2(r, c) += n.grad.at2(r, n1 + c);
                  }
                });
  }

  Var slice_cols(Var a, int c0, int c1) {
    const Tensor& ta = val(a);
    if (ta.ndim() != 2 || c0 < 0 || c1 > ta.dim(1) || c0 >= c1)
      throw std::invalid_argument("slice_cols: bad range");
    const int B = ta.dim(0);
    Tensor out({B, c1 - c0});
    for (int r = 0; r < B; ++r)
      for (int c = c0; c < c1; ++c) out.at2(r, c - c0) = ta.at2(r, c);
    return push(std::move(out), needs(a), [a, c0, c1, B](GraphT& g, const Node& n) {
      if (!g.needs(a)) return;
      Tensor& da = g.nodes_[a.idx].grad;
      for (int r = 0; r < B; ++r)
        for (int c = c0; c < c1; ++c) da.at2(r, c) += n.grad.at2(r, c - c0);
    });
  }

  // -- reductions ------------------------------------------------------------

  Var sum_all(Var a) {
    S acc = 0;
    for (S v : val(a).data) acc += v;
    Tensor out({1});
    out[0] = acc;
    return push(std::move(out), needs(a), [a](GraphT& g, const Node& n) {
      const S gr = n.grad[0];
      g.accum(a, g.ones_like(a), [&](S, std::size_t) { return gr; });
    });
  }

  Var mean_all(Var a) {
    const S inv = S(1) / S(val(a).size());
    S acc = 0;
    for (S v : val(a).data) acc += v;
    Tensor out({1});
    out[0] = acc * inv;
    return push(std::move(out), needs(a), [a, inv](GraphT& g, const Node& n) {
      const S gr = n.grad[0] * inv;
      g.accum(a, g.ones_like(a), [&](S, std::size_t) { return gr; });
    });
  }

  Var row_sum(Var a) {  // [B,n] -> [B]
    const Tensor& ta = val(a);
    if (ta.ndim() != 2) throw std::invalid_argument("row_sum: want 2-D");
    const int B = ta.dim(0), N = ta.dim(1);
    Tensor out({B});
    for (int r = 0; r < B; ++r) {
      S acc = 0;
      for (int c = 0; c < N; ++c) acc += ta.at2(r, c);
      out[static_cast<std::size_t>(r)] = acc;
    }
    return push(std::move(out), needs(a), [a, B, N](GraphT& g, const Node& n) {
      if (!g.needs(a)) return;
      Tensor& da = g.nodes_[a.idx].grad;
      for (int r = 0; r < B; ++r)
        for (int c = 0; c < N; ++c)
          da.at2(r, c) += n.grad[static_cast<std::size_t>(r)];
    });
  }

  // -- layers ------------------------------------------------------------------

  Var linear(Var x, Var w, Var b) {
    Tensor out = kernels::linear_forward(val(x), val(w), val(b));
    return push(std::move(out), needs(x) || needs(w) || needs(b),
                [x, w, b](GraphT& g, const Node& n) {
                  Tensor* dx = g.needs(x) ? &g.nodes_[x.idx].grad : nullptr;
                  Tensor* dw = g.needs(w) ? &g.nodes_[w.idx].grad : nullptr;
                  Tensor* db = g.needs(b) ? &g.nodes_[b.idx].grad : nullptr;
                  kernels::linear_backward(g.val(x), g.val(w), n.grad, dx, dw, db);
                });
  }

  Var conv2d(Var x, Var k, Var b, int stride) {
    Tensor out = kernels::conv2d_forward(val(x), val(k), val(b), stride);
    return push(std::move(out), needs(x) || needs(k) || needs(b),
                [x, k, b, stride](GraphT& g, const Node& n) {
                  Tensor* dx = g.needs(x) ? &g.nodes_[x.idx].grad : nullptr;
                  Tensor* dk = g.needs(k) ? &g.nodes_[k.idx].grad : nullptr;
                  Tensor* db = g.needs(b) ? &g.nodes_[b.idx].grad : nullptr;
                  kernels::conv2d_backward(g.val(x), g.val(k), stride, n.grad,
                                           dx, dk, db);
                });
  }

  Var spatial_softmax(Var x) {
    auto [out, p] = kernels::spatial_softmax_forward(val(x));
    auto saved = std::make_shared<Tensor>(std::move(p));
    return push(std::move(out), needs(x), [x, saved](GraphT& g, const Node& n) {
      if (!g.needs(x)) return;
      kernels::spatial_softmax_backward(*saved, n.value, n.grad,
                                        &g.nodes_[x.idx].grad);
    });
  }

  // -- backward ----------------------------------------------------------------

  void backward(Var loss) {
    const Node& ln = nodes_[loss.idx];
    if (!ln.requires_grad)
      throw std::logic_error("backward: loss has no recorded graph");
    if (ln.value.size() != 1)
      throw std::invalid_argument("backward: loss must be scalar");
    for (auto& n : nodes_) {
      if (n.requires_grad) n.grad = Tensor::zeros(n.value.shape);
    }
    ran_backward_ = true;
    nodes_[loss.idx].grad[0] = S(1);
    for (int i = loss.idx; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.requires_grad && n.backprop) n.backprop(*this, n);
    }
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::function<void(GraphT&, const Node&)> backprop;
  };

  const Tensor& val(Var v) const { return nodes_[v.idx].value; }
  bool needs(Var v) const { return nodes_[v.idx].requires_grad; }
  Tensor ones_like(Var v) const { return Tensor::full(val(v).shape, S(1)); }

  template <class F>
  void accum(Var target, const Tensor& src, F&& f) {
    if (!needs(target)) return;
    Tensor& g = nodes_[target.idx].grad;
    for (std::size_t i = 0; i < src.size(); ++i) g[i] += f(src[i], i);
  }

  Var push(Tensor value, bool requires_grad,
           std::function<void(GraphT&, const Node&)> backprop) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.backprop = std::move(backprop);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  std::vector<Node> nodes_;
  bool ran_backward_ = false;
};

using Graph = GraphT<float>;
using GraphD = GraphT<double>;

}  // namespace rtsac::nn
