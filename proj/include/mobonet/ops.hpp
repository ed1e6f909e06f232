#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>
#include <vector>

#include "mobonet/tensor.hpp"

namespace mobo {

template <typename S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MapRowMat = Eigen::Map<RowMat<S>>;
template <typename S>
using CMapRowMat = Eigen::Map<const RowMat<S>>;

namespace detail {

template <typename S, typename F>
void install_backward(Tensor<S>& out, std::vector<Tensor<S>> parents, const char* op, F&& fn) {
  auto& node = *out.node();
  node.op = op;
  bool rg = false;
  for (auto& p : parents) {
    rg = rg || p.requires_grad();
    node.parents.push_back(p.node());
  }
  node.requires_grad = rg;
  if (rg) node.backward_fn = std::forward<F>(fn);
}

inline Eigen::Index conv_out_extent(Eigen::Index in, int k, int stride, int pad, int dil) {
  return (in + 2 * pad - dil * (k - 1) - 1) / stride + 1;
}

// Unfolds one image plane set into a (C*kh*kw) x (oh*ow) row-major matrix.
// Out-of-range taps contribute zero.
template <typename S>
void im2col(const S* x, Eigen::Index C, Eigen::Index H, Eigen::Index W, int kh, int kw, int stride,
            int pad, int dil, Eigen::Index oh, Eigen::Index ow, S* col) {
  Eigen::Index r = 0;
  for (Eigen::Index c = 0; c < C; ++c) {
    const S* plane = x + c * H * W;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx, ++r) {
        S* dst = col + r * (oh * ow);
        for (Eigen::Index oy = 0; oy < oh; ++oy) {
          const Eigen::Index iy = oy * stride - pad + ky * dil;
          S* drow = dst + oy * ow;
          if (iy < 0 || iy >= H) {
            std::fill(drow, drow + ow, S(0));
            continue;
          }
          const S* srow = plane + iy * W;
          if (stride == 1) {
            const Eigen::Index off = kx * dil - pad;  // ix = ox + off
            const Eigen::Index lo = std::max<Eigen::Index>(0, -off);
            const Eigen::Index hi = std::min<Eigen::Index>(ow, W - off);
            if (lo > 0) std::fill(drow, drow + std::min(lo, ow), S(0));
            if (hi > lo) std::memcpy(drow + lo, srow + lo + off, sizeof(S) * (hi - lo));
            if (hi < ow) std::fill(drow + std::max<Eigen::Index>(hi, 0), drow + ow, S(0));
          } else {
            for (Eigen::Index ox = 0; ox < ow; ++ox) {
              const Eigen::Index ix = ox * stride - pad + kx * dil;
              drow[ox] = (ix >= 0 && ix < W) ? srow[ix] : S(0);
            }
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-adds column entries back into the image.
template <typename S>
void col2im_add(const S* col, Eigen::Index C, Eigen::Index H, Eigen::Index W, int kh, int kw,
                int stride, int pad, int dil, Eigen::Index oh, Eigen::Index ow, S* dx) {
  Eigen::Index r = 0;
  for (Eigen::Index c = 0; c < C; ++c) {
    S* plane = dx + c * H * W;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx, ++r) {
        const S* src = col + r * (oh * ow);
        for (Eigen::Index oy = 0; oy < oh; ++oy) {
          const Eigen::Index iy = oy * stride - pad + ky * dil;
          if (iy < 0 || iy >= H) continue;
          S* drow = plane + iy * W;
          const S* srow = src + oy * ow;
          for (Eigen::Index ox = 0; ox < ow; ++ox) {
            const Eigen::Index ix = ox * stride - pad + kx * dil;
            if (ix >= 0 && ix < W) drow[ix] += srow[ox];
          }
        }
      }
    }
  }
}

template <typename S>
std::vector<S>& conv_scratch(int which) {
  static thread_local std::vector<S> bufs[2];
  return bufs[which];
}

}  // namespace detail

// 2-D convolution, weight (out_ch, in_ch, k, k), optional bias (1, out_ch, 1, 1).
// Output extent per axis: (in + 2*pad - dil*(k-1) - 1)/stride + 1.
template <typename S>
Tensor<S> conv2d(const Tensor<S>& input, const Tensor<S>& weight, const Tensor<S>& bias,
                 int stride = 1, int pad = 0, int dilation = 1) {
  if (stride < 1 || dilation < 1)
    throw ArgumentError("conv2d stride/dilation must be positive");
  if (pad < 0) throw ArgumentError("conv2d pad must be nonnegative");
  const Shape& xs = input.shape();
  const Shape& ws = weight.shape();
  if (xs.c != ws.c)
    throw ShapeError("conv2d channel mismatch: input " + xs.str() + " vs weight " + ws.str());
  const bool with_bias = bias.valid();
  if (with_bias && !(bias.shape() == Shape{1, ws.n, 1, 1}))
    throw ShapeError("conv2d bias must have shape 1x" + std::to_string(ws.n) + "x1x1");

  const Eigen::Index oc = ws.n, ic = ws.c;
  const int kh = static_cast<int>(ws.h), kw = static_cast<int>(ws.w);
  const Eigen::Index oh = detail::conv_out_extent(xs.h, kh, stride, pad, dilation);
  const Eigen::Index ow = detail::conv_out_extent(xs.w, kw, stride, pad, dilation);
  if (oh < 1 || ow < 1) throw ShapeError("conv2d produces empty output for input " + xs.str());

  const Eigen::Index rows = ic * kh * kw, P = oh * ow;
  Tensor<S> out = Tensor<S>::with_node(Shape{xs.n, oc, oh, ow});

  auto& col = detail::conv_scratch<S>(0);
  col.resize(static_cast<std::size_t>(rows * P));
  CMapRowMat<S> Wm(weight.values().data(), oc, rows);
  for (Eigen::Index n = 0; n < xs.n; ++n) {
    detail::im2col(input.values().data() + n * xs.c * xs.h * xs.w, ic, xs.h, xs.w, kh, kw, stride,
                   pad, dilation, oh, ow, col.data());
    CMapRowMat<S> K(col.data(), rows, P);
    MapRowMat<S> Y(out.values().data() + n * oc * P, oc, P);
    Y.noalias() = Wm * K;
    if (with_bias) {
      for (Eigen::Index o = 0; o < oc; ++o) Y.row(o).array() += bias.values()[o];
    }
  }

  std::vector<Tensor<S>> parents = {input, weight};
  if (with_bias) parents.push_back(bias);
  const Shape xsc = xs;
  detail::install_backward(out, parents, "conv2d",
                           [xsc, oc, ic, kh, kw, stride, pad, dilation, oh, ow, rows, P,
                            with_bias](detail::Node<S>& self) {
    auto& xn = *self.parents[0];
    auto& wn = *self.parents[1];
    detail::Node<S>* bn = with_bias ? self.parents[2].get() : nullptr;
    if (xn.requires_grad) xn.ensure_grad();
    if (wn.requires_grad) wn.ensure_grad();
    if (bn && bn->requires_grad) bn->ensure_grad();

    auto& col = detail::conv_scratch<S>(0);
    auto& dcol = detail::conv_scratch<S>(1);
    CMapRowMat<S> Wm(wn.value.data(), oc, rows);
    for (Eigen::Index n = 0; n < xsc.n; ++n) {
      CMapRowMat<S> dY(self.grad.data() + n * oc * P, oc, P);
      if (wn.requires_grad) {
        col.resize(static_cast<std::size_t>(rows * P));
        detail::im2col(xn.value.data() + n * xsc.c * xsc.h * xsc.w, ic, xsc.h, xsc.w, kh, kw,
                       stride, pad, dilation, oh, ow, col.data());
        CMapRowMat<S> K(col.data(), rows, P);
        MapRowMat<S> dW(wn.grad.data(), oc, rows);
        dW.noalias() += dY * K.transpose();
      }
      if (bn && bn->requires_grad) {
        for (Eigen::Index o = 0; o < oc; ++o) bn->grad[o] += dY.row(o).sum();
      }
      if (xn.requires_grad) {
        dcol.resize(static_cast<std::size_t>(rows * P));
        MapRowMat<S> dK(dcol.data(), rows, P);
        dK.noalias() = Wm.transpose() * dY;
        detail::col2im_add(dcol.data(), ic, xsc.h, xsc.w, kh, kw, stride, pad, dilation, oh, ow,
                           xn.grad.data() + n * xsc.c * xsc.h * xsc.w);
      }
    }
  });
  return out;
}

template <typename S>
Tensor<S> conv2d(const Tensor<S>& input, const Tensor<S>& weight, int stride = 1, int pad = 0,
                 int dilation = 1) {
  return conv2d(input, weight, Tensor<S>(), stride, pad, dilation);
}

// Transposed convolution, fixed 2x2 kernel with stride 2: exact resolution
// doubling. Weight layout (in_ch, out_ch, 2, 2), bias (1, out_ch, 1, 1).
template <typename S>
Tensor<S> transposed_conv2d(const Tensor<S>& input, const Tensor<S>& weight, const Tensor<S>& bias,
                            int stride = 2) {
  if (stride != 2) throw ArgumentError("transposed_conv2d supports stride 2 only");
  const Shape& xs = input.shape();
  const Shape& ws = weight.shape();
  if (ws.h != 2 || ws.w != 2) throw ShapeError("transposed_conv2d kernel must be 2x2");
  if (ws.n != xs.c)
    throw ShapeError("transposed_conv2d channel mismatch: input " + xs.str() + " vs weight " +
                     ws.str());
  const bool with_bias = bias.valid();
  if (with_bias && !(bias.shape() == Shape{1, ws.c, 1, 1}))
    throw ShapeError("transposed_conv2d bias must have shape 1x" + std::to_string(ws.c) + "x1x1");

  const Eigen::Index ic = ws.n, oc = ws.c;
  const Eigen::Index H = xs.h, W = xs.w, OH = 2 * H, OW = 2 * W, P = H * W;
  Tensor<S> out = Tensor<S>::with_node(Shape{xs.n, oc, OH, OW});

  RowMat<S> Wsub(oc, ic), Ysub(oc, P);
  for (Eigen::Index n = 0; n < xs.n; ++n) {
    CMapRowMat<S> X(input.values().data() + n * ic * P, ic, P);
    for (int ky = 0; ky < 2; ++ky) {
      for (int kx = 0; kx < 2; ++kx) {
        for (Eigen::Index o = 0; o < oc; ++o)
          for (Eigen::Index i = 0; i < ic; ++i)
            Wsub(o, i) = weight.values()[((i * oc + o) * 2 + ky) * 2 + kx];
        Ysub.noalias() = Wsub * X;
        for (Eigen::Index o = 0; o < oc; ++o) {
          const S b = with_bias ? bias.values()[o] : S(0);
          for (Eigen::Index y = 0; y < H; ++y) {
            S* dst = out.values().data() + ((n * oc + o) * OH + 2 * y + ky) * OW + kx;
            const S* src = Ysub.data() + o * P + y * W;
            for (Eigen::Index x = 0; x < W; ++x) dst[2 * x] = src[x] + b;
          }
        }
      }
    }
  }

  std::vector<Tensor<S>> parents = {input, weight};
  if (with_bias) parents.push_back(bias);
  const Shape xsc = xs;
  detail::install_backward(out, parents, "transposed_conv2d",
                           [xsc, ic, oc, H, W, OH, OW, P, with_bias](detail::Node<S>& self) {
    auto& xn = *self.parents[0];
    auto& wn = *self.parents[1];
    detail::Node<S>* bn = with_bias ? self.parents[2].get() : nullptr;
    if (xn.requires_grad) xn.ensure_grad();
    if (wn.requires_grad) wn.ensure_grad();
    if (bn && bn->requires_grad) bn->ensure_grad();

    RowMat<S> Wsub(oc, ic), dYsub(oc, P), dWsub(oc, ic), dX(ic, P);
    for (Eigen::Index n = 0; n < xsc.n; ++n) {
      CMapRowMat<S> X(xn.value.data() + n * ic * P, ic, P);
      for (int ky = 0; ky < 2; ++ky) {
        for (int kx = 0; kx < 2; ++kx) {
          for (Eigen::Index o = 0; o < oc; ++o) {
            S* drow = dYsub.data() + o * P;
            for (Eigen::Index y = 0; y < H; ++y) {
              const S* src = self.grad.data() + ((n * oc + o) * OH + 2 * y + ky) * OW + kx;
              for (Eigen::Index x = 0; x < W; ++x) drow[y * W + x] = src[2 * x];
            }
          }
          if (bn && bn->requires_grad) {
            for (Eigen::Index o = 0; o < oc; ++o) bn->grad[o] += dYsub.row(o).sum();
          }
          if (wn.requires_grad) {
            dWsub.noalias() = dYsub * X.transpose();
            for (Eigen::Index o = 0; o < oc; ++o)
              for (Eigen::Index i = 0; i < ic; ++i)
                wn.grad[((i * oc + o) * 2 + ky) * 2 + kx] += dWsub(o, i);
          }
          if (xn.requires_grad) {
            for (Eigen::Index o = 0; o < oc; ++o)
              for (Eigen::Index i = 0; i < ic; ++i)
                Wsub(o, i) = wn.value[((i * oc + o) * 2 + ky) * 2 + kx];
            dX.noalias() = Wsub.transpose() * dYsub;
            Eigen::Map<ArrayX<S>>(xn.grad.data() + n * ic * P, ic * P) +=
                Eigen::Map<const ArrayX<S>>(dX.data(), ic * P);
          }
        }
      }
    }
  });
  return out;
}

// 2x2 max pooling with stride 2. Ties resolve to the first element in
// row-major window order, so the backward route is deterministic.
template <typename S>
Tensor<S> maxpool2(const Tensor<S>& input) {
  const Shape& xs = input.shape();
  if (xs.h % 2 != 0 || xs.w % 2 != 0)
    throw ShapeError("maxpool2 needs even extents, got " + xs.str());
  const Eigen::Index OH = xs.h / 2, OW = xs.w / 2;
  Tensor<S> out = Tensor<S>::with_node(Shape{xs.n, xs.c, OH, OW});
  auto argmax = std::make_shared<std::vector<Eigen::Index>>(out.numel());

  const S* x = input.values().data();
  S* y = out.values().data();
  Eigen::Index oi = 0;
  for (Eigen::Index nc = 0; nc < xs.n * xs.c; ++nc) {
    const S* plane = x + nc * xs.h * xs.w;
    for (Eigen::Index oy = 0; oy < OH; ++oy) {
      for (Eigen::Index ox = 0; ox < OW; ++ox, ++oi) {
        const Eigen::Index base = (2 * oy) * xs.w + 2 * ox;
        const Eigen::Index cand[4] = {base, base + 1, base + xs.w, base + xs.w + 1};
        Eigen::Index best = cand[0];
        S bv = plane[best];
        for (int k = 1; k < 4; ++k) {
          if (plane[cand[k]] > bv) {
            bv = plane[cand[k]];
            best = cand[k];
          }
        }
        y[oi] = bv;
        (*argmax)[oi] = nc * xs.h * xs.w + best;
      }
    }
  }

  detail::install_backward(out, {input}, "maxpool2", [argmax](detail::Node<S>& self) {
    auto& xn = *self.parents[0];
    if (!xn.requires_grad) return;
    xn.ensure_grad();
    for (Eigen::Index i = 0; i < self.grad.size(); ++i) xn.grad[(*argmax)[i]] += self.grad[i];
  });
  return out;
}

template <typename S>
Tensor<S> relu(const Tensor<S>& input) {
  Tensor<S> out = Tensor<S>::with_node(input.shape());
  out.values() = input.values().max(S(0));
  detail::install_backward(out, {input}, "relu", [](detail::Node<S>& self) {
    auto& xn = *self.parents[0];
    if (!xn.requires_grad) return;
    xn.ensure_grad();
    // subgradient at 0 is defined as 0
    xn.grad += (xn.value > S(0)).select(self.grad, ArrayX<S>::Zero(self.grad.size()));
  });
  return out;
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& input) {
  Tensor<S> out = Tensor<S>::with_node(input.shape());
  const auto& x = input.values();
  auto& y = out.values();
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const S v = x[i];
    if (v >= S(0)) {
      y[i] = S(1) / (S(1) + std::exp(-v));
    } else {
      const S e = std::exp(v);
      y[i] = e / (S(1) + e);
    }
  }
  detail::install_backward(out, {input}, "sigmoid", [](detail::Node<S>& self) {
    auto& xn = *self.parents[0];
    if (!xn.requires_grad) return;
    xn.ensure_grad();
    xn.grad += self.grad * self.value * (S(1) - self.value);
  });
  return out;
}

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  if (!(a.shape() == b.shape()))
    throw ShapeError("add shape mismatch: " + a.shape().str() + " vs " + b.shape().str());
  Tensor<S> out = Tensor<S>::with_node(a.shape());
  out.values() = a.values() + b.values();
  detail::install_backward(out, {a, b}, "add", [](detail::Node<S>& self) {
    for (int k = 0; k < 2; ++k) {
      auto& pn = *self.parents[k];
      if (!pn.requires_grad) continue;
      pn.ensure_grad();
      pn.grad += self.grad;
    }
  });
  return out;
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  if (!(a.shape() == b.shape()))
    throw ShapeError("sub shape mismatch: " + a.shape().str() + " vs " + b.shape().str());
  Tensor<S> out = Tensor<S>::with_node(a.shape());
  out.values() = a.values() - b.values();
  detail::install_backward(out, {a, b}, "sub", [](detail::Node<S>& self) {
    auto& an = *self.parents[0];
    auto& bn = *self.parents[1];
    if (an.requires_grad) {
      an.ensure_grad();
      an.grad += self.grad;
    }
    if (bn.requires_grad) {
      bn.ensure_grad();
      bn.grad -= self.grad;
    }
  });
  return out;
}

template <typename S>
Tensor<S> scale(const Tensor<S>& x, double factor) {
  Tensor<S> out = Tensor<S>::with_node(x.shape());
  out.values() = x.values() * static_cast<S>(factor);
  detail::install_backward(out, {x}, "scale", [factor](detail::Node<S>& self) {
    auto& xn = *self.parents[0];
    if (!xn.requires_grad) return;
    xn.ensure_grad();
    xn.grad += self.grad * static_cast<S>(factor);
  });
  return out;
}

// Stacks b's channels after a's; all non-channel extents must agree.
template <typename S>
Tensor<S> concat_channels(const Tensor<S>& a, const Tensor<S>& b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.n != bs.n || as.h != bs.h || as.w != bs.w)
    throw ShapeError("concat_channels extent mismatch: " + as.str() + " vs " + bs.str());
  const Eigen::Index plane = as.h * as.w;
  Tensor<S> out = Tensor<S>::with_node(Shape{as.n, as.c + bs.c, as.h, as.w});
  for (Eigen::Index n = 0; n < as.n; ++n) {
    std::memcpy(out.values().data() + n * (as.c + bs.c) * plane,
                a.values().data() + n * as.c * plane, sizeof(S) * as.c * plane);
    std::memcpy(out.values().data() + (n * (as.c + bs.c) + as.c) * plane,
                b.values().data() + n * bs.c * plane, sizeof(S) * bs.c * plane);
  }
  const Eigen::Index ca = as.c, cb = bs.c, batch = as.n;
  detail::install_backward(out, {a, b}, "concat_channels",
                           [ca, cb, plane, batch](detail::Node<S>& self) {
    auto& an = *self.parents[0];
    auto& bn = *self.parents[1];
    for (Eigen::Index n = 0; n < batch; ++n) {
      if (an.requires_grad) {
        an.ensure_grad();
        Eigen::Map<ArrayX<S>>(an.grad.data() + n * ca * plane, ca * plane) +=
            Eigen::Map<const ArrayX<S>>(self.grad.data() + n * (ca + cb) * plane, ca * plane);
      }
      if (bn.requires_grad) {
        bn.ensure_grad();
        Eigen::Map<ArrayX<S>>(bn.grad.data() + n * cb * plane, cb * plane) +=
            Eigen::Map<const ArrayX<S>>(self.grad.data() + (n * (ca + cb) + ca) * plane,
                                        cb * plane);
      }
    }
  });
  return out;
}

// Pads height and width by `p` pixels, replicating the border.
template <typename S>
Tensor<S> pad_replicate(const Tensor<S>& x, int p) {
  if (p < 0) throw ArgumentError("pad_replicate pad must be nonnegative");
  const Shape& xs = x.shape();
  const Eigen::Index OH = xs.h + 2 * p, OW = xs.w + 2 * p;
  Tensor<S> out = Tensor<S>::with_node(Shape{xs.n, xs.c, OH, OW});
  const S* src = x.values().data();
  S* dst = out.values().data();
  for (Eigen::Index nc = 0; nc < xs.n * xs.c; ++nc) {
    const S* sp = src + nc * xs.h * xs.w;
    S* dp = dst + nc * OH * OW;
    for (Eigen::Index oy = 0; oy < OH; ++oy) {
      const Eigen::Index iy = std::clamp<Eigen::Index>(oy - p, 0, xs.h - 1);
      for (Eigen::Index ox = 0; ox < OW; ++ox) {
        const Eigen::Index ix = std::clamp<Eigen::Index>(ox - p, 0, xs.w - 1);
        dp[oy * OW + ox] = sp[iy * xs.w + ix];
      }
    }
  }
  const Shape xsc = xs;
  detail::install_backward(out, {x}, "pad_replicate", [xsc, p, OH, OW](detail::Node<S>& self) {
    auto& xn = *self.parents[0];
    if (!xn.requires_grad) return;
    xn.ensure_grad();
    for (Eigen::Index nc = 0; nc < xsc.n * xsc.c; ++nc) {
      S* gp = xn.grad.data() + nc * xsc.h * xsc.w;
      const S* sg = self.grad.data() + nc * OH * OW;
      for (Eigen::Index oy = 0; oy < OH; ++oy) {
        const Eigen::Index iy = std::clamp<Eigen::Index>(oy - p, 0, xsc.h - 1);
        for (Eigen::Index ox = 0; ox < OW; ++ox) {
          const Eigen::Index ix = std::clamp<Eigen::Index>(ox - p, 0, xsc.w - 1);
          gp[iy * xsc.w + ix] += sg[oy * OW + ox];
        }
      }
    }
  });
  return out;
}

template <typename S>
Tensor<S> sum(const Tensor<S>& x) {
  Tensor<S> out = Tensor<S>::with_node(Shape{1, 1, 1, 1});
  out.values()[0] = x.values().sum();
  detail::install_backward(out, {x}, "sum", [](detail::Node<S>& self) {
    auto& xn = *self.parents[0];
    if (!xn.requires_grad) return;
    xn.ensure_grad();
    xn.grad += self.grad[0];
  });
  return out;
}

template <typename S>
Tensor<S> sum_squares(const Tensor<S>& x) {
  Tensor<S> out = Tensor<S>::with_node(Shape{1, 1, 1, 1});
  out.values()[0] = x.values().square().sum();
  detail::install_backward(out, {x}, "sum_squares", [](detail::Node<S>& self) {
    auto& xn = *self.parents[0];
    if (!xn.requires_grad) return;
    xn.ensure_grad();
    xn.grad += S(2) * self.grad[0] * xn.value;
  });
  return out;
}

}  // namespace mobo
