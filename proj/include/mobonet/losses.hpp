#pragma once

#include <cmath>
#include <vector>

#include "mobonet/ops.hpp"
#include "mobonet/tensor.hpp"

namespace mobo {

inline constexpr double kBceClamp = 1e-7;

// Class-balanced cross entropy with an explicit weight: the positive-class
// sum is scaled by beta, the negative-class sum by 1-beta. Probabilities are
// clamped to [kBceClamp, 1-kBceClamp] before the log; outside that range the
// loss is locally constant, so the gradient there is zero.
template <typename S>
Tensor<S> class_balanced_bce_with_beta(const Tensor<S>& pred, const Tensor<S>& gt, double beta) {
  if (!(pred.shape() == gt.shape()))
    throw ShapeError("bce shape mismatch: " + pred.shape().str() + " vs " + gt.shape().str());
  if (beta < 0.0 || beta > 1.0) throw ArgumentError("bce beta must lie in [0,1]");
  const auto& g = gt.values();
  for (Eigen::Index i = 0; i < g.size(); ++i)
    if (g[i] != S(0) && g[i] != S(1))
      throw ArgumentError("bce ground truth must be strictly binary");

  const S eps = static_cast<S>(kBceClamp);
  const S lo = eps, hi = S(1) - eps;
  const S bpos = static_cast<S>(beta), bneg = S(1) - static_cast<S>(beta);
  const auto& p = pred.values();
  S acc = S(0);
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const S pc = std::clamp(p[i], lo, hi);
    acc -= (g[i] == S(1)) ? bpos * std::log(pc) : bneg * std::log(S(1) - pc);
  }
  Tensor<S> out = Tensor<S>::with_node(Shape{1, 1, 1, 1});
  out.values()[0] = acc;
  detail::install_backward(out, {pred, gt}, "class_balanced_bce",
                           [lo, hi, bpos, bneg](detail::Node<S>& self) {
    auto& pn = *self.parents[0];
    const auto& gv = self.parents[1]->value;
    if (!pn.requires_grad) return;
    pn.ensure_grad();
    const S go = self.grad[0];
    for (Eigen::Index i = 0; i < pn.value.size(); ++i) {
      const S pv = pn.value[i];
      if (pv < lo || pv > hi) continue;
      pn.grad[i] += go * ((gv[i] == S(1)) ? -bpos / pv : bneg / (S(1) - pv));
    }
  });
  return out;
}

// beta derived from the ground truth: beta = |negatives| / |all|, so the
// scarcer boundary class carries the larger weight.
template <typename S>
Tensor<S> class_balanced_bce(const Tensor<S>& pred, const Tensor<S>& gt) {
  if (!(pred.shape() == gt.shape()))
    throw ShapeError("bce shape mismatch: " + pred.shape().str() + " vs " + gt.shape().str());
  const auto& g = gt.values();
  Eigen::Index pos = 0;
  for (Eigen::Index i = 0; i < g.size(); ++i)
    if (g[i] == S(1)) ++pos;
  const double beta = static_cast<double>(g.size() - pos) / static_cast<double>(g.size());
  return class_balanced_bce_with_beta(pred, gt, beta);
}

namespace detail {

template <typename S>
void check_flow_pair(const Tensor<S>& a, const Tensor<S>& b, const char* what) {
  if (!(a.shape() == b.shape()))
    throw ShapeError(std::string(what) + " shape mismatch: " + a.shape().str() + " vs " +
                     b.shape().str());
  if (a.shape().c != 2)
    throw ShapeError(std::string(what) + " expects 2-channel flow, got " + a.shape().str());
}

}  // namespace detail

// Mean endpoint error: average over pixels of the Euclidean norm of the flow
// difference. The norm's subgradient at zero is taken as zero.
template <typename S>
Tensor<S> epe(const Tensor<S>& F, const Tensor<S>& Fgt) {
  detail::check_flow_pair(F, Fgt, "epe");
  const Shape& s = F.shape();
  const Eigen::Index plane = s.h * s.w, npix = s.n * plane;
  const auto& a = F.values();
  const auto& b = Fgt.values();
  S acc = S(0);
  for (Eigen::Index n = 0; n < s.n; ++n) {
    const Eigen::Index u0 = n * 2 * plane, v0 = u0 + plane;
    for (Eigen::Index i = 0; i < plane; ++i) {
      const S du = a[u0 + i] - b[u0 + i];
      const S dv = a[v0 + i] - b[v0 + i];
      acc += std::sqrt(du * du + dv * dv);
    }
  }
  Tensor<S> out = Tensor<S>::with_node(Shape{1, 1, 1, 1});
  out.values()[0] = acc / static_cast<S>(npix);
  const Shape sc = s;
  detail::install_backward(out, {F, Fgt}, "epe", [sc, plane, npix](detail::Node<S>& self) {
    auto& fn = *self.parents[0];
    auto& gn = *self.parents[1];
    if (!fn.requires_grad && !gn.requires_grad) return;
    if (fn.requires_grad) fn.ensure_grad();
    if (gn.requires_grad) gn.ensure_grad();
    const S go = self.grad[0] / static_cast<S>(npix);
    for (Eigen::Index n = 0; n < sc.n; ++n) {
      const Eigen::Index u0 = n * 2 * plane, v0 = u0 + plane;
      for (Eigen::Index i = 0; i < plane; ++i) {
        const S du = fn.value[u0 + i] - gn.value[u0 + i];
        const S dv = fn.value[v0 + i] - gn.value[v0 + i];
        const S d = std::sqrt(du * du + dv * dv);
        if (d == S(0)) continue;
        const S cu = go * du / d, cv = go * dv / d;
        if (fn.requires_grad) {
          fn.grad[u0 + i] += cu;
          fn.grad[v0 + i] += cv;
        }
        if (gn.requires_grad) {
          gn.grad[u0 + i] -= cu;
          gn.grad[v0 + i] -= cv;
        }
      }
    }
  });
  return out;
}

// Fixed-filter convolution producing the four Prewitt responses of a
// 2-channel flow (x and y derivative per channel). Replicate padding keeps
// the extent and makes the response of a constant field exactly zero.
template <typename S>
Tensor<S> prewitt_responses(const Tensor<S>& flow) {
  if (flow.shape().c != 2)
    throw ShapeError("prewitt_responses expects 2-channel flow, got " + flow.shape().str());
  ArrayX<S> w = ArrayX<S>::Zero(4 * 2 * 9);
  const S px[9] = {-1, 0, 1, -1, 0, 1, -1, 0, 1};
  const S py[9] = {-1, -1, -1, 0, 0, 0, 1, 1, 1};
  for (int k = 0; k < 9; ++k) {
    w[(0 * 2 + 0) * 9 + k] = px[k];
    w[(1 * 2 + 0) * 9 + k] = py[k];
    w[(2 * 2 + 1) * 9 + k] = px[k];
    w[(3 * 2 + 1) * 9 + k] = py[k];
  }
  auto filt = Tensor<S>::from_values(Shape{4, 2, 3, 3}, std::move(w), false);
  return conv2d(pad_replicate(flow, 1), filt, 1, 0, 1);
}

// Mean squared difference of Prewitt responses, normalized by pixel count.
template <typename S>
Tensor<S> boundary_preserving_loss(const Tensor<S>& F, const Tensor<S>& Fgt) {
  detail::check_flow_pair(F, Fgt, "boundary_preserving_loss");
  const Shape& s = F.shape();
  auto diff = sub(prewitt_responses(F), prewitt_responses(Fgt));
  return scale(sum_squares(diff), 1.0 / static_cast<double>(s.n * s.h * s.w));
}

// Per-layer flow supervision: endpoint error plus the edge-preserving term.
template <typename S>
Tensor<S> flow_loss(const Tensor<S>& F, const Tensor<S>& Fgt) {
  return add(epe(F, Fgt), boundary_preserving_loss(F, Fgt));
}

// Deep supervision: every residue is added to the initial flow and compared
// with the ground truth; the per-layer losses are summed with equal weight.
template <typename S>
Tensor<S> combined_flow_loss(const std::vector<Tensor<S>>& residues, const Tensor<S>& f0,
                             const Tensor<S>& Fgt) {
  if (residues.empty()) throw ArgumentError("combined_flow_loss needs at least one residue");
  Tensor<S> total;
  for (const auto& r : residues) {
    auto term = flow_loss(add(f0, r), Fgt);
    total = total.valid() ? add(total, term) : term;
  }
  return total;
}

}  // namespace mobo
