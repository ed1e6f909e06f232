#pragma once

#include <cmath>

#include "mobonet/dataset.hpp"
#include "mobonet/flow.hpp"
#include "mobonet/image.hpp"
#include "mobonet/tensor.hpp"

namespace mobo {

// Nine-channel network input: RGB of the first frame, forward flow (u,v),
// forward warping error, backward flow (u,v), backward warping error. Flow
// channels are divided by the image diagonal so magnitudes stay O(1).
template <typename S>
Tensor<S> assemble_input_stack(const ImageFrame& frame1, const FlowField& fwd,
                               const GrayMap& fwd_err, const FlowField& bwd,
                               const GrayMap& bwd_err) {
  const int w = frame1.width, h = frame1.height;
  auto same = [&](int ww, int hh) { return ww == w && hh == h; };
  if (w <= 0 || h <= 0 || !same(fwd.width, fwd.height) || !same(fwd_err.width, fwd_err.height) ||
      !same(bwd.width, bwd.height) || !same(bwd_err.width, bwd_err.height))
    throw ShapeError("input stack: component extents disagree");

  const S inv_diag =
      static_cast<S>(1.0 / std::sqrt(static_cast<double>(w) * w + static_cast<double>(h) * h));
  Tensor<S> t = Tensor<S>::zeros(Shape{1, 9, h, w});
  auto& val = t.values();
  const Eigen::Index plane = static_cast<Eigen::Index>(h) * w;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const Eigen::Index i = static_cast<Eigen::Index>(y) * w + x;
      for (int c = 0; c < 3; ++c) val[c * plane + i] = static_cast<S>(frame1.at(c, x, y));
      val[3 * plane + i] = static_cast<S>(fwd.u(x, y)) * inv_diag;
      val[4 * plane + i] = static_cast<S>(fwd.v(x, y)) * inv_diag;
      val[5 * plane + i] = static_cast<S>(fwd_err.at(x, y));
      val[6 * plane + i] = static_cast<S>(bwd.u(x, y)) * inv_diag;
      val[7 * plane + i] = static_cast<S>(bwd.v(x, y)) * inv_diag;
      val[8 * plane + i] = static_cast<S>(bwd_err.at(x, y));
    }
  return t;
}

template <typename S>
Tensor<S> assemble_input_stack(const Sample& s) {
  return assemble_input_stack<S>(s.frame1, s.fwd_flow, s.warp_err_fwd, s.bwd_flow,
                                 s.warp_err_bwd);
}

template <typename S>
Tensor<S> graymap_to_tensor(const GrayMap& m) {
  Tensor<S> t = Tensor<S>::zeros(Shape{1, 1, m.height, m.width});
  auto& val = t.values();
  for (Eigen::Index i = 0; i < val.size(); ++i) val[i] = static_cast<S>(m.data[i]);
  return t;
}

template <typename S>
GrayMap tensor_to_graymap(const Tensor<S>& t) {
  const Shape& s = t.shape();
  if (s.n != 1 || s.c != 1) throw ShapeError("tensor_to_graymap expects a (1,1,H,W) tensor");
  GrayMap m(s.w, s.h);
  const auto& val = t.values();
  for (Eigen::Index i = 0; i < val.size(); ++i) m.data[i] = static_cast<float>(val[i]);
  return m;
}

}  // namespace mobo
