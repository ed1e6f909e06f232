#include "mobonet/warp.hpp"

#include <algorithm>
#include <cmath>

namespace mobo {

float bilinear_sample(const float* plane, int width, int height, float x, float y) {
  x = std::min(std::max(x, 0.0f), static_cast<float>(width - 1));
  y = std::min(std::max(y, 0.0f), static_cast<float>(height - 1));
  const int x0 = static_cast<int>(x);
  const int y0 = static_cast<int>(y);
  const int x1 = std::min(x0 + 1, width - 1);
  const int y1 = std::min(y0 + 1, height - 1);
  const float fx = x - static_cast<float>(x0);
  const float fy = y - static_cast<float>(y0);
  const float a = plane[static_cast<std::size_t>(y0) * width + x0];
  const float b = plane[static_cast<std::size_t>(y0) * width + x1];
  const float c = plane[static_cast<std::size_t>(y1) * width + x0];
  const float d = plane[static_cast<std::size_t>(y1) * width + x1];
  return a * (1 - fx) * (1 - fy) + b * fx * (1 - fy) + c * (1 - fx) * fy + d * fx * fy;
}

ImageFrame backward_warp(const ImageFrame& frame2, const FlowField& flow) {
  if (frame2.width != flow.width || frame2.height != flow.height)
    throw ShapeError("backward_warp extent mismatch");
  ImageFrame out(frame2.width, frame2.height);
  const std::size_t plane = static_cast<std::size_t>(frame2.width) * frame2.height;
  for (int c = 0; c < 3; ++c) {
    const float* src = frame2.data.data() + c * plane;
    for (int y = 0; y < frame2.height; ++y)
      for (int x = 0; x < frame2.width; ++x)
        out.at(c, x, y) = bilinear_sample(src, frame2.width, frame2.height,
                                          static_cast<float>(x) + flow.u(x, y),
                                          static_cast<float>(y) + flow.v(x, y));
  }
  return out;
}

GrayMap warping_error(const ImageFrame& frame1, const ImageFrame& frame2, const FlowField& flow) {
  if (frame1.width != frame2.width || frame1.height != frame2.height ||
      frame1.width != flow.width || frame1.height != flow.height)
    throw ShapeError("warping_error extent mismatch");
  const ImageFrame warped = backward_warp(frame2, flow);
  GrayMap err(frame1.width, frame1.height);
  for (int y = 0; y < frame1.height; ++y)
    for (int x = 0; x < frame1.width; ++x) {
      float acc = 0.0f;
      for (int c = 0; c < 3; ++c) {
        const float d = frame1.at(c, x, y) - warped.at(c, x, y);
        acc += d * d;
      }
      err.at(x, y) = std::sqrt(acc);
    }
  return err;
}

GrayMap flow_gradient_magnitude(const FlowField& flow) {
  GrayMap mag(flow.width, flow.height);
  const int W = flow.width, H = flow.height;
  auto clampx = [W](int x) { return std::min(std::max(x, 0), W - 1); };
  auto clampy = [H](int y) { return std::min(std::max(y, 0), H - 1); };
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const int xl = clampx(x - 1), xr = clampx(x + 1);
      const int yu = clampy(y - 1), yd = clampy(y + 1);
      const float ux = (flow.u(xr, y) - flow.u(xl, y)) * 0.5f;
      const float uy = (flow.u(x, yd) - flow.u(x, yu)) * 0.5f;
      const float vx = (flow.v(xr, y) - flow.v(xl, y)) * 0.5f;
      const float vy = (flow.v(x, yd) - flow.v(x, yu)) * 0.5f;
      mag.at(x, y) = std::sqrt(ux * ux + uy * uy + vx * vx + vy * vy);
    }
  return mag;
}

GrayMap gt_boundaries_from_flow(const FlowField& flow, double threshold) {
  if (threshold <= 0) throw ArgumentError("gt_boundaries_from_flow: threshold must be positive");
  GrayMap mag = flow_gradient_magnitude(flow);
  for (float& v : mag.data) v = v > static_cast<float>(threshold) ? 1.0f : 0.0f;
  return mag;
}

}  // namespace mobo
