#include "mobonet/augment.hpp"

#include <cmath>

#include "mobonet/warp.hpp"

namespace mobo {

AugmentParams sample_augment_params(Rng& rng) {
  AugmentParams p;
  p.tx = rng.uniform(-0.15, 0.15);
  p.ty = rng.uniform(-0.15, 0.15);
  p.rotation_deg = rng.uniform(-20.0, 20.0);
  p.scale = rng.uniform(0.8, 1.8);
  p.noise_sigma = rng.uniform(0.0, 0.05);
  for (int c = 0; c < 3; ++c) p.color[c] = rng.uniform(0.8, 1.6);
  p.gamma = rng.uniform(0.6, 1.6);
  p.brightness = rng.normal(0.0, 0.15);
  return p;
}

namespace {

void validate(const AugmentParams& p) {
  auto bad = [](const char* what) {
    throw ArgumentError(std::string("augment: ") + what + " out of range");
  };
  if (p.tx < -0.15 || p.tx > 0.15 || p.ty < -0.15 || p.ty > 0.15) bad("translation");
  if (p.rotation_deg < -20.0 || p.rotation_deg > 20.0) bad("rotation");
  if (p.scale < 0.8 || p.scale > 1.8) bad("scale");
  if (p.noise_sigma < 0.0 || p.noise_sigma > 0.05) bad("noise sigma");
  for (int c = 0; c < 3; ++c)
    if (p.color[c] < 0.8 || p.color[c] > 1.6) bad("color multiplier");
  if (p.gamma < 0.6 || p.gamma > 1.6) bad("gamma");
  if (!std::isfinite(p.brightness)) bad("brightness");
}

}  // namespace

void geometric_similarity(Sample& s, double scale, double rotation_deg, double tx_px,
                          double ty_px) {
  const int W = s.frame1.width, H = s.frame1.height;
  const double rad = rotation_deg * (3.14159265358979323846 / 180.0);
  const double ca = std::cos(rad), sa = std::sin(rad);
  const double cx = (W - 1) * 0.5, cy = (H - 1) * 0.5;
  // forward map A(x) = s R (x - c) + c + t; sampling needs the inverse
  auto inv = [&](double x, double y, double& ox, double& oy) {
    const double dx = (x - cx - tx_px) / scale, dy = (y - cy - ty_px) / scale;
    ox = ca * dx + sa * dy + cx;
    oy = -sa * dx + ca * dy + cy;
  };

  ImageFrame f1(W, H), f2(W, H);
  const std::size_t plane = static_cast<std::size_t>(W) * H;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double sx, sy;
      inv(x, y, sx, sy);
      for (int c = 0; c < 3; ++c) {
        f1.at(c, x, y) = bilinear_sample(s.frame1.data.data() + c * plane, W, H,
                                         static_cast<float>(sx), static_cast<float>(sy));
        f2.at(c, x, y) = bilinear_sample(s.frame2.data.data() + c * plane, W, H,
                                         static_cast<float>(sx), static_cast<float>(sy));
      }
    }

  auto warp_flow = [&](const FlowField& src) {
    // flow planes are interleaved; gather u and v separately for sampling
    std::vector<float> up(plane), vp(plane);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        up[static_cast<std::size_t>(y) * W + x] = src.u(x, y);
        vp[static_cast<std::size_t>(y) * W + x] = src.v(x, y);
      }
    FlowField dst(W, H);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        double sx, sy;
        inv(x, y, sx, sy);
        const double u0 = bilinear_sample(up.data(), W, H, static_cast<float>(sx),
                                          static_cast<float>(sy));
        const double v0 = bilinear_sample(vp.data(), W, H, static_cast<float>(sx),
                                          static_cast<float>(sy));
        // displacement vectors rotate and scale with the geometry
        dst.u(x, y) = static_cast<float>(scale * (ca * u0 - sa * v0));
        dst.v(x, y) = static_cast<float>(scale * (sa * u0 + ca * v0));
      }
    return dst;
  };
  FlowField fwd = warp_flow(s.fwd_flow);
  FlowField bwd = warp_flow(s.bwd_flow);
  FlowField gt = warp_flow(s.gt_flow);

  GrayMap boundary(W, H);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double sx, sy;
      inv(x, y, sx, sy);
      const int nx = std::min(std::max(static_cast<int>(std::lround(sx)), 0), W - 1);
      const int ny = std::min(std::max(static_cast<int>(std::lround(sy)), 0), H - 1);
      boundary.at(x, y) = s.gt_boundary.at(nx, ny);
    }

  s.frame1 = std::move(f1);
  s.frame2 = std::move(f2);
  s.fwd_flow = std::move(fwd);
  s.bwd_flow = std::move(bwd);
  s.gt_flow = std::move(gt);
  s.gt_boundary = std::move(boundary);
}

Sample augment(const Sample& s, const AugmentParams& params, Rng& rng) {
  validate(params);
  Sample out = s;
  const int W = s.frame1.width, H = s.frame1.height;
  geometric_similarity(out, params.scale, params.rotation_deg, params.tx * W, params.ty * H);

  for (int c = 0; c < 3; ++c) {
    const float mul = static_cast<float>(params.color[c]);
    const float gam = static_cast<float>(params.gamma);
    const float off = static_cast<float>(params.brightness);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        float v = out.frame1.at(c, x, y) * mul;
        float w = out.frame2.at(c, x, y) * mul;
        if (params.gamma != 1.0) {
          v = std::pow(std::max(v, 0.0f), gam);
          w = std::pow(std::max(w, 0.0f), gam);
        }
        out.frame1.at(c, x, y) = v + off;
        out.frame2.at(c, x, y) = w + off;
      }
  }
  if (params.noise_sigma > 0) {
    for (auto& v : out.frame1.data) v += static_cast<float>(rng.normal(0.0, params.noise_sigma));
    for (auto& v : out.frame2.data) v += static_cast<float>(rng.normal(0.0, params.noise_sigma));
  }
  for (auto& v : out.frame1.data) v = std::min(std::max(v, 0.0f), 1.0f);
  for (auto& v : out.frame2.data) v = std::min(std::max(v, 0.0f), 1.0f);

  refresh_warp_errors(out);
  return out;
}

}  // namespace mobo
