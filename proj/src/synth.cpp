#include "mobonet/synth.hpp"

#include <algorithm>
#include <cmath>

#include "mobonet/warp.hpp"

namespace mobo {

namespace {

// Polynomial sin/cos for the small angles the generator uses (|a| <= 0.2 rad).
// Keeps the sample content a pure function of the seed: no libm calls whose
// last bits could differ between platforms.
double sin_small(double a) {
  const double a2 = a * a;
  return a * (1.0 - a2 / 6.0 + a2 * a2 / 120.0 - a2 * a2 * a2 / 5040.0);
}
double cos_small(double a) {
  const double a2 = a * a;
  return 1.0 - a2 / 2.0 + a2 * a2 / 24.0 - a2 * a2 * a2 / 720.0;
}

// Bilinear value noise: a coarse random grid interpolated at continuous
// coordinates. Two octaves per channel, evaluable anywhere (clamped), so
// moving layers can be sampled at their source position analytically.
struct NoiseOctave {
  int gw = 0, gh = 0;
  double inv_cell = 0;
  std::vector<double> grid;

  void init(int width, int height, int cell, Rng& rng) {
    gw = width / cell + 3;
    gh = height / cell + 3;
    inv_cell = 1.0 / cell;
    grid.resize(static_cast<std::size_t>(gw) * gh);
    for (auto& g : grid) g = rng.uniform();
  }

  double sample(double x, double y) const {
    double gx = x * inv_cell, gy = y * inv_cell;
    gx = std::min(std::max(gx, 0.0), static_cast<double>(gw - 1));
    gy = std::min(std::max(gy, 0.0), static_cast<double>(gh - 1));
    const int x0 = std::min(static_cast<int>(gx), gw - 2);
    const int y0 = std::min(static_cast<int>(gy), gh - 2);
    const double fx = gx - x0, fy = gy - y0;
    const double a = grid[static_cast<std::size_t>(y0) * gw + x0];
    const double b = grid[static_cast<std::size_t>(y0) * gw + x0 + 1];
    const double c = grid[static_cast<std::size_t>(y0 + 1) * gw + x0];
    const double d = grid[static_cast<std::size_t>(y0 + 1) * gw + x0 + 1];
    return a * (1 - fx) * (1 - fy) + b * fx * (1 - fy) + c * (1 - fx) * fy + d * fx * fy;
  }
};

struct Texture {
  NoiseOctave coarse[3], fine[3];
  double tint[3] = {1, 1, 1};

  void init(int width, int height, int coarse_cell, int fine_cell, Rng& rng, bool tinted) {
    for (int c = 0; c < 3; ++c) coarse[c].init(width, height, coarse_cell, rng);
    for (int c = 0; c < 3; ++c) fine[c].init(width, height, fine_cell, rng);
    if (tinted)
      for (int c = 0; c < 3; ++c) tint[c] = 0.55 + 0.45 * rng.uniform();
  }

  float at(int c, double x, double y) const {
    const double v = 0.65 * coarse[c].sample(x, y) + 0.35 * fine[c].sample(x, y);
    return static_cast<float>(std::min(1.0, tint[c] * v));
  }
};

struct MovingShape {
  int type = 0;  // 0 rectangle, 1 disk
  double cx = 0, cy = 0, hx = 0, hy = 0;
  double tx = 0, ty = 0, cos_a = 1, sin_a = 0;
  Texture tex;

  bool contains(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    if (type == 0) return std::abs(dx) <= hx && std::abs(dy) <= hy;
    return dx * dx + dy * dy <= hx * hx;
  }
  double radius() const { return type == 0 ? std::sqrt(hx * hx + hy * hy) : hx; }

  // x' = R (x - c) + c + t
  void fwd(double x, double y, double& ox, double& oy) const {
    const double dx = x - cx, dy = y - cy;
    ox = cos_a * dx - sin_a * dy + cx + tx;
    oy = sin_a * dx + cos_a * dy + cy + ty;
  }
  void inv(double x, double y, double& ox, double& oy) const {
    const double dx = x - cx - tx, dy = y - cy - ty;
    ox = cos_a * dx + sin_a * dy + cx;
    oy = -sin_a * dx + cos_a * dy + cy;
  }
};

float drop_negzero(float v) { return v == 0.0f ? 0.0f : v; }

void box_blur_flow(FlowField& f) {
  FlowField src = f;
  const int W = f.width, H = f.height;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      float su = 0, sv = 0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int sx = std::min(std::max(x + dx, 0), W - 1);
          const int sy = std::min(std::max(y + dy, 0), H - 1);
          su += src.u(sx, sy);
          sv += src.v(sx, sy);
        }
      f.u(x, y) = su / 9.0f;
      f.v(x, y) = sv / 9.0f;
    }
}

}  // namespace

Sample synth_sample(const SynthConfig& cfg, int index) {
  if (cfg.width % 16 != 0 || cfg.height % 16 != 0 || cfg.width <= 0 || cfg.height <= 0)
    throw ArgumentError("synth: extents must be positive multiples of 16");
  if (cfg.noise_sigma < 0) throw ArgumentError("synth: negative noise sigma");
  if (cfg.smooth_passes < 0) throw ArgumentError("synth: negative smooth passes");

  Rng rng(cfg.seed + static_cast<std::uint64_t>(index));
  const int W = cfg.width, H = cfg.height;

  Texture bg;
  bg.init(W, H, 7, 3, rng, false);
  const double bg_tx = rng.uniform(-1.0, 1.0);
  const double bg_ty = rng.uniform(-1.0, 1.0);

  const int want = rng.uniform_int(1, 3);
  std::vector<MovingShape> shapes;
  const double margin = 8.0;
  for (int k = 0; k < want; ++k) {
    MovingShape s;
    s.type = rng.uniform_int(0, 1);
    s.hx = rng.uniform(4.0, 9.0);
    s.hy = s.type == 0 ? rng.uniform(4.0, 9.0) : s.hx;
    // per-axis translation bounded away from the background's so the flow
    // jump across every contour clears the 0.5 px/frame labeling threshold
    const double lo = cfg.rotations ? 4.0 : 2.5;
    s.tx = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(lo, 6.0);
    s.ty = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(lo, 6.0);
    if (cfg.rotations) {
      const double ang = rng.uniform(-0.0873, 0.0873);  // ~5 degrees
      s.cos_a = cos_small(ang);
      s.sin_a = sin_small(ang);
    }
    bool placed = false;
    for (int attempt = 0; attempt < 40 && !placed; ++attempt) {
      const double r = s.radius();
      const double xlo = r + margin, xhi = W - 1 - r - margin;
      const double ylo = r + margin, yhi = H - 1 - r - margin;
      if (xlo >= xhi || ylo >= yhi) break;
      s.cx = rng.uniform(xlo, xhi);
      s.cy = rng.uniform(ylo, yhi);
      placed = true;
      for (const auto& other : shapes) {
        const double dx = s.cx - other.cx, dy = s.cy - other.cy;
        const double sep = r + other.radius() + 14.0;
        if (dx * dx + dy * dy < sep * sep) {
          placed = false;
          break;
        }
      }
    }
    if (!placed) continue;
    s.tex.init(W, H, 5, 2, rng, true);
    shapes.push_back(s);
  }

  Sample out;
  out.frame1 = ImageFrame(W, H);
  out.frame2 = ImageFrame(W, H);
  out.gt_boundary = GrayMap(W, H);
  FlowField gt_fwd(W, H), gt_bwd(W, H);

  // frame-1 labels, colors and forward flow
  std::vector<int> label(static_cast<std::size_t>(W) * H, -1);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      int l = -1;
      for (int k = static_cast<int>(shapes.size()) - 1; k >= 0; --k)
        if (shapes[k].contains(x, y)) {
          l = k;
          break;
        }
      label[static_cast<std::size_t>(y) * W + x] = l;
      if (l < 0) {
        for (int c = 0; c < 3; ++c) out.frame1.at(c, x, y) = bg.at(c, x, y);
        gt_fwd.u(x, y) = drop_negzero(static_cast<float>(bg_tx));
        gt_fwd.v(x, y) = drop_negzero(static_cast<float>(bg_ty));
      } else {
        for (int c = 0; c < 3; ++c) out.frame1.at(c, x, y) = shapes[l].tex.at(c, x, y);
        double nx, ny;
        shapes[l].fwd(x, y, nx, ny);
        gt_fwd.u(x, y) = drop_negzero(static_cast<float>(nx - x));
        gt_fwd.v(x, y) = drop_negzero(static_cast<float>(ny - y));
      }
    }

  // frame-2 content and analytic backward flow via inverse motions
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      int l = -1;
      double sx = 0, sy = 0;
      for (int k = static_cast<int>(shapes.size()) - 1; k >= 0; --k) {
        double ix, iy;
        shapes[k].inv(x, y, ix, iy);
        if (shapes[k].contains(ix, iy)) {
          l = k;
          sx = ix;
          sy = iy;
          break;
        }
      }
      if (l < 0) {
        sx = x - bg_tx;
        sy = y - bg_ty;
        for (int c = 0; c < 3; ++c) out.frame2.at(c, x, y) = bg.at(c, sx, sy);
      } else {
        for (int c = 0; c < 3; ++c) out.frame2.at(c, x, y) = shapes[l].tex.at(c, sx, sy);
      }
      gt_bwd.u(x, y) = drop_negzero(static_cast<float>(sx - x));
      gt_bwd.v(x, y) = drop_negzero(static_cast<float>(sy - y));
    }

  // boundary = frame-1 label changes toward the right/down neighbor
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const int l = label[static_cast<std::size_t>(y) * W + x];
      bool edge = false;
      if (x + 1 < W && label[static_cast<std::size_t>(y) * W + x + 1] != l) edge = true;
      if (y + 1 < H && label[(static_cast<std::size_t>(y) + 1) * W + x] != l) edge = true;
      out.gt_boundary.at(x, y) = edge ? 1.0f : 0.0f;
    }

  // initial flows: ground truth degraded by noise and optional smoothing
  out.gt_flow = gt_fwd;
  out.fwd_flow = std::move(gt_fwd);
  out.bwd_flow = std::move(gt_bwd);
  if (cfg.noise_sigma > 0) {
    for (auto& v : out.fwd_flow.data)
      v = drop_negzero(v + static_cast<float>(rng.normal(0.0, cfg.noise_sigma)));
    for (auto& v : out.bwd_flow.data)
      v = drop_negzero(v + static_cast<float>(rng.normal(0.0, cfg.noise_sigma)));
  }
  for (int p = 0; p < cfg.smooth_passes; ++p) {
    box_blur_flow(out.fwd_flow);
    box_blur_flow(out.bwd_flow);
  }
  refresh_warp_errors(out);
  return out;
}

std::vector<Sample> synth_dataset(const SynthConfig& cfg) {
  if (cfg.count < 0) throw ArgumentError("synth: negative count");
  std::vector<Sample> out;
  out.reserve(cfg.count);
  for (int i = 0; i < cfg.count; ++i) out.push_back(synth_sample(cfg, i));
  return out;
}

}  // namespace mobo
