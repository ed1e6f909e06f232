#include "mobonet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "mobonet/io_util.hpp"

namespace mobo {

std::vector<double> default_thresholds() {
  std::vector<double> t(99);
  for (int k = 1; k <= 99; ++k) t[k - 1] = k / 100.0;
  return t;
}

namespace {

float clamped(const GrayMap& m, int x, int y) {
  x = std::clamp(x, 0, m.width - 1);
  y = std::clamp(y, 0, m.height - 1);
  return m.at(x, y);
}

double bilinear(const GrayMap& m, double x, double y) {
  x = std::clamp(x, 0.0, static_cast<double>(m.width - 1));
  y = std::clamp(y, 0.0, static_cast<double>(m.height - 1));
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, m.width - 1);
  const int y1 = std::min(y0 + 1, m.height - 1);
  const double fx = x - x0, fy = y - y0;
  return (1 - fy) * ((1 - fx) * m.at(x0, y0) + fx * m.at(x1, y0)) +
         fy * ((1 - fx) * m.at(x0, y1) + fx * m.at(x1, y1));
}

GrayMap gauss_sigma1(const GrayMap& in) {
  // 7-tap sigma-1 kernel, replicate borders
  double taps[7];
  double norm = 0.0;
  for (int k = -3; k <= 3; ++k) {
    taps[k + 3] = std::exp(-0.5 * k * k);
    norm += taps[k + 3];
  }
  for (double& t : taps) t /= norm;

  GrayMap tmp(in.width, in.height), out(in.width, in.height);
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x) {
      double acc = 0.0;
      for (int k = -3; k <= 3; ++k) acc += taps[k + 3] * clamped(in, x + k, y);
      tmp.at(x, y) = static_cast<float>(acc);
    }
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x) {
      double acc = 0.0;
      for (int k = -3; k <= 3; ++k) acc += taps[k + 3] * clamped(tmp, x, y + k);
      out.at(x, y) = static_cast<float>(acc);
    }
  return out;
}

}  // namespace

GrayMap nms_thin(const GrayMap& prob) {
  const GrayMap smooth = gauss_sigma1(prob);
  GrayMap out(prob.width, prob.height);
  for (int y = 0; y < prob.height; ++y)
    for (int x = 0; x < prob.width; ++x) {
      const double gx = 0.5 * (clamped(smooth, x + 1, y) - clamped(smooth, x - 1, y));
      const double gy = 0.5 * (clamped(smooth, x, y + 1) - clamped(smooth, x, y - 1));
      const double mag = std::hypot(gx, gy);
      const float p = prob.at(x, y);
      bool keep;
      if (mag > 0.0) {
        const double ux = gx / mag, uy = gy / mag;
        keep = p >= bilinear(prob, x + ux, y + uy) && p >= bilinear(prob, x - ux, y - uy);
      } else {
        keep = (p > clamped(prob, x - 1, y) && p > clamped(prob, x + 1, y)) ||
               (p > clamped(prob, x, y - 1) && p > clamped(prob, x, y + 1));
      }
      out.at(x, y) = keep ? p : 0.0f;
    }
  return out;
}

namespace {

struct Pixel {
  int x, y;
};

std::vector<Pixel> boundary_pixels(const GrayMap& m) {
  std::vector<Pixel> px;
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x)
      if (m.at(x, y) >= 0.5f) px.push_back({x, y});
  return px;
}

// Kuhn's augmenting-path step over the tolerance graph.
bool try_augment(int pi, const std::vector<std::vector<int>>& adj, std::vector<char>& visited,
                 std::vector<int>& gt_owner, std::vector<int>& pred_match) {
  for (int g : adj[pi]) {
    if (visited[g]) continue;
    visited[g] = 1;
    if (gt_owner[g] < 0 || try_augment(gt_owner[g], adj, visited, gt_owner, pred_match)) {
      gt_owner[g] = pi;
      pred_match[pi] = g;
      return true;
    }
  }
  return false;
}

}  // namespace

MatchCounts match_boundaries(const GrayMap& pred_binary, const GrayMap& gt_binary,
                             double tolerance_px) {
  if (pred_binary.width != gt_binary.width || pred_binary.height != gt_binary.height)
    throw ShapeError("match_boundaries: prediction and ground truth extents differ");
  if (tolerance_px < 0.0) throw ArgumentError("match_boundaries: negative tolerance");

  const auto pred = boundary_pixels(pred_binary);
  const auto gt = boundary_pixels(gt_binary);
  const double tol2 = tolerance_px * tolerance_px;

  // candidate ground-truth pixels per prediction, nearest first; ties keep
  // row-major order, which boundary_pixels already provides
  std::vector<std::vector<int>> adj(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    std::vector<std::pair<double, int>> cand;
    for (std::size_t g = 0; g < gt.size(); ++g) {
      const double dx = pred[i].x - gt[g].x, dy = pred[i].y - gt[g].y;
      const double d2 = dx * dx + dy * dy;
      if (d2 <= tol2) cand.emplace_back(d2, static_cast<int>(g));
    }
    std::stable_sort(cand.begin(), cand.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    adj[i].reserve(cand.size());
    for (const auto& c : cand) adj[i].push_back(c.second);
  }

  std::vector<int> gt_owner(gt.size(), -1), pred_match(pred.size(), -1);
  for (std::size_t i = 0; i < pred.size(); ++i)
    for (int g : adj[i]) {
      if (gt_owner[g] >= 0) continue;
      gt_owner[g] = static_cast<int>(i);
      pred_match[i] = g;
      break;
    }
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred_match[i] >= 0) continue;
    std::vector<char> visited(gt.size(), 0);
    try_augment(static_cast<int>(i), adj, visited, gt_owner, pred_match);
  }

  MatchCounts c;
  for (int m : pred_match)
    if (m >= 0) ++c.tp;
  c.fp = pred.size() - c.tp;
  c.fn = gt.size() - c.tp;
  return c;
}

std::vector<PRPoint> pr_curve(const std::vector<GrayMap>& prob_maps,
                              const std::vector<GrayMap>& gt_maps, const EvalConfig& cfg) {
  cfg.validate();
  if (prob_maps.empty() || prob_maps.size() != gt_maps.size())
    throw ArgumentError("pr_curve: probability and ground-truth lists are misaligned");

  std::vector<GrayMap> thinned;
  thinned.reserve(prob_maps.size());
  for (const auto& p : prob_maps) thinned.push_back(cfg.nms ? nms_thin(p) : p);

  std::vector<PRPoint> curve(cfg.thresholds.size());
  for (std::size_t ti = 0; ti < cfg.thresholds.size(); ++ti) {
    const double t = cfg.thresholds[ti];
    PRPoint& pt = curve[ti];
    pt.threshold = t;
    for (std::size_t i = 0; i < thinned.size(); ++i) {
      const GrayMap& pm = thinned[i];
      const GrayMap& gm = gt_maps[i];
      GrayMap bin(pm.width, pm.height);
      for (std::size_t j = 0; j < pm.data.size(); ++j)
        bin.data[j] = pm.data[j] > t ? 1.0f : 0.0f;
      const double tol =
          cfg.tol_frac * std::sqrt(static_cast<double>(gm.width) * gm.width +
                                   static_cast<double>(gm.height) * gm.height);
      const MatchCounts c = match_boundaries(bin, gm, tol);
      pt.tp += c.tp;
      pt.fp += c.fp;
      pt.fn += c.fn;
    }
    pt.precision = (pt.tp + pt.fp) ? static_cast<double>(pt.tp) / (pt.tp + pt.fp) : 1.0;
    pt.recall = (pt.tp + pt.fn) ? static_cast<double>(pt.tp) / (pt.tp + pt.fn) : 1.0;
  }
  return curve;
}

double average_precision(const std::vector<PRPoint>& curve) {
  if (curve.empty()) throw ArgumentError("average_precision: empty curve");
  std::vector<std::pair<double, double>> rp;
  rp.reserve(curve.size() + 1);
  for (const auto& pt : curve) rp.emplace_back(pt.recall, pt.precision);
  std::stable_sort(rp.begin(), rp.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  rp.insert(rp.begin(), {0.0, rp.front().second});
  double area = 0.0;
  for (std::size_t i = 1; i < rp.size(); ++i)
    area += (rp[i].first - rp[i - 1].first) * 0.5 * (rp[i].second + rp[i - 1].second);
  return area;
}

double mean_average_precision(const std::vector<GrayMap>& prob_maps,
                              const std::vector<GrayMap>& gt_maps, const EvalConfig& cfg) {
  if (!cfg.per_image) return average_precision(pr_curve(prob_maps, gt_maps, cfg));
  if (prob_maps.empty() || prob_maps.size() != gt_maps.size())
    throw ArgumentError("mean_average_precision: misaligned lists");
  double sum = 0.0;
  for (std::size_t i = 0; i < prob_maps.size(); ++i)
    sum += average_precision(pr_curve({prob_maps[i]}, {gt_maps[i]}, cfg));
  return sum / static_cast<double>(prob_maps.size());
}

double epe_stats(const std::vector<FlowField>& pred_flows,
                 const std::vector<FlowField>& gt_flows) {
  if (pred_flows.empty() || pred_flows.size() != gt_flows.size())
    throw ArgumentError("epe_stats: flow lists are misaligned");
  double sum = 0.0;
  std::uint64_t count = 0;
  for (std::size_t i = 0; i < pred_flows.size(); ++i) {
    const FlowField& p = pred_flows[i];
    const FlowField& g = gt_flows[i];
    if (p.width != g.width || p.height != g.height)
      throw ShapeError("epe_stats: flow extents differ at frame " + std::to_string(i));
    for (int y = 0; y < p.height; ++y)
      for (int x = 0; x < p.width; ++x) {
        const double du = static_cast<double>(p.u(x, y)) - g.u(x, y);
        const double dv = static_cast<double>(p.v(x, y)) - g.v(x, y);
        sum += std::sqrt(du * du + dv * dv);
        ++count;
      }
  }
  return sum / static_cast<double>(count);
}

std::string pr_table(const std::vector<PRPoint>& curve) {
  std::string out = "threshold tp fp fn precision recall\n";
  for (const auto& pt : curve) {
    out += format_fixed(pt.threshold, 2);
    out += ' ';
    out += std::to_string(pt.tp);
    out += ' ';
    out += std::to_string(pt.fp);
    out += ' ';
    out += std::to_string(pt.fn);
    out += ' ';
    out += format_fixed(pt.precision, 6);
    out += ' ';
    out += format_fixed(pt.recall, 6);
    out += '\n';
  }
  out += "AP " + format_fixed(average_precision(curve), 6) + "\n";
  return out;
}

}  // namespace mobo
