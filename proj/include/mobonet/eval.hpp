#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mobonet/errors.hpp"
#include "mobonet/flow.hpp"
#include "mobonet/image.hpp"

namespace mobo {

struct PRPoint {
  double threshold = 0.0;
  double precision = 1.0;
  double recall = 1.0;
  std::uint64_t tp = 0, fp = 0, fn = 0;
};

// 0.01, 0.02, ..., 0.99
std::vector<double> default_thresholds();

struct EvalConfig {
  std::vector<double> thresholds = default_thresholds();
  // match tolerance in pixels = tol_frac * image diagonal
  double tol_frac = 0.0075;
  bool nms = true;
  // mAP is pooled over the dataset by default; this switches to averaging
  // per-image APs instead
  bool per_image = false;

  void validate() const {
    if (thresholds.empty()) throw ArgumentError("eval: threshold list is empty");
    double prev = 0.0;
    for (double t : thresholds) {
      if (t <= prev || t >= 1.0)
        throw ArgumentError("eval: thresholds must be strictly increasing inside (0,1)");
      prev = t;
    }
    if (tol_frac <= 0.0) throw ArgumentError("eval: tol_frac must be positive");
  }
};

// Non-maximal suppression along the local gradient direction. The map is
// smoothed with a sigma-1 Gaussian to estimate orientation; a pixel survives
// if its value is >= both bilinearly interpolated neighbors one pixel away
// along +/- the gradient. Where the smoothed gradient vanishes (flat areas,
// exact crests) the pixel must instead be strictly greater than both of its
// axis neighbors along x or along y, so a constant map is fully suppressed.
// Survivors keep their value; everything else becomes 0.
GrayMap nms_thin(const GrayMap& prob);

struct MatchCounts {
  std::uint64_t tp = 0, fp = 0, fn = 0;
};

// One-to-one matching of predicted boundary pixels (value >= 0.5) to ground
// truth pixels within a Euclidean tolerance. Predictions are visited in
// row-major order and take their nearest unmatched ground-truth pixel;
// augmenting paths then grow the matching to maximum cardinality, so the
// counts agree with optimal assignment.
MatchCounts match_boundaries(const GrayMap& pred_binary, const GrayMap& gt_binary,
                             double tolerance_px);

// Pooled precision/recall sweep. Probability maps are NMS-thinned once (when
// cfg.nms), binarized at each threshold with strict >, and matched against
// the ground truth; counts pool over all frames.
std::vector<PRPoint> pr_curve(const std::vector<GrayMap>& prob_maps,
                              const std::vector<GrayMap>& gt_maps, const EvalConfig& cfg);

// Trapezoidal area under P(R) after sorting by recall and prepending a
// (recall 0, first precision) anchor.
double average_precision(const std::vector<PRPoint>& curve);

// Pooled AP over the whole set, or the mean of per-image APs when
// cfg.per_image is set.
double mean_average_precision(const std::vector<GrayMap>& prob_maps,
                              const std::vector<GrayMap>& gt_maps, const EvalConfig& cfg);

// Mean endpoint error over every pixel of every frame (pixel-pooled, not a
// mean of per-frame means).
double epe_stats(const std::vector<FlowField>& pred_flows,
                 const std::vector<FlowField>& gt_flows);

// Text table, one "threshold tp fp fn precision recall" line per threshold
// and a trailing "AP value" line; formatting is fixed so reruns diff cleanly.
std::string pr_table(const std::vector<PRPoint>& curve);

}  // namespace mobo
