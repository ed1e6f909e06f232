#pragma once

#include <string>
#include <vector>

#include "mobonet/flow.hpp"
#include "mobonet/image.hpp"

namespace mobo {

// One training/evaluation record. fwd_flow/bwd_flow are the "initial"
// estimates a flow method would supply; gt_flow is exact. Warp-error maps are
// derived from the frames and the initial flows.
struct Sample {
  ImageFrame frame1, frame2;
  FlowField fwd_flow, bwd_flow, gt_flow;
  GrayMap warp_err_fwd, warp_err_bwd;
  GrayMap gt_boundary;  // binary
};

// Recomputes both warp-error maps from the frames and initial flows.
void refresh_warp_errors(Sample& s);

struct ManifestEntry {
  std::string frame1, frame2, fwd_flow, bwd_flow, gt_flow, gt_boundary;
};

// Manifest: one sample per line, six whitespace-separated paths
// (frame1 frame2 fwd_flow bwd_flow gt_flow gt_boundary), relative to the
// manifest's directory.
std::vector<ManifestEntry> read_manifest(const std::string& path);
void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);

// Loads the six files of an entry (paths must already be resolved) and
// derives the warp-error maps.
Sample load_sample(const ManifestEntry& entry);

// Writes the six files into dir with the given basename and returns the
// entry with dir-relative paths.
ManifestEntry save_sample(const std::string& dir, const std::string& basename, const Sample& s);

}  // namespace mobo
