#pragma once

#include "mobonet/flow.hpp"
#include "mobonet/image.hpp"

namespace mobo {

// Bilinear sample with the continuous coordinate clamped to the image
// rectangle, so border content is replicated outward.
float bilinear_sample(const float* plane, int width, int height, float x, float y);

// out(x,y) = frame2 sampled at (x+u, y+v).
ImageFrame backward_warp(const ImageFrame& frame2, const FlowField& flow);

// Per-pixel Euclidean RGB distance between frame1 and frame2 warped back
// through the flow.
GrayMap warping_error(const ImageFrame& frame1, const ImageFrame& frame2, const FlowField& flow);

// sqrt(|grad u|^2 + |grad v|^2), central differences with replicated borders.
GrayMap flow_gradient_magnitude(const FlowField& flow);

// Binary map: 1 where the flow gradient magnitude exceeds the threshold.
GrayMap gt_boundaries_from_flow(const FlowField& flow, double threshold);

}  // namespace mobo
