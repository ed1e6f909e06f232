#pragma once

#include "mobonet/dataset.hpp"
#include "mobonet/rng.hpp"

namespace mobo {

struct AugmentParams {
  double tx = 0, ty = 0;           // translation, fraction of width/height, [-0.15, 0.15]
  double rotation_deg = 0;         // [-20, 20]
  double scale = 1;                // [0.8, 1.8]
  double noise_sigma = 0;          // additive Gaussian on frames, [0, 0.05]
  double color[3] = {1, 1, 1};     // per-channel multiplier, [0.8, 1.6]
  double gamma = 1;                // [0.6, 1.6]
  double brightness = 0;           // additive offset, drawn from N(0, 0.15)
};

AugmentParams sample_augment_params(Rng& rng);

// Similarity warp about the image center applied consistently to frames
// (bilinear), flows (resampled and vector-rotated/scaled) and the boundary
// mask (nearest neighbor). No range validation; augment() adds that.
void geometric_similarity(Sample& s, double scale, double rotation_deg, double tx_px,
                          double ty_px);

// Full augmentation: validated geometric transform, then photometric changes
// on the frames only, then warp errors recomputed. `rng` drives the noise.
Sample augment(const Sample& s, const AugmentParams& params, Rng& rng);

}  // namespace mobo
