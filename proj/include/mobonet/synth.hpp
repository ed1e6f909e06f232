#pragma once

#include <cstdint>
#include <vector>

#include "mobonet/dataset.hpp"
#include "mobonet/rng.hpp"

namespace mobo {

struct SynthConfig {
  int width = 64;
  int height = 64;
  int count = 1;
  std::uint64_t seed = 1;
  double noise_sigma = 0.5;  // Gaussian noise on the initial flows, px/frame
  int smooth_passes = 0;     // 3x3 box blurs applied to the noisy initial flows
  bool rotations = false;    // small shape rotations in addition to translation
};

// Textured background plus 1-3 non-overlapping textured shapes under
// independent rigid motions; analytic forward/backward ground-truth flow;
// boundary labels from the frame-1 shape contours. Deterministic per seed:
// sample i draws everything from an engine seeded with seed + i.
std::vector<Sample> synth_dataset(const SynthConfig& cfg);
Sample synth_sample(const SynthConfig& cfg, int index);

}  // namespace mobo
