#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "mobonet/dataset.hpp"
#include "mobonet/eval.hpp"
#include "mobonet/fusion_net.hpp"
#include "mobonet/refinenet.hpp"

namespace mobo {

// batch_size samples contribute to each optimizer step (one iteration);
// their gradients are accumulated before the AdaGrad update.
struct TrainSettings {
  long iterations = 2000;
  std::uint64_t seed = 1;
  long divisor = 1000;   // shrinks the decay intervals for short runs
  double base_lr = 0.0;  // <= 0 selects the phase default
  int batch_size = 1;
};

// Reads the manifest and loads every sample into memory; desk-scale sets are
// small enough that streaming is not worth the nondeterminism risks.
std::vector<Sample> load_dataset(const std::string& manifest_path);

// Trains the boundary net in place with the class-balanced cross-entropy
// loss under AdaGrad and the boundary-phase schedule. Sample order is a
// seeded shuffle, reshuffled each epoch. Writes "iteration lr loss" lines to
// `log` when given; throws StateError if the loss stops being finite.
void train_boundary(RefineNet<float>& net, const std::vector<Sample>& data,
                    const TrainSettings& ts, std::ostream* log);

// Trains the fusion net against ground-truth flow with the per-layer
// supervised flow loss. The boundary net stays frozen and only supplies the
// probability maps, which are precomputed once per sample.
void train_fusion(FusionNet<float>& fnet, RefineNet<float>& boundary_net,
                  const std::vector<Sample>& data, const TrainSettings& ts, std::ostream* log);

// Forward passes for inference.
GrayMap infer_boundary(RefineNet<float>& net, const Sample& s);
FlowField infer_refined_flow(FusionNet<float>& fnet, const GrayMap& m, const FlowField& f0);

// Flow-gradient strength rescaled to [0,1] by the per-image maximum; the
// non-learned detector the boundary net is compared against.
GrayMap gradient_baseline_map(const FlowField& flow);

}  // namespace mobo
