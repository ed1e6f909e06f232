#pragma once

#include <string>
#include <vector>

#include "mobonet/flow.hpp"
#include "mobonet/input_stack.hpp"
#include "mobonet/ops.hpp"
#include "mobonet/params.hpp"
#include "mobonet/refinenet.hpp"
#include "mobonet/rng.hpp"

namespace mobo {

struct FusionNetConfig {
  int layer_count = 8;
  int kernel = 5;
  int feature_maps = 64;

  void validate() const {
    if (layer_count < 1) throw ArgumentError("fusion net: layer_count must be >= 1");
    if (kernel < 1 || kernel % 2 == 0)
      throw ArgumentError("fusion net: kernel must be odd so padding preserves extents");
    if (feature_maps < 1) throw ArgumentError("fusion net: feature_maps must be >= 1");
  }
};

template <typename S>
struct FusionNet {
  FusionNetConfig cfg;
  ParamSet<S> params;
};

template <typename S>
FusionNet<S> build_fusion_net(const FusionNetConfig& cfg, Rng& rng) {
  cfg.validate();
  FusionNet<S> net;
  net.cfg = cfg;
  for (int k = 1; k <= cfg.layer_count; ++k) {
    // layer 1 sees (f0, m); later layers see (features, previous residue)
    const int in_ch = (k == 1) ? 3 : cfg.feature_maps + 2;
    const std::string id = std::to_string(k);
    detail::add_conv_param(net.params, "layer" + id, cfg.feature_maps, in_ch, cfg.kernel, rng,
                           false);
    detail::add_conv_param(net.params, "head" + id, 2, cfg.feature_maps, 1, rng, true);
  }
  return net;
}

template <typename S>
struct FusionForward {
  std::vector<Tensor<S>> residues;  // one 2-channel map per layer
  Tensor<S> f1;                     // f0 plus the last residue
};

// Differentiable forward pass on tensors. f0 is (1,2,H,W), m is (1,1,H,W);
// the per-layer residue heads are linear (no activation).
template <typename S>
FusionForward<S> forward_fusion(FusionNet<S>& net, const Tensor<S>& f0, const Tensor<S>& m) {
  const Shape& fs = f0.shape();
  const Shape& ms = m.shape();
  if (fs.n != 1 || fs.c != 2) throw ShapeError("forward_fusion: f0 must be (1,2,H,W)");
  if (ms.n != 1 || ms.c != 1 || ms.h != fs.h || ms.w != fs.w)
    throw ShapeError("forward_fusion: boundary map extents disagree with f0");

  const int pad = net.cfg.kernel / 2;
  FusionForward<S> out;
  Tensor<S> h, r;
  for (int k = 1; k <= net.cfg.layer_count; ++k) {
    const std::string id = std::to_string(k);
    Tensor<S> x = (k == 1) ? concat_channels(f0, m) : concat_channels(h, r);
    h = relu(conv2d(x, *net.params.find("layer" + id + "_w"),
                    *net.params.find("layer" + id + "_b"), 1, pad, 1));
    r = conv2d(h, *net.params.find("head" + id + "_w"), *net.params.find("head" + id + "_b"), 1,
               0, 1);
    out.residues.push_back(r);
  }
  out.f1 = add(f0, out.residues.back());
  return out;
}

struct FusionResult {
  std::vector<FlowField> residues;
  FlowField f1;
};

// Field-level convenience wrapper used by inference.
template <typename S>
FusionResult run_fusion(FusionNet<S>& net, const FlowField& f0, const GrayMap& m) {
  auto fwd = forward_fusion(net, flow_to_tensor<S>(f0), graymap_to_tensor<S>(m));
  FusionResult res;
  for (const auto& r : fwd.residues) res.residues.push_back(tensor_to_flow(r));
  res.f1 = tensor_to_flow(fwd.f1);
  return res;
}

}  // namespace mobo
