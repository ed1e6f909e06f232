#pragma once

#include <cmath>
#include <string>

#include "mobonet/ops.hpp"
#include "mobonet/params.hpp"
#include "mobonet/rng.hpp"

namespace mobo {

struct RefineNetConfig {
  int height = 320;
  int width = 448;
  int input_channels = 9;
  double width_multiplier = 1.0;
  int dilation1 = 2;  // conv-f-2
  int dilation2 = 4;  // conv-f-4

  void validate() const {
    if (height <= 0 || width <= 0 || height % 16 != 0 || width % 16 != 0)
      throw ArgumentError("refinenet: extents must be positive multiples of 16");
    if (input_channels < 1) throw ArgumentError("refinenet: input_channels must be >= 1");
    if (width_multiplier <= 0.0 || width_multiplier > 1.0)
      throw ArgumentError("refinenet: width_multiplier must lie in (0,1]");
    if (dilation1 < 1 || dilation2 < 1) throw ArgumentError("refinenet: dilations must be >= 1");
    if (ch(32) < 1) throw ArgumentError("refinenet: width_multiplier starves a layer");
  }

  // narrowed channel count; 32 is the narrowest base in the layer table
  int ch(int base) const {
    return static_cast<int>(std::llround(base * width_multiplier));
  }
};

template <typename S>
struct RefineNet {
  RefineNetConfig cfg;
  ParamSet<S> params;
};

// layer name -> output shape, in execution order
using ShapeTrace = std::vector<std::pair<std::string, Shape>>;

namespace detail {

template <typename S>
void add_conv_param(ParamSet<S>& ps, const std::string& name, int oc, int ic, int k, Rng& rng,
                    bool zero_init) {
  Tensor<S> w;
  if (zero_init) {
    w = Tensor<S>::zeros(Shape{oc, ic, k, k}, true);
  } else {
    // Gaussian scaled by fan-in, variance 2/fan_in
    const double sigma = std::sqrt(2.0 / (static_cast<double>(ic) * k * k));
    w = Tensor<S>::randn(Shape{oc, ic, k, k}, rng, sigma, true);
  }
  ps.add(name + "_w", std::move(w));
  ps.add(name + "_b", Tensor<S>::zeros(Shape{1, oc, 1, 1}, true));
}

template <typename S>
void add_deconv_param(ParamSet<S>& ps, const std::string& name, int ic, int oc, Rng& rng) {
  const double sigma = std::sqrt(2.0 / (static_cast<double>(ic) * 4));
  ps.add(name + "_w", Tensor<S>::randn(Shape{ic, oc, 2, 2}, rng, sigma, true));
  ps.add(name + "_b", Tensor<S>::zeros(Shape{1, oc, 1, 1}, true));
}

template <typename S>
Tensor<S> pconv(RefineNet<S>& net, const std::string& name, const Tensor<S>& x, int pad,
                int dil) {
  return conv2d(x, *net.params.find(name + "_w"), *net.params.find(name + "_b"), 1, pad, dil);
}

// Multi-scale fusion unit: five stacked convolutions, the second and fourth
// dilated; the output sums the unit input with the first, third and fifth
// activations. branch_mask is a verification hook (bit0 input path, bit1
// conv-f-1, bit2 conv-f-3, bit3 conv-f-5); inference uses all branches.
template <typename S>
Tensor<S> refine_block(RefineNet<S>& net, const std::string& prefix, const Tensor<S>& deconv_out,
                       const Tensor<S>& skip, unsigned branch_mask, ShapeTrace* trace) {
  const auto& cfg = net.cfg;
  auto rec = [&](const std::string& name, const Tensor<S>& t) {
    if (trace) trace->emplace_back(name, t.shape());
    return t;
  };
  auto x = rec(prefix + "_in", relu(pconv(net, prefix + "_in", concat_channels(deconv_out, skip),
                                          1, 1)));
  auto a1 = rec(prefix + "_f1", relu(pconv(net, prefix + "_f1", x, 1, 1)));
  auto a2 = rec(prefix + "_f2", relu(pconv(net, prefix + "_f2", a1, cfg.dilation1,
                                           cfg.dilation1)));
  auto a3 = rec(prefix + "_f3", relu(pconv(net, prefix + "_f3", a2, 1, 1)));
  auto a4 = rec(prefix + "_f4", relu(pconv(net, prefix + "_f4", a3, cfg.dilation2,
                                           cfg.dilation2)));
  auto a5 = rec(prefix + "_f5", relu(pconv(net, prefix + "_f5", a4, 1, 1)));
  Tensor<S> out;
  auto take = [&out](const Tensor<S>& t) { out = out.valid() ? add(out, t) : t; };
  if (branch_mask & 1u) take(x);
  if (branch_mask & 2u) take(a1);
  if (branch_mask & 4u) take(a3);
  if (branch_mask & 8u) take(a5);
  if (!out.valid()) throw ArgumentError("refine_block: empty branch mask");
  return rec(prefix, out);
}

}  // namespace detail

template <typename S>
RefineNet<S> build_refinenet(const RefineNetConfig& cfg, Rng& rng) {
  cfg.validate();
  RefineNet<S> net;
  net.cfg = cfg;
  auto& ps = net.params;
  const int c64 = cfg.ch(64), c128 = cfg.ch(128), c256 = cfg.ch(256), c512 = cfg.ch(512),
            c32 = cfg.ch(32);

  detail::add_conv_param(ps, "conv1", c64, cfg.input_channels, 3, rng, false);
  detail::add_conv_param(ps, "conv2", c64, c64, 3, rng, false);
  detail::add_conv_param(ps, "conv3", c128, c64, 3, rng, false);
  detail::add_conv_param(ps, "conv4", c128, c128, 3, rng, false);
  detail::add_conv_param(ps, "conv5", c256, c128, 3, rng, false);
  detail::add_conv_param(ps, "conv6", c256, c256, 3, rng, false);
  detail::add_conv_param(ps, "conv7", c512, c256, 3, rng, false);
  detail::add_conv_param(ps, "conv8", c512, c512, 3, rng, false);

  detail::add_deconv_param(ps, "deconv5", c512, c256, rng);
  detail::add_deconv_param(ps, "deconv4", c256, c128, rng);
  detail::add_deconv_param(ps, "deconv3", c128, c64, rng);
  detail::add_deconv_param(ps, "deconv2", c64, c32, rng);

  auto refine_params = [&](const std::string& prefix, int block_ch, int skip_ch) {
    detail::add_conv_param(ps, prefix + "_in", block_ch, block_ch + skip_ch, 3, rng, false);
    for (int i = 1; i <= 5; ++i)
      detail::add_conv_param(ps, prefix + "_f" + std::to_string(i), block_ch, block_ch, 3, rng,
                             false);
  };
  refine_params("refine1", c256, c512);
  refine_params("refine2", c128, c256);
  refine_params("refine3", c64, c128);
  refine_params("refine4", c32, c64);

  // probability head starts unbiased: sigmoid(0) = 1/2 everywhere
  detail::add_conv_param(ps, "head", 1, c32, 1, rng, true);
  return net;
}

// Runs the contraction and the four refinement blocks; returns the boundary
// probability map (1,1,H,W). branch_mask is forwarded to every multi-scale
// fusion unit (verification hook; keep 0xF for real use). When trace is given
// it receives every named layer output shape in execution order.
template <typename S>
Tensor<S> forward_refinenet(RefineNet<S>& net, const Tensor<S>& stack,
                            unsigned branch_mask = 0xFu, ShapeTrace* trace = nullptr) {
  const auto& cfg = net.cfg;
  const Shape& s = stack.shape();
  if (s.c != cfg.input_channels || s.h != cfg.height || s.w != cfg.width)
    throw ShapeError("refinenet input " + s.str() + " does not match the configuration");

  auto rec = [&](const std::string& name, const Tensor<S>& t) {
    if (trace) trace->emplace_back(name, t.shape());
    return t;
  };
  auto c1 = rec("conv1", relu(detail::pconv(net, "conv1", stack, 1, 1)));
  auto c2 = rec("conv2", relu(detail::pconv(net, "conv2", c1, 1, 1)));
  auto p1 = rec("pool1", maxpool2(c2));
  auto c3 = rec("conv3", relu(detail::pconv(net, "conv3", p1, 1, 1)));
  auto c4 = rec("conv4", relu(detail::pconv(net, "conv4", c3, 1, 1)));
  auto p2 = rec("pool2", maxpool2(c4));
  auto c5 = rec("conv5", relu(detail::pconv(net, "conv5", p2, 1, 1)));
  auto c6 = rec("conv6", relu(detail::pconv(net, "conv6", c5, 1, 1)));
  auto p3 = rec("pool3", maxpool2(c6));
  auto c7 = rec("conv7", relu(detail::pconv(net, "conv7", p3, 1, 1)));
  auto c8 = rec("conv8", relu(detail::pconv(net, "conv8", c7, 1, 1)));
  auto p4 = rec("pool4", maxpool2(c8));

  auto up = [&](const std::string& name, const Tensor<S>& x) {
    return rec(name, relu(transposed_conv2d(x, *net.params.find(name + "_w"),
                                            *net.params.find(name + "_b"))));
  };
  auto r1 = detail::refine_block(net, "refine1", up("deconv5", p4), c8, branch_mask, trace);
  auto r2 = detail::refine_block(net, "refine2", up("deconv4", r1), c6, branch_mask, trace);
  auto r3 = detail::refine_block(net, "refine3", up("deconv3", r2), c4, branch_mask, trace);
  auto r4 = detail::refine_block(net, "refine4", up("deconv2", r3), c2, branch_mask, trace);
  return sigmoid(detail::pconv(net, "head", r4, 0, 1));
}

}  // namespace mobo
