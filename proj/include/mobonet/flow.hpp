#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "mobonet/errors.hpp"
#include "mobonet/tensor.hpp"

namespace mobo {

// Per-pixel displacement field in pixels/frame, (u,v) interleaved row-major.
struct FlowField {
  int width = 0;
  int height = 0;
  std::vector<float> data;

  FlowField() = default;
  FlowField(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 2, 0.f) {}

  float& u(int x, int y) { return data[2 * (static_cast<std::size_t>(y) * width + x)]; }
  float& v(int x, int y) { return data[2 * (static_cast<std::size_t>(y) * width + x) + 1]; }
  float u(int x, int y) const { return data[2 * (static_cast<std::size_t>(y) * width + x)]; }
  float v(int x, int y) const { return data[2 * (static_cast<std::size_t>(y) * width + x) + 1]; }
};

FlowField read_flo(std::istream& is);
FlowField read_flo(const std::string& path);
void write_flo(std::ostream& os, const FlowField& flow);
void write_flo(const std::string& path, const FlowField& flow);

// Planar (1,2,H,W) tensor view of a flow field, u plane then v plane.
template <typename S>
Tensor<S> flow_to_tensor(const FlowField& f) {
  Tensor<S> t = Tensor<S>::zeros(Shape{1, 2, f.height, f.width});
  auto& val = t.values();
  const Eigen::Index plane = static_cast<Eigen::Index>(f.height) * f.width;
  for (int y = 0; y < f.height; ++y)
    for (int x = 0; x < f.width; ++x) {
      const Eigen::Index i = static_cast<Eigen::Index>(y) * f.width + x;
      val[i] = static_cast<S>(f.u(x, y));
      val[plane + i] = static_cast<S>(f.v(x, y));
    }
  return t;
}

template <typename S>
FlowField tensor_to_flow(const Tensor<S>& t) {
  const Shape& s = t.shape();
  if (s.n != 1 || s.c != 2)
    throw ShapeError("tensor_to_flow expects a (1,2,H,W) tensor, got " + s.str());
  FlowField f(static_cast<int>(s.w), static_cast<int>(s.h));
  const auto& val = t.values();
  const Eigen::Index plane = s.h * s.w;
  for (int y = 0; y < f.height; ++y)
    for (int x = 0; x < f.width; ++x) {
      const Eigen::Index i = static_cast<Eigen::Index>(y) * f.width + x;
      f.u(x, y) = static_cast<float>(val[i]);
      f.v(x, y) = static_cast<float>(val[plane + i]);
    }
  return f;
}

}  // namespace mobo
