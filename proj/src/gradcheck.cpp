#include "mobonet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "mobonet/losses.hpp"
#include "mobonet/ops.hpp"
#include "mobonet/rng.hpp"

namespace mobo {
namespace {

using T = Tensor<double>;
// Builds a scalar loss from the differentiable inputs; called repeatedly with
// perturbed values, so it must rebuild the graph every time.
using Builder = std::function<T(std::vector<T>&)>;

constexpr double kStep = 1e-5;
// Central differences are meaningless across a kink (relu hinge, maxpool
// argmax switch). When halving the step changes the estimate noticeably the
// element is skipped instead of reported as a gradient error.
constexpr double kKinkGuard = 1e-3;

double fd_max_rel(const Builder& build, std::vector<T>& inputs) {
  T loss = build(inputs);
  backward(loss);
  std::vector<Eigen::ArrayXd> analytic;
  analytic.reserve(inputs.size());
  for (auto& in : inputs) {
    analytic.push_back(in.grad());
    in.clear_grad();
  }

  auto eval = [&]() { return build(inputs).scalar(); };
  double worst = 0.0;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    auto& vals = inputs[t].values();
    for (Eigen::Index i = 0; i < vals.size(); ++i) {
      const double orig = vals[i];
      vals[i] = orig + kStep;
      const double fp = eval();
      vals[i] = orig - kStep;
      const double fm = eval();
      vals[i] = orig + kStep / 2;
      const double fp2 = eval();
      vals[i] = orig - kStep / 2;
      const double fm2 = eval();
      vals[i] = orig;

      const double fd = (fp - fm) / (2 * kStep);
      const double fd_half = (fp2 - fm2) / kStep;
      const double drift =
          std::abs(fd - fd_half) / std::max({std::abs(fd), std::abs(fd_half), 1e-6});
      if (drift > kKinkGuard && std::abs(fd - fd_half) > 1e-9) continue;

      const double a = analytic[t][i];
      const double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-6});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

T rand_t(Rng& rng, const Shape& s, double sigma = 1.0) {
  return T::randn(s, rng, sigma, true);
}

struct Sweep {
  Rng& rng;
  int instances;
  std::vector<GradCheckEntry> entries;

  void op(const std::string& name,
          const std::function<void(std::vector<T>&, Builder&)>& make_case) {
    GradCheckEntry e{name, 0.0, instances};
    for (int i = 0; i < instances; ++i) {
      std::vector<T> inputs;
      Builder build;
      make_case(inputs, build);
      e.max_rel_err = std::max(e.max_rel_err, fd_max_rel(build, inputs));
    }
    entries.push_back(e);
  }
};

}  // namespace

std::vector<GradCheckEntry> run_gradcheck(std::uint64_t seed, int instances) {
  Rng rng(seed);
  Sweep sw{rng, instances, {}};

  sw.op("conv2d", [&](std::vector<T>& in, Builder& b) {
    const int stride = 1 + static_cast<int>(rng.next_u64() % 2);
    const int pad = static_cast<int>(rng.next_u64() % 2);
    const int dil = 1 + static_cast<int>(rng.next_u64() % 2);
    const int k = 3, h = 6 + static_cast<int>(rng.next_u64() % 3), w = 6 + static_cast<int>(rng.next_u64() % 3);
    in = {rand_t(rng, Shape{2, 3, h, w}), rand_t(rng, Shape{2, 3, k, k}),
          rand_t(rng, Shape{1, 2, 1, 1})};
    b = [stride, pad, dil](std::vector<T>& v) {
      return sum_squares(conv2d(v[0], v[1], v[2], stride, pad, dil));
    };
  });

  sw.op("conv2d_nobias", [&](std::vector<T>& in, Builder& b) {
    in = {rand_t(rng, Shape{1, 2, 5, 5}), rand_t(rng, Shape{3, 2, 3, 3})};
    b = [](std::vector<T>& v) { return sum_squares(conv2d(v[0], v[1], 1, 1, 1)); };
  });

  sw.op("transposed_conv2d", [&](std::vector<T>& in, Builder& b) {
    in = {rand_t(rng, Shape{2, 3, 4, 5}), rand_t(rng, Shape{3, 2, 2, 2}),
          rand_t(rng, Shape{1, 2, 1, 1})};
    b = [](std::vector<T>& v) { return sum_squares(transposed_conv2d(v[0], v[1], v[2])); };
  });

  sw.op("maxpool2", [&](std::vector<T>& in, Builder& b) {
    in = {rand_t(rng, Shape{2, 2, 6, 4})};
    b = [](std::vector<T>& v) { return sum_squares(maxpool2(v[0])); };
  });

  sw.op("relu", [&](std::vector<T>& in, Builder& b) {
    in = {rand_t(rng, Shape{2, 3, 4, 4})};
    b = [](std::vector<T>& v) { return sum_squares(relu(v[0])); };
  });

  sw.op("sigmoid", [&](std::vector<T>& in, Builder& b) {
    in = {rand_t(rng, Shape{2, 2, 3, 5}, 2.0)};
    b = [](std::vector<T>& v) { return sum_squares(sigmoid(v[0])); };
  });

  sw.op("add", [&](std::vector<T>& in, Builder& b) {
    in = {rand_t(rng, Shape{2, 2, 3, 3}), rand_t(rng, Shape{2, 2, 3, 3})};
    b = [](std::vector<T>& v) { return sum_squares(add(v[0], v[1])); };
  });

  sw.op("sub", [&](std::vector<T>& in, Builder& b) {
    in = {rand_t(rng, Shape{2, 2, 3, 3}), rand_t(rng, Shape{2, 2, 3, 3})};
    b = [](std::vector<T>& v) { return sum_squares(sub(v[0], v[1])); };
  });

  sw.op("scale", [&](std::vector<T>& in, Builder& b) {
    const double f = rng.uniform(-2.0, 2.0);
    in = {rand_t(rng, Shape{1, 3, 4, 4})};
    b = [f](std::vector<T>& v) { return sum_squares(scale(v[0], f)); };
  });

  sw.op("concat_channels", [&](std::vector<T>& in, Builder& b) {
    in = {rand_t(rng, Shape{2, 2, 4, 3}), rand_t(rng, Shape{2, 3, 4, 3})};
    b = [](std::vector<T>& v) { return sum_squares(concat_channels(v[0], v[1])); };
  });

  sw.op("pad_replicate", [&](std::vector<T>& in, Builder& b) {
    const int p = 1 + static_cast<int>(rng.next_u64() % 2);
    in = {rand_t(rng, Shape{2, 2, 4, 5})};
    b = [p](std::vector<T>& v) { return sum_squares(pad_replicate(v[0], p)); };
  });

  sw.op("sum", [&](std::vector<T>& in, Builder& b) {
    in = {rand_t(rng, Shape{2, 3, 3, 4})};
    b = [](std::vector<T>& v) { return sum(v[0]); };
  });

  sw.op("sum_squares", [&](std::vector<T>& in, Builder& b) {
    in = {rand_t(rng, Shape{2, 3, 3, 4})};
    b = [](std::vector<T>& v) { return sum_squares(v[0]); };
  });

  sw.op("class_balanced_bce", [&](std::vector<T>& in, Builder& b) {
    const int h = 5, w = 6;
    T p = T::zeros(Shape{1, 1, h, w}, true);
    T y = T::zeros(Shape{1, 1, h, w}, false);
    for (Eigen::Index i = 0; i < p.values().size(); ++i) {
      p.values()[i] = rng.uniform(0.05, 0.95);
      y.values()[i] = (rng.next_u64() % 3 == 0) ? 1.0 : 0.0;
    }
    in = {p};
    b = [y](std::vector<T>& v) { return class_balanced_bce(v[0], y); };
  });

  sw.op("epe", [&](std::vector<T>& in, Builder& b) {
    T gt = T::randn(Shape{1, 2, 5, 6}, rng, 1.0, false);
    in = {rand_t(rng, Shape{1, 2, 5, 6})};
    b = [gt](std::vector<T>& v) { return epe(v[0], gt); };
  });

  sw.op("boundary_preserving_loss", [&](std::vector<T>& in, Builder& b) {
    T gt = T::randn(Shape{1, 2, 6, 6}, rng, 1.0, false);
    in = {rand_t(rng, Shape{1, 2, 6, 6})};
    b = [gt](std::vector<T>& v) { return boundary_preserving_loss(v[0], gt); };
  });

  sw.op("flow_loss", [&](std::vector<T>& in, Builder& b) {
    T gt = T::randn(Shape{1, 2, 5, 5}, rng, 1.0, false);
    in = {rand_t(rng, Shape{1, 2, 5, 5})};
    b = [gt](std::vector<T>& v) { return flow_loss(v[0], gt); };
  });

  sw.op("combined_flow_loss", [&](std::vector<T>& in, Builder& b) {
    T gt = T::randn(Shape{1, 2, 5, 5}, rng, 1.0, false);
    T f0 = T::randn(Shape{1, 2, 5, 5}, rng, 1.0, false);
    in = {rand_t(rng, Shape{1, 2, 5, 5}), rand_t(rng, Shape{1, 2, 5, 5})};
    b = [gt, f0](std::vector<T>& v) {
      return combined_flow_loss(std::vector<T>{v[0], v[1]}, f0, gt);
    };
  });

  return sw.entries;
}

}  // namespace mobo
