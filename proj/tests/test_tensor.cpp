#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "mobonet/ops.hpp"
#include "mobonet/rng.hpp"
#include "mobonet/tensor.hpp"
#include "test_util.hpp"

using mobo::Shape;
using mobo::Tensor;

namespace {

Tensor<double> ones(const Shape& s, bool rg = false) {
  return Tensor<double>::filled(s, 1.0, rg);
}

}  // namespace

TEST_CASE("shape bookkeeping") {
  Shape s{2, 3, 4, 5};
  CHECK(s.numel() == 120);
  CHECK(s.str() == "2x3x4x5");
  auto t = Tensor<double>::zeros(s);
  CHECK(t.numel() == 120);
  CHECK(t.values().size() == 120);
  CHECK_FALSE(t.requires_grad());
  CHECK_THROWS_AS((void)t.scalar(), mobo::ArgumentError);
  CHECK_THROWS_AS((void)std::as_const(t).grad(), mobo::StateError);
}

TEST_CASE("conv2d hand values: ones kernel counts footprint") {
  auto x = ones({1, 1, 3, 3});
  auto w = ones({1, 1, 3, 3});
  auto b = Tensor<double>::zeros({1, 1, 1, 1});
  auto y = mobo::conv2d(x, w, b, 1, 1, 1);
  REQUIRE(y.shape() == Shape{1, 1, 3, 3});
  CHECK(y.values()[4] == doctest::Approx(9.0));   // center
  CHECK(y.values()[0] == doctest::Approx(4.0));   // corner
  CHECK(y.values()[1] == doctest::Approx(6.0));   // edge
}

TEST_CASE("conv2d size formula") {
  mobo::Rng rng(1);
  auto x = testutil::random_tensor({1, 2, 7, 7}, rng, 1.0, false);
  auto w = testutil::random_tensor({3, 2, 3, 3}, rng, 1.0, false);
  // dilation 2 with pad 2 keeps the extent (effective kernel 5)
  CHECK(mobo::conv2d(x, w, 1, 2, 2).shape() == Shape{1, 3, 7, 7});
  CHECK(mobo::conv2d(x, w, 2, 1, 1).shape() == Shape{1, 3, 4, 4});
  CHECK(mobo::conv2d(x, w, 1, 0, 1).shape() == Shape{1, 3, 5, 5});
  CHECK_THROWS_AS(mobo::conv2d(x, w, 0, 0, 1), mobo::ArgumentError);
  CHECK_THROWS_AS(mobo::conv2d(x, w, 1, 0, 0), mobo::ArgumentError);
  auto wbad = testutil::random_tensor({3, 5, 3, 3}, rng, 1.0, false);
  CHECK_THROWS_AS(mobo::conv2d(x, wbad, 1, 1, 1), mobo::ShapeError);
}

TEST_CASE("conv2d matches the naive six-loop oracle") {
  mobo::Rng rng(7);
  struct Cfg {
    Shape xs, ws;
    int stride, pad, dil;
  };
  const Cfg cfgs[] = {
      {{2, 3, 8, 8}, {4, 3, 3, 3}, 1, 1, 1},
      {{1, 1, 5, 5}, {2, 1, 3, 3}, 1, 0, 1},
      {{2, 2, 9, 7}, {3, 2, 3, 3}, 2, 1, 1},
      {{1, 3, 10, 10}, {2, 3, 3, 3}, 1, 2, 2},
      {{1, 2, 12, 11}, {2, 2, 5, 5}, 1, 2, 1},
      {{1, 1, 6, 6}, {1, 1, 1, 1}, 1, 0, 1},
  };
  for (const auto& cfg : cfgs) {
    auto x = testutil::random_tensor(cfg.xs, rng, 1.0, false);
    auto w = testutil::random_tensor(cfg.ws, rng, 1.0, false);
    Eigen::ArrayXd bias = Eigen::ArrayXd::Zero(cfg.ws.n);
    for (Eigen::Index i = 0; i < bias.size(); ++i) bias[i] = rng.normal();
    auto bt = Tensor<double>::from_values({1, cfg.ws.n, 1, 1}, bias);
    Shape os;
    Eigen::ArrayXd ref = testutil::naive_conv2d(x.values(), cfg.xs, w.values(), cfg.ws, &bias,
                                                cfg.stride, cfg.pad, cfg.dil, os);
    auto y = mobo::conv2d(x, w, bt, cfg.stride, cfg.pad, cfg.dil);
    REQUIRE(y.shape() == os);
    CHECK((y.values() - ref).abs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("conv2d finite-difference gradients") {
  mobo::Rng rng(11);
  double worst = 0.0;
  for (int inst = 0; inst < 20; ++inst) {
    auto x = testutil::random_tensor({2, 3, 8, 8}, rng);
    auto w = testutil::random_tensor({4, 3, 3, 3}, rng, 0.5);
    auto b = testutil::random_tensor({1, 4, 1, 1}, rng, 0.5);
    const int stride = 1 + inst % 2, pad = inst % 3, dil = 1 + inst % 2;
    auto rep = testutil::fd_check(
        [&](std::vector<Tensor<double>>& in) {
          return mobo::sum_squares(mobo::conv2d(in[0], in[1], in[2], stride, pad, dil));
        },
        {x, w, b}, 1e-5);
    worst = std::max(worst, rep.max_rel_err);
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("transposed_conv2d hand values and shape") {
  auto x = Tensor<double>::filled({1, 1, 1, 1}, 3.5);
  auto w = ones({1, 1, 2, 2});
  auto b = Tensor<double>::zeros({1, 1, 1, 1});
  auto y = mobo::transposed_conv2d(x, w, b);
  REQUIRE(y.shape() == Shape{1, 1, 2, 2});
  for (int i = 0; i < 4; ++i) CHECK(y.values()[i] == doctest::Approx(3.5));

  mobo::Rng rng(3);
  auto big = testutil::random_tensor({1, 256, 20, 28}, rng, 1.0, false);
  auto wk = testutil::random_tensor({256, 256, 2, 2}, rng, 0.05, false);
  CHECK(mobo::transposed_conv2d(big, wk, Tensor<double>()).shape() == Shape{1, 256, 40, 56});
  CHECK_THROWS_AS(mobo::transposed_conv2d(x, ones({1, 1, 3, 3}), b), mobo::ShapeError);
  CHECK_THROWS_AS(mobo::transposed_conv2d(x, w, b, 1), mobo::ArgumentError);
}

TEST_CASE("transposed_conv2d matches direct scatter oracle") {
  mobo::Rng rng(13);
  for (int inst = 0; inst < 5; ++inst) {
    Shape xs{1 + inst % 2, 3, 4, 5};
    const Eigen::Index oc = 2 + inst % 3;
    auto x = testutil::random_tensor(xs, rng, 1.0, false);
    auto w = testutil::random_tensor({xs.c, oc, 2, 2}, rng, 1.0, false);
    Eigen::ArrayXd bias(oc);
    for (Eigen::Index i = 0; i < oc; ++i) bias[i] = rng.normal();
    auto bt = Tensor<double>::from_values({1, oc, 1, 1}, bias);
    Shape os;
    Eigen::ArrayXd ref = testutil::naive_transposed_conv2d(x.values(), xs, w.values(), oc, &bias, os);
    auto y = mobo::transposed_conv2d(x, w, bt);
    REQUIRE(y.shape() == os);
    CHECK((y.values() - ref).abs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("transposed_conv2d finite-difference gradients") {
  mobo::Rng rng(17);
  double worst = 0.0;
  for (int inst = 0; inst < 20; ++inst) {
    auto x = testutil::random_tensor({1, 3, 4, 4}, rng);
    auto w = testutil::random_tensor({3, 2, 2, 2}, rng, 0.5);
    auto b = testutil::random_tensor({1, 2, 1, 1}, rng, 0.5);
    auto rep = testutil::fd_check(
        [&](std::vector<Tensor<double>>& in) {
          return mobo::sum_squares(mobo::transposed_conv2d(in[0], in[1], in[2]));
        },
        {x, w, b}, 1e-5);
    worst = std::max(worst, rep.max_rel_err);
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("maxpool2 values, argmax routing, ties") {
  auto x = Tensor<double>::from_values({1, 1, 2, 2}, (Eigen::ArrayXd(4) << 1, 2, 3, 4).finished(),
                                       true);
  auto y = mobo::maxpool2(x);
  REQUIRE(y.shape() == Shape{1, 1, 1, 1});
  CHECK(y.values()[0] == 4.0);
  mobo::backward(mobo::sum(y));
  CHECK(x.grad()[3] == 1.0);
  CHECK(x.grad()[0] == 0.0);

  // all-equal window: gradient goes to the first element in row-major order
  auto t = Tensor<double>::filled({1, 1, 2, 2}, 5.0, true);
  mobo::backward(mobo::sum(mobo::maxpool2(t)));
  CHECK(t.grad()[0] == 1.0);
  CHECK(t.grad()[1] == 0.0);
  CHECK(t.grad()[2] == 0.0);
  CHECK(t.grad()[3] == 0.0);

  CHECK_THROWS_AS(mobo::maxpool2(Tensor<double>::zeros({1, 1, 3, 4})), mobo::ShapeError);

  auto big = Tensor<double>::zeros({1, 64, 320, 448});
  CHECK(mobo::maxpool2(big).shape() == Shape{1, 64, 160, 224});
}

TEST_CASE("maxpool2 finite-difference gradients (distinct windows)") {
  mobo::Rng rng(19);
  double worst = 0.0;
  for (int inst = 0; inst < 20; ++inst) {
    auto x = testutil::random_tensor({2, 2, 6, 6}, rng);
    auto rep = testutil::fd_check(
        [&](std::vector<Tensor<double>>& in) { return mobo::sum_squares(mobo::maxpool2(in[0])); },
        {x}, 1e-5, 0.05);
    worst = std::max(worst, rep.max_rel_err);
    CHECK(rep.checked > 0);
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("relu and sigmoid hand values") {
  auto x = Tensor<double>::from_values({1, 1, 1, 3},
                                       (Eigen::ArrayXd(3) << -2.0, 0.0, 3.0).finished(), true);
  auto y = mobo::relu(x);
  CHECK(y.values()[0] == 0.0);
  CHECK(y.values()[1] == 0.0);
  CHECK(y.values()[2] == 3.0);
  mobo::backward(mobo::sum(y));
  CHECK(x.grad()[0] == 0.0);
  CHECK(x.grad()[1] == 0.0);  // subgradient at 0 pinned to 0
  CHECK(x.grad()[2] == 1.0);

  auto z = Tensor<double>::zeros({1, 1, 1, 1});
  CHECK(mobo::sigmoid(z).values()[0] == doctest::Approx(0.5));
  auto neg = Tensor<double>::filled({1, 1, 1, 1}, -800.0);
  CHECK(std::isfinite(mobo::sigmoid(neg).values()[0]));
  auto pos = Tensor<double>::filled({1, 1, 1, 1}, 800.0);
  CHECK(mobo::sigmoid(pos).values()[0] <= 1.0);
}

TEST_CASE("elementwise and structural op finite-difference gradients") {
  mobo::Rng rng(23);
  double worst = 0.0;
  for (int inst = 0; inst < 20; ++inst) {
    auto a = testutil::random_tensor({2, 3, 5, 4}, rng);
    auto b = testutil::random_tensor({2, 3, 5, 4}, rng);
    auto c = testutil::random_tensor({2, 2, 5, 4}, rng);
    auto rep = testutil::fd_check(
        [&](std::vector<Tensor<double>>& in) {
          auto lhs = mobo::sigmoid(mobo::sub(in[0], mobo::scale(in[1], 0.7)));
          auto cat = mobo::concat_channels(lhs, mobo::relu(in[2]));
          auto pad = mobo::pad_replicate(cat, 2);
          return mobo::add(mobo::sum_squares(pad), mobo::sum(mobo::add(in[0], in[1])));
        },
        {a, b, c}, 1e-5, 0.05);
    worst = std::max(worst, rep.max_rel_err);
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("concat_channels stacks channels") {
  auto a = Tensor<double>::filled({1, 2, 2, 2}, 1.0, true);
  auto b = Tensor<double>::filled({1, 3, 2, 2}, 2.0, true);
  auto y = mobo::concat_channels(a, b);
  REQUIRE(y.shape() == Shape{1, 5, 2, 2});
  CHECK(y.values()[0] == 1.0);
  CHECK(y.values()[2 * 4] == 2.0);
  CHECK(mobo::concat_channels(Tensor<double>::zeros({1, 256, 4, 4}),
                              Tensor<double>::zeros({1, 256, 4, 4}))
            .shape() == Shape{1, 512, 4, 4});
  CHECK_THROWS_AS(mobo::concat_channels(a, Tensor<double>::zeros({1, 2, 3, 2})),
                  mobo::ShapeError);
  mobo::backward(mobo::sum(mobo::scale(y, 3.0)));
  CHECK(a.grad()[0] == 3.0);
  CHECK(b.grad()[0] == 3.0);
}

TEST_CASE("pad_replicate copies the border") {
  auto x = Tensor<double>::from_values({1, 1, 2, 2},
                                       (Eigen::ArrayXd(4) << 1, 2, 3, 4).finished());
  auto y = mobo::pad_replicate(x, 1);
  REQUIRE(y.shape() == Shape{1, 1, 4, 4});
  CHECK(y.values()[0] == 1.0);   // top-left corner replicates (0,0)
  CHECK(y.values()[3] == 2.0);   // top-right replicates (0,1)
  CHECK(y.values()[5] == 1.0);   // interior untouched
  CHECK(y.values()[15] == 4.0);
  CHECK_THROWS_AS(mobo::pad_replicate(x, -1), mobo::ArgumentError);
  auto same = mobo::pad_replicate(x, 0);
  CHECK((same.values() - x.values()).abs().maxCoeff() == 0.0);
}

TEST_CASE("backward basics: fan-out accumulation and trivial grads") {
  auto x = Tensor<double>::filled({1, 1, 2, 3}, 2.0, true);
  mobo::backward(mobo::sum(mobo::relu(x)));
  for (Eigen::Index i = 0; i < x.numel(); ++i) CHECK(x.grad()[i] == 1.0);

  auto z = Tensor<double>::filled({1, 1, 2, 3}, -1.5, true);
  mobo::backward(mobo::sum(mobo::add(z, z)));
  for (Eigen::Index i = 0; i < z.numel(); ++i) CHECK(z.grad()[i] == 2.0);

  // diamond: y = sum((x+x) + relu(x)) with x>0 gives grad 3
  auto d = Tensor<double>::filled({1, 1, 1, 4}, 0.5, true);
  mobo::backward(mobo::sum(mobo::add(mobo::add(d, d), mobo::relu(d))));
  for (Eigen::Index i = 0; i < d.numel(); ++i) CHECK(d.grad()[i] == 3.0);

  CHECK_THROWS_AS(mobo::backward(mobo::relu(x)), mobo::ArgumentError);
}

TEST_CASE("forward and backward are bitwise deterministic") {
  auto run = [](std::uint64_t seed, Eigen::ArrayXd& out_vals, Eigen::ArrayXd& out_grad) {
    mobo::Rng rng(seed);
    auto x = testutil::random_tensor({2, 3, 8, 8}, rng);
    auto w = testutil::random_tensor({4, 3, 3, 3}, rng, 0.5);
    auto b = testutil::random_tensor({1, 4, 1, 1}, rng, 0.5);
    auto y = mobo::maxpool2(mobo::relu(mobo::conv2d(x, w, b, 1, 1, 1)));
    auto loss = mobo::sum_squares(y);
    mobo::backward(loss);
    out_vals = y.values();
    out_grad = w.grad();
  };
  Eigen::ArrayXd v1, g1, v2, g2;
  run(42, v1, g1);
  run(42, v2, g2);
  REQUIRE(v1.size() == v2.size());
  for (Eigen::Index i = 0; i < v1.size(); ++i) CHECK(v1[i] == v2[i]);
  for (Eigen::Index i = 0; i < g1.size(); ++i) CHECK(g1[i] == g2[i]);
}

TEST_CASE("gradient accumulates across backward calls until cleared") {
  auto x = Tensor<double>::filled({1, 1, 1, 2}, 1.0, true);
  mobo::backward(mobo::sum(x));
  mobo::backward(mobo::sum(x));
  CHECK(x.grad()[0] == 2.0);
  x.clear_grad();
  CHECK_FALSE(x.has_grad());
  mobo::backward(mobo::sum(x));
  CHECK(x.grad()[0] == 1.0);
}

TEST_CASE("float instantiation works for the training path") {
  mobo::Rng rng(5);
  auto x = mobo::Tensor<float>::randn({1, 2, 4, 4}, rng, 1.0, true);
  auto w = mobo::Tensor<float>::randn({2, 2, 3, 3}, rng, 0.5, true);
  auto y = mobo::relu(mobo::conv2d(x, w, 1, 1, 1));
  auto loss = mobo::sum_squares(y);
  mobo::backward(loss);
  CHECK(std::isfinite(loss.scalar()));
  CHECK(w.grad().abs().sum() > 0.0f);
}
