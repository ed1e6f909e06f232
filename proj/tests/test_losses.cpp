#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "mobonet/losses.hpp"
#include "mobonet/optim.hpp"
#include "mobonet/rng.hpp"
#include "test_util.hpp"

using mobo::Shape;
using mobo::Tensor;

namespace {

// Scalar-loop reference for the class-balanced cross entropy.
double bce_oracle(const Eigen::ArrayXd& p, const Eigen::ArrayXd& g, double beta) {
  double loss = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double pc = std::min(std::max(p[i], 1e-7), 1.0 - 1e-7);
    loss -= (g[i] == 1.0) ? beta * std::log(pc) : (1.0 - beta) * std::log(1.0 - pc);
  }
  return loss;
}

double beta_of(const Eigen::ArrayXd& g) {
  Eigen::Index pos = 0;
  for (Eigen::Index i = 0; i < g.size(); ++i)
    if (g[i] == 1.0) ++pos;
  return static_cast<double>(g.size() - pos) / static_cast<double>(g.size());
}

// Scalar-loop reference for mean endpoint error on (1,2,h,w) fields.
double epe_oracle(const Eigen::ArrayXd& f, const Eigen::ArrayXd& gt, Eigen::Index h,
                  Eigen::Index w) {
  double acc = 0.0;
  const Eigen::Index plane = h * w;
  for (Eigen::Index i = 0; i < plane; ++i) {
    const double du = f[i] - gt[i];
    const double dv = f[plane + i] - gt[plane + i];
    acc += std::sqrt(du * du + dv * dv);
  }
  return acc / static_cast<double>(plane);
}

// Scalar-loop Prewitt with replicate border, both filters on both channels.
double bpl_oracle(const Eigen::ArrayXd& f, const Eigen::ArrayXd& gt, Eigen::Index h,
                  Eigen::Index w) {
  const int px[3][3] = {{-1, 0, 1}, {-1, 0, 1}, {-1, 0, 1}};
  const int py[3][3] = {{-1, -1, -1}, {0, 0, 0}, {1, 1, 1}};
  auto at = [&](const Eigen::ArrayXd& a, Eigen::Index c, Eigen::Index y, Eigen::Index x) {
    y = std::clamp<Eigen::Index>(y, 0, h - 1);
    x = std::clamp<Eigen::Index>(x, 0, w - 1);
    return a[c * h * w + y * w + x];
  };
  double acc = 0.0;
  for (Eigen::Index c = 0; c < 2; ++c)
    for (Eigen::Index y = 0; y < h; ++y)
      for (Eigen::Index x = 0; x < w; ++x) {
        double rx = 0, ry = 0, gx = 0, gy = 0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            rx += px[dy + 1][dx + 1] * at(f, c, y + dy, x + dx);
            ry += py[dy + 1][dx + 1] * at(f, c, y + dy, x + dx);
            gx += px[dy + 1][dx + 1] * at(gt, c, y + dy, x + dx);
            gy += py[dy + 1][dx + 1] * at(gt, c, y + dy, x + dx);
          }
        acc += (rx - gx) * (rx - gx) + (ry - gy) * (ry - gy);
      }
  return acc / static_cast<double>(h * w);
}

Eigen::ArrayXd random_binary(Eigen::Index n, mobo::Rng& rng, double p1 = 0.3) {
  Eigen::ArrayXd g(n);
  for (Eigen::Index i = 0; i < n; ++i) g[i] = rng.uniform() < p1 ? 1.0 : 0.0;
  return g;
}

Eigen::ArrayXd random_probs(Eigen::Index n, mobo::Rng& rng) {
  Eigen::ArrayXd p(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double z = std::clamp(rng.normal(0.0, 2.0), -8.0, 8.0);
    p[i] = 1.0 / (1.0 + std::exp(-z));
  }
  return p;
}

}  // namespace

TEST_CASE("balanced bce hand cases") {
  // no boundary pixels: the negative-class weight 1-beta vanishes
  auto pred = Tensor<double>::filled({1, 1, 2, 2}, 1e-7);
  auto gt = Tensor<double>::zeros({1, 1, 2, 2});
  CHECK(mobo::class_balanced_bce(pred, gt).scalar() == doctest::Approx(0.0).epsilon(1e-9));

  // one boundary pixel in four, prediction stuck at 1/2:
  // 0.75*ln2 + 0.25*3*ln2 = 1.5*ln2
  Eigen::ArrayXd g(4);
  g << 1, 0, 0, 0;
  auto gt2 = Tensor<double>::from_values({1, 1, 2, 2}, g);
  auto pred2 = Tensor<double>::filled({1, 1, 2, 2}, 0.5);
  const double v = mobo::class_balanced_bce(pred2, gt2).scalar();
  CHECK(std::abs(v - 1.03972) / 1.03972 <= 5e-6);
  CHECK(v == doctest::Approx(1.5 * std::log(2.0)).epsilon(1e-12));

  auto bad = Tensor<double>::filled({1, 1, 2, 2}, 0.5);
  bad.values()[2] = 0.25;  // not binary
  CHECK_THROWS_AS(mobo::class_balanced_bce(pred2, bad), mobo::ArgumentError);
  CHECK_THROWS_AS(mobo::class_balanced_bce(pred2, Tensor<double>::zeros({1, 1, 2, 3})),
                  mobo::ShapeError);
  CHECK_THROWS_AS(mobo::class_balanced_bce_with_beta(pred2, gt2, 1.5), mobo::ArgumentError);
}

TEST_CASE("balanced bce matches the scalar-loop oracle") {
  mobo::Rng rng(31);
  for (int inst = 0; inst < 50; ++inst) {
    Eigen::ArrayXd p = random_probs(36, rng);
    Eigen::ArrayXd g = random_binary(36, rng);
    auto pt = Tensor<double>::from_values({1, 1, 6, 6}, p);
    auto gt = Tensor<double>::from_values({1, 1, 6, 6}, g);
    const double got = mobo::class_balanced_bce(pt, gt).scalar();
    const double want = bce_oracle(p, g, beta_of(g));
    CHECK(testutil::rel_err(got, want) <= 1e-12);
  }
}

TEST_CASE("balanced bce with beta 1/2 halves the plain cross entropy") {
  mobo::Rng rng(37);
  for (int inst = 0; inst < 10; ++inst) {
    Eigen::ArrayXd p = random_probs(24, rng);
    Eigen::ArrayXd g = random_binary(24, rng);
    auto pt = Tensor<double>::from_values({1, 1, 4, 6}, p);
    auto gt = Tensor<double>::from_values({1, 1, 4, 6}, g);
    const double half = mobo::class_balanced_bce_with_beta(pt, gt, 0.5).scalar();
    double plain = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i)
      plain -= (g[i] == 1.0) ? std::log(p[i]) : std::log(1.0 - p[i]);
    CHECK(testutil::rel_err(half, 0.5 * plain) <= 1e-12);
  }
}

TEST_CASE("balanced bce drops when a boundary pixel's probability rises") {
  mobo::Rng rng(41);
  for (int inst = 0; inst < 20; ++inst) {
    Eigen::ArrayXd p = random_probs(16, rng);
    Eigen::ArrayXd g = random_binary(16, rng, 0.5);
    g[3] = 1.0;
    p[3] = std::min(p[3], 0.9);
    auto gt = Tensor<double>::from_values({1, 1, 4, 4}, g);
    const double before =
        mobo::class_balanced_bce(Tensor<double>::from_values({1, 1, 4, 4}, p), gt).scalar();
    p[3] += 0.05;
    const double after =
        mobo::class_balanced_bce(Tensor<double>::from_values({1, 1, 4, 4}, p), gt).scalar();
    CHECK(after < before);
  }
}

TEST_CASE("balanced bce finite-difference gradients") {
  mobo::Rng rng(43);
  double worst = 0.0;
  for (int inst = 0; inst < 20; ++inst) {
    auto pt = Tensor<double>::from_values({1, 1, 5, 5}, random_probs(25, rng), true);
    auto gt = Tensor<double>::from_values({1, 1, 5, 5}, random_binary(25, rng));
    auto rep = testutil::fd_check(
        [&](std::vector<Tensor<double>>& in) { return mobo::class_balanced_bce(in[0], gt); },
        {pt}, 1e-5);
    worst = std::max(worst, rep.max_rel_err);
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("endpoint error hand cases and oracle") {
  auto f = Tensor<double>::zeros({1, 2, 3, 3});
  f.values().head(9) = 3.0;   // u
  f.values().tail(9) = 4.0;   // v
  auto z = Tensor<double>::zeros({1, 2, 3, 3});
  CHECK(mobo::epe(f, z).scalar() == doctest::Approx(5.0).epsilon(1e-14));
  CHECK(mobo::epe(f, f).scalar() == 0.0);
  CHECK_THROWS_AS(mobo::epe(f, Tensor<double>::zeros({1, 2, 3, 4})), mobo::ShapeError);
  CHECK_THROWS_AS(mobo::epe(Tensor<double>::zeros({1, 3, 3, 3}),
                            Tensor<double>::zeros({1, 3, 3, 3})),
                  mobo::ShapeError);

  mobo::Rng rng(47);
  for (int inst = 0; inst < 20; ++inst) {
    auto a = testutil::random_tensor({1, 2, 4, 4}, rng, 2.0, false);
    auto b = testutil::random_tensor({1, 2, 4, 4}, rng, 2.0, false);
    CHECK(testutil::rel_err(mobo::epe(a, b).scalar(),
                            epe_oracle(a.values(), b.values(), 4, 4)) <= 1e-12);
  }
}

TEST_CASE("endpoint error finite-difference gradients") {
  mobo::Rng rng(53);
  double worst = 0.0;
  for (int inst = 0; inst < 20; ++inst) {
    auto a = testutil::random_tensor({1, 2, 4, 5}, rng);
    auto b = testutil::random_tensor({1, 2, 4, 5}, rng);
    auto rep = testutil::fd_check(
        [&](std::vector<Tensor<double>>& in) { return mobo::epe(in[0], in[1]); }, {a, b}, 1e-5,
        0.05);
    worst = std::max(worst, rep.max_rel_err);
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("boundary-preserving loss zeroes and edge sensitivity") {
  auto c1 = Tensor<double>::filled({1, 2, 5, 5}, 2.75);
  auto c2 = Tensor<double>::filled({1, 2, 5, 5}, -1.25);
  CHECK(std::abs(mobo::boundary_preserving_loss(c1, c2).scalar()) <= 1e-24);

  mobo::Rng rng(59);
  auto any = testutil::random_tensor({1, 2, 6, 6}, rng, 3.0, false);
  CHECK(mobo::boundary_preserving_loss(any, any).scalar() == 0.0);

  // step edge and constant field with identical endpoint error against zero
  auto step = Tensor<double>::zeros({1, 2, 6, 6});
  for (Eigen::Index y = 0; y < 6; ++y)
    for (Eigen::Index x = 0; x < 6; ++x) step.values()[y * 6 + x] = x < 3 ? 1.0 : -1.0;
  auto flat = Tensor<double>::zeros({1, 2, 6, 6});
  flat.values().head(36) = 1.0;
  auto zero = Tensor<double>::zeros({1, 2, 6, 6});
  CHECK(mobo::epe(step, zero).scalar() == doctest::Approx(mobo::epe(flat, zero).scalar()));
  CHECK(mobo::boundary_preserving_loss(flat, zero).scalar() <= 1e-24);
  CHECK(mobo::boundary_preserving_loss(step, zero).scalar() > 0.1);
}

TEST_CASE("boundary-preserving loss matches the scalar Prewitt oracle") {
  mobo::Rng rng(61);
  for (int inst = 0; inst < 20; ++inst) {
    auto a = testutil::random_tensor({1, 2, 5, 7}, rng, 2.0, false);
    auto b = testutil::random_tensor({1, 2, 5, 7}, rng, 2.0, false);
    CHECK(testutil::rel_err(mobo::boundary_preserving_loss(a, b).scalar(),
                            bpl_oracle(a.values(), b.values(), 5, 7)) <= 1e-12);
  }
}

TEST_CASE("boundary-preserving loss finite-difference gradients") {
  mobo::Rng rng(67);
  double worst = 0.0;
  for (int inst = 0; inst < 20; ++inst) {
    auto a = testutil::random_tensor({1, 2, 4, 4}, rng);
    auto b = testutil::random_tensor({1, 2, 4, 4}, rng);
    auto rep = testutil::fd_check(
        [&](std::vector<Tensor<double>>& in) {
          return mobo::boundary_preserving_loss(in[0], in[1]);
        },
        {a, b}, 1e-5);
    worst = std::max(worst, rep.max_rel_err);
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("combined flow loss composition") {
  // integer-valued fields keep the arithmetic exact
  auto f0 = Tensor<double>::filled({1, 2, 4, 4}, 2.0);
  auto gt = Tensor<double>::filled({1, 2, 4, 4}, 2.0);
  std::vector<Tensor<double>> zeros = {Tensor<double>::zeros({1, 2, 4, 4}),
                                       Tensor<double>::zeros({1, 2, 4, 4})};
  CHECK(mobo::combined_flow_loss(zeros, f0, gt).scalar() == 0.0);

  auto gt2 = Tensor<double>::filled({1, 2, 4, 4}, 5.0);
  std::vector<Tensor<double>> comp = {Tensor<double>::filled({1, 2, 4, 4}, 3.0)};
  CHECK(mobo::combined_flow_loss(comp, f0, gt2).scalar() == 0.0);

  CHECK_THROWS_AS(mobo::combined_flow_loss(std::vector<Tensor<double>>{}, f0, gt),
                  mobo::ArgumentError);

  mobo::Rng rng(71);
  for (int inst = 0; inst < 10; ++inst) {
    auto base = testutil::random_tensor({1, 2, 5, 5}, rng, 1.0, false);
    auto target = testutil::random_tensor({1, 2, 5, 5}, rng, 1.0, false);
    std::vector<Tensor<double>> rs = {testutil::random_tensor({1, 2, 5, 5}, rng, 0.3, false),
                                      testutil::random_tensor({1, 2, 5, 5}, rng, 0.3, false)};
    const double combined = mobo::combined_flow_loss(rs, base, target).scalar();
    double parts = 0.0;
    for (const auto& r : rs) parts += mobo::flow_loss(mobo::add(base, r), target).scalar();
    CHECK(testutil::rel_err(combined, parts) <= 1e-12);
  }
}

TEST_CASE("combined flow loss finite-difference gradients") {
  mobo::Rng rng(73);
  double worst = 0.0;
  for (int inst = 0; inst < 20; ++inst) {
    auto f0 = testutil::random_tensor({1, 2, 4, 4}, rng);
    auto gt = testutil::random_tensor({1, 2, 4, 4}, rng, 1.0, false);
    auto r1 = testutil::random_tensor({1, 2, 4, 4}, rng, 0.5);
    auto r2 = testutil::random_tensor({1, 2, 4, 4}, rng, 0.5);
    auto rep = testutil::fd_check(
        [&](std::vector<Tensor<double>>& in) {
          return mobo::combined_flow_loss({in[1], in[2]}, in[0], gt);
        },
        {f0, r1, r2}, 1e-5, 0.05);
    worst = std::max(worst, rep.max_rel_err);
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("adagrad hand-stepped oracle") {
  mobo::ParamSet<double> params;
  auto& w = params.add("w", Tensor<double>::filled({1, 1, 1, 1}, 1.0, true));
  mobo::AdaGrad<double> opt(0.1);

  w.grad()[0] = 2.0;
  opt.step(params);
  CHECK(opt.accumulators()[0][0] == doctest::Approx(4.0).epsilon(1e-14));
  CHECK(w.values()[0] == doctest::Approx(0.9).epsilon(1e-7));

  const double before = w.values()[0];
  w.clear_grad();
  w.grad()[0] = 2.0;
  opt.step(params);
  CHECK(std::abs(before - w.values()[0]) == doctest::Approx(0.070711).epsilon(1e-4));

  // zero gradient leaves the weight untouched
  const double frozen = w.values()[0];
  w.clear_grad();
  w.grad()[0] = 0.0;
  opt.step(params);
  CHECK(w.values()[0] == frozen);

  w.clear_grad();
  CHECK_THROWS_AS(opt.step(params), mobo::StateError);
  CHECK_THROWS_AS(mobo::AdaGrad<double>(0.0), mobo::ArgumentError);
}

TEST_CASE("adagrad contracts |w| on the quadratic bowl for lr <= 1") {
  for (double lr : {0.1, 0.5, 1.0}) {
    for (double w0 : {3.0, 0.5, -2.0}) {
      mobo::ParamSet<double> params;
      auto& w = params.add("w", Tensor<double>::filled({1, 1, 1, 1}, w0, true));
      mobo::AdaGrad<double> opt(lr);
      double prev = std::abs(w0);
      for (int it = 0; it < 300; ++it) {
        w.clear_grad();
        w.grad()[0] = w.values()[0];
        opt.step(params);
        const double cur = std::abs(w.values()[0]);
        CHECK(cur <= prev * (1.0 + 1e-12) + 1e-15);
        prev = cur;
      }
      CHECK(prev < std::abs(w0));
    }
  }
}

TEST_CASE("learning-rate schedule") {
  using mobo::TrainPhase;
  CHECK(mobo::lr_schedule(TrainPhase::boundary, 0) == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(mobo::lr_schedule(TrainPhase::boundary, 99999) == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(mobo::lr_schedule(TrainPhase::boundary, 100000) == doctest::Approx(5e-5).epsilon(1e-12));
  CHECK(mobo::lr_schedule(TrainPhase::fusion, 0) == doctest::Approx(1e-3).epsilon(1e-12));
  CHECK(mobo::lr_schedule(TrainPhase::fusion, 50000) == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(mobo::lr_schedule(TrainPhase::fusion, 100000) == doctest::Approx(1e-5).epsilon(1e-12));

  // a divisor of 1000 shrinks 100K to 100 iterations, keeping the shape
  CHECK(mobo::lr_schedule(TrainPhase::boundary, 99, 1000) == doctest::Approx(1e-4));
  CHECK(mobo::lr_schedule(TrainPhase::boundary, 100, 1000) == doctest::Approx(5e-5));
  CHECK(mobo::lr_schedule(TrainPhase::fusion, 50, 1000) == doctest::Approx(1e-4));

  // explicit base rate
  CHECK(mobo::lr_schedule(TrainPhase::boundary, 0, 1, 0.01) == doctest::Approx(0.01));
  CHECK(mobo::lr_schedule(TrainPhase::boundary, 100000, 1, 0.01) == doctest::Approx(0.005));

  CHECK(mobo::lr_schedule("boundary", 0) == doctest::Approx(1e-4));
  CHECK_THROWS_AS(mobo::lr_schedule("warmup", 0), mobo::ArgumentError);
  CHECK_THROWS_AS(mobo::lr_schedule(TrainPhase::boundary, -1), mobo::ArgumentError);
  CHECK_THROWS_AS(mobo::lr_schedule(TrainPhase::boundary, 0, 0), mobo::ArgumentError);
}

TEST_CASE("checkpoint roundtrip through the parameter set") {
  mobo::Rng rng(79);
  mobo::ParamSet<float> params;
  params.add("conv1_w", mobo::Tensor<float>::randn({4, 3, 3, 3}, rng, 0.3, true));
  params.add("conv1_b", mobo::Tensor<float>::randn({1, 4, 1, 1}, rng, 0.3, true));
  std::map<std::string, std::string> cfg = {{"height", "64"}, {"width", "64"}};
  const std::string path = "ckpt_roundtrip_test.bin";
  mobo::save_checkpoint(path, "refinenet", cfg, params);

  mobo::ParamSet<float> loaded;
  loaded.add("conv1_w", mobo::Tensor<float>::zeros({4, 3, 3, 3}, true));
  loaded.add("conv1_b", mobo::Tensor<float>::zeros({1, 4, 1, 1}, true));
  auto meta = mobo::load_checkpoint(path, loaded);
  CHECK(meta.kind == "refinenet");
  CHECK(meta.config.at("height") == "64");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& a = params.items()[i].second.values();
    const auto& b = loaded.items()[i].second.values();
    for (Eigen::Index j = 0; j < a.size(); ++j) CHECK(a[j] == b[j]);
  }

  mobo::ParamSet<float> wrong;
  wrong.add("conv1_w", mobo::Tensor<float>::zeros({4, 3, 3, 3}, true));
  CHECK_THROWS_AS(mobo::load_checkpoint(path, wrong), mobo::ConfigError);
  mobo::ParamSet<float> wrong2;
  wrong2.add("conv1_w", mobo::Tensor<float>::zeros({4, 3, 3, 3}, true));
  wrong2.add("conv1_b", mobo::Tensor<float>::zeros({1, 5, 1, 1}, true));
  CHECK_THROWS_AS(mobo::load_checkpoint(path, wrong2), mobo::ConfigError);
  CHECK_THROWS_AS(mobo::load_checkpoint("no_such_file.bin", loaded), mobo::IoError);
  std::remove(path.c_str());
}
