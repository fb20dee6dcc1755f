#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "rtsac/adam.hpp"
#include "rtsac/graph.hpp"
#include "rtsac/nets.hpp"
#include "rtsac/rng.hpp"

using namespace rtsac;
using namespace rtsac::nn;

namespace {

// P(e1 < Z < e2) for standard normal Z, stable in both tails.
double normal_interval(double e1, double e2) {
  const double r2 = std::sqrt(2.0);
  if (e1 + e2 >= 0) return 0.5 * (std::erfc(e1 / r2) - std::erfc(e2 / r2));
  return 0.5 * (std::erfc(-e2 / r2) - std::erfc(-e1 / r2));
}

}  // namespace

TEST_CASE("spatial softmax: one-hot activation reads out the pixel coords") {
  TensorD x({1, 1, 5, 7});
  x.at4(0, 0, 3, 2) = 1000.0;
  auto [y, p] = kernels::spatial_softmax_forward(x);
  const double xj = -1.0 + 2.0 * 2 / 6.0;
  const double yi = -1.0 + 2.0 * 3 / 4.0;
  CHECK(y.at2(0, 0) == doctest::Approx(xj).epsilon(1e-12));
  CHECK(y.at2(0, 1) == doctest::Approx(yi).epsilon(1e-12));
}

TEST_CASE("spatial softmax: constant map lands on the center by symmetry") {
  TensorD x = TensorD::full({1, 2, 6, 9}, 0.37);
  auto [y, p] = kernels::spatial_softmax_forward(x);
  for (int c = 0; c < 2; ++c) {
    CHECK(y.at2(0, 2 * c) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(y.at2(0, 2 * c + 1) == doctest::Approx(0.0).epsilon(1e-12));
  }
}

TEST_CASE("spatial softmax matches the brute-force expectation") {
  Rng rng(11);
  TensorD x({2, 3, 5, 8});
  for (auto& v : x.data) v = rng.uniform(-5, 5);
  auto [y, p] = kernels::spatial_softmax_forward(x);
  for (int b = 0; b < 2; ++b)
    for (int c = 0; c < 3; ++c) {
      // independent double loop, no max-shift
      double z = 0;
      for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 8; ++j) z += std::exp(x.at4(b, c, i, j));
      double cx = 0, cy = 0;
      for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 8; ++j) {
          const double q = std::exp(x.at4(b, c, i, j)) / z;
          cx += q * (-1.0 + 2.0 * j / 7.0);
          cy += q * (-1.0 + 2.0 * i / 4.0);
        }
      CHECK(y.at2(b, 2 * c) == doctest::Approx(cx).epsilon(1e-9));
      CHECK(y.at2(b, 2 * c + 1) == doctest::Approx(cy).epsilon(1e-9));
      CHECK(std::abs(y.at2(b, 2 * c)) <= 1.0);
      CHECK(std::abs(y.at2(b, 2 * c + 1)) <= 1.0);
    }
}

TEST_CASE("spatial softmax: shifting a one-hot shifts the coord one pixel-unit") {
  TensorD a({1, 1, 5, 7}), b({1, 1, 5, 7});
  a.at4(0, 0, 2, 3) = 500.0;
  b.at4(0, 0, 2, 4) = 500.0;
  auto ya = kernels::spatial_softmax_forward(a).first;
  auto yb = kernels::spatial_softmax_forward(b).first;
  CHECK(yb.at2(0, 0) - ya.at2(0, 0) ==
        doctest::Approx(2.0 / 6.0).epsilon(1e-12));
  CHECK(yb.at2(0, 1) - ya.at2(0, 1) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("spatial softmax gradient matches finite differences") {
  Rng rng(3);
  TensorD x({1, 2, 4, 5});
  for (auto& v : x.data) v = rng.uniform(-2, 2);
  TensorD w({1, 4});
  for (auto& v : w.data) v = rng.uniform(-1, 1);

  auto loss_of = [&](const TensorD& in) {
    auto y = kernels::spatial_softmax_forward(in).first;
    double acc = 0;
    for (std::size_t i = 0; i < y.size(); ++i) acc += y[i] * w[i];
    return acc;
  };

  GraphD g;
  auto xv = g.param(x);
  auto y = g.spatial_softmax(xv);
  auto loss = g.sum_all(g.mul(y, g.constant(w)));
  g.backward(loss);
  const auto& dx = g.grad(xv);

  const double h = 1e-6;
  for (std::size_t i = 0; i < x.size(); i += 3) {
    TensorD xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    const double fd = (loss_of(xp) - loss_of(xm)) / (2 * h);
    CHECK(dx[i] == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("policy head: zero mean acts at zero, huge mean saturates at 0.7") {
  NetConfig cfg;
  cfg.action_dim = 5;
  TensorD mean({1, 5}), log_std = TensorD::full({1, 5}, -1.0);
  Rng rng(1);
  auto smp = sample_action_row(cfg, mean, log_std, 0, rng, false);
  for (int d = 0; d < 5; ++d)
    CHECK(smp.action[static_cast<std::size_t>(d)] == 0.0);

  TensorD big = TensorD::full({1, 5}, 50.0);
  auto sat = sample_action_row(cfg, big, log_std, 0, rng, false);
  for (int d = 0; d < 5; ++d)
    CHECK(sat.action[static_cast<std::size_t>(d)] ==
          doctest::Approx(0.7).epsilon(1e-9));
}

TEST_CASE("squashed log-prob agrees with a numerical change of variables") {
  NetConfig cfg;
  cfg.action_dim = 1;
  const double scale = cfg.action_scale;  // 0.7
  for (double mu : {-0.4, 0.0, 0.9}) {
    for (double ls : {-1.2, -0.3, 0.4}) {
      for (double u0 : {-1.1, 0.2, 1.4}) {
        const double m = mu, l = ls, u = u0;
        const double analytic = squashed_gaussian_logprob(&m, &l, &u, 1, scale);

        const double sd = std::exp(ls);
        const double du = 1e-4;
        const double e1 = (u0 - du / 2 - mu) / sd;
        const double e2 = (u0 + du / 2 - mu) / sd;
        const double prob = normal_interval(e1, e2);
        const double a1 = scale * std::tanh(u0 - du / 2);
        const double a2 = scale * std::tanh(u0 + du / 2);
        const double numeric = std::log(prob / (a2 - a1));
        CHECK(analytic == doctest::Approx(numeric).epsilon(1e-5));
      }
    }
  }
}

TEST_CASE("backward: sum of squares gives 2w; untouched params get zero") {
  Rng rng(17);
  TensorD w({4, 3});
  for (auto& v : w.data) v = rng.uniform(-2, 2);
  TensorD unused = TensorD::full({2}, 1.0);

  GraphD g;
  auto wv = g.param(w);
  auto uv = g.param(unused);
  auto loss = g.sum_all(g.square(wv));
  g.backward(loss);
  for (std::size_t i = 0; i < w.size(); ++i)
    CHECK(g.grad(wv)[i] == doctest::Approx(2 * w[i]).epsilon(1e-12));
  for (std::size_t i = 0; i < unused.size(); ++i)
    CHECK(g.grad(uv)[i] == 0.0);
}

TEST_CASE("backward without a recorded graph is a hard error") {
  GraphD g;
  auto c = g.constant(TensorD::full({1}, 3.0));
  CHECK_THROWS(g.backward(c));
}

TEST_CASE("conv2d forward/backward against finite differences") {
  Rng rng(23);
  TensorD x({2, 2, 6, 7}), k({3, 2, 3, 3}), b({3});
  for (auto& v : x.data) v = rng.uniform(-1, 1);
  for (auto& v : k.data) v = rng.uniform(-1, 1);
  for (auto& v : b.data) v = rng.uniform(-1, 1);

  auto loss_of = [&](const TensorD& xx, const TensorD& kk, const TensorD& bb) {
    auto y = kernels::conv2d_forward(xx, kk, bb, 2);
    double acc = 0;
    for (double v : y.data) acc += v * v;
    return acc;
  };

  GraphD g;
  auto xv = g.param(x), kv = g.param(k), bv = g.param(b);
  auto loss = g.sum_all(g.square(g.conv2d(xv, kv, bv, 2)));
  g.backward(loss);

  const double h = 1e-6;
  for (std::size_t i = 0; i < k.size(); i += 5) {
    TensorD kp = k, km = k;
    kp[i] += h;
    km[i] -= h;
    const double fd = (loss_of(x, kp, b) - loss_of(x, km, b)) / (2 * h);
    CHECK(g.grad(kv)[i] == doctest::Approx(fd).epsilon(1e-6));
  }
  for (std::size_t i = 0; i < x.size(); i += 17) {
    TensorD xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    const double fd = (loss_of(xp, k, b) - loss_of(xm, k, b)) / (2 * h);
    CHECK(g.grad(xv)[i] == doctest::Approx(fd).epsilon(1e-6));
  }
  for (std::size_t i = 0; i < b.size(); ++i) {
    TensorD bp = b, bm = b;
    bp[i] += h;
    bm[i] -= h;
    const double fd = (loss_of(x, k, bp) - loss_of(x, k, bm)) / (2 * h);
    CHECK(g.grad(bv)[i] == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("adam: zero gradient at step one leaves parameters unchanged") {
  AdamT<double> adam(1e-3);
  TensorD p = TensorD::full({3}, 1.5);
  TensorD g = TensorD::zeros({3});
  adam.step({&p}, {&g});
  for (double v : p.data) CHECK(v == 1.5);
}

TEST_CASE("adam: constant gradient converges to lr-sized steps") {
  const double lr = 1e-3;
  AdamT<double> adam(lr);
  TensorD p = TensorD::zeros({1});
  TensorD g = TensorD::full({1}, 0.37);
  double prev = p[0];
  double step = 0;
  for (int t = 0; t < 300; ++t) {
    adam.step({&p}, {&g});
    step = prev - p[0];
    prev = p[0];
  }
  CHECK(step == doctest::Approx(lr).epsilon(0.02));
}

TEST_CASE("adam matches a hand-rolled reference on a quadratic") {
  const double lr = 1e-2, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  AdamT<double> adam(lr, b1, b2, eps);
  TensorD p = TensorD::full({1}, 5.0);

  double x = 5.0, m = 0.0, v = 0.0;  // reference state
  for (int t = 1; t <= 10; ++t) {
    TensorD g = TensorD::full({1}, 2 * (p[0] - 3.0));
    adam.step({&p}, {&g});

    const double gr = 2 * (x - 3.0);
    m = b1 * m + (1 - b1) * gr;
    v = b2 * v + (1 - b2) * gr * gr;
    const double mhat = m / (1 - std::pow(b1, t));
    const double vhat = v / (1 - std::pow(b2, t));
    x -= lr * mhat / (std::sqrt(vhat) + eps);
    CHECK(p[0] == doctest::Approx(x).epsilon(1e-12));
  }
}

TEST_CASE("polyak: tau=1 copies, fixed point holds, decay is geometric") {
  TensorD tgt = TensorD::full({4}, 1.0);
  TensorD src = TensorD::full({4}, 3.0);
  polyak_update(tgt, src, 1.0);
  for (double v : tgt.data) CHECK(v == 3.0);

  polyak_update(tgt, src, 0.25);  // already equal: fixed point
  for (double v : tgt.data) CHECK(v == 3.0);

  TensorD t2 = TensorD::zeros({1});
  TensorD s2 = TensorD::full({1}, 1.0);
  for (int i = 0; i < 100; ++i) polyak_update(t2, s2, 0.01);
  const double gap = std::abs(t2[0] - s2[0]);
  CHECK(gap == doctest::Approx(std::pow(0.99, 100)).epsilon(1e-9));
}

TEST_CASE("fixed seed gives bit-identical forward and backward") {
  auto run_once = [] {
    Rng rng(77);
    NetConfig cfg;
    cfg.img_h = 9;
    cfg.img_w = 12;
    auto params = init_params<double>(cfg, rng);
    TensorD images({2, 9, 9, 12});
    Rng drng(5);
    for (auto& v : images.data) v = drng.uniform();
    GraphD g;
    auto enc = EncoderVars<double>::bind(g, params.enc, true);
    auto feat = encode_graph(g, enc, g.constant(images));
    auto loss = g.sum_all(g.square(feat));
    g.backward(loss);
    return std::pair{g.value(loss)[0], g.grad(enc.k1)};
  };
  auto [l1, g1] = run_once();
  auto [l2, g2] = run_once();
  CHECK(l1 == l2);
  REQUIRE(g1.size() == g2.size());
  for (std::size_t i = 0; i < g1.size(); ++i) CHECK(g1[i] == g2[i]);
}

TEST_CASE("encode rejects wrong channel counts") {
  Rng rng(9);
  NetConfig cfg;
  cfg.img_h = 9;
  cfg.img_w = 12;
  auto params = init_params<double>(cfg, rng);
  TensorD bad({1, 8, 9, 12});
  CHECK_THROWS(encode_nograd(params.enc, bad));
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  Rng rng(31);
  NetConfig cfg;
  cfg.img_h = 9;
  cfg.img_w = 12;
  cfg.hidden = 16;
  auto params = init_params<float>(cfg, rng);
  params.version = 1234;
  const auto before = params_checksum(params);

  const std::string path = "/tmp/rtsac_test_ckpt.bin";
  save_checkpoint(path, params);
  auto loaded = load_checkpoint(path);
  CHECK(loaded.version == 1234);
  CHECK(params_checksum(loaded) == before);
  std::remove(path.c_str());
}
