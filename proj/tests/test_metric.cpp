#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "reid/metric.hpp"

using namespace reid;

namespace {

MetricLayer identity_metric(std::size_t d) {
  MetricLayer m(d, d);
  for (std::size_t i = 0; i < d; ++i) m.l[i * d + i] = 1.0;
  return m;
}

Tensor random_unit(std::size_t d, Rng& rng) {
  Tensor v = Tensor::gaussian({d}, 1.0, rng);
  scale(v, 1.0 / std::sqrt(squared_l2(v)));
  return v;
}

}  // namespace

TEST_CASE("metric forward") {
  MetricLayer id = identity_metric(4);
  Rng rng(1);
  Tensor f = Tensor::gaussian({4}, 1.0, rng);
  Tensor e = id.forward(f);
  for (std::size_t i = 0; i < 4; ++i) CHECK(e[i] == f[i]);

  // L = 2I scales squared distances by 4.
  MetricLayer twice = identity_metric(4);
  scale(twice.l, 2.0);
  Tensor f2 = Tensor::gaussian({4}, 1.0, rng);
  CHECK(factorized_distance(f, f2, twice) ==
        doctest::Approx(4.0 * factorized_distance(f, f2, id))
            .epsilon(1e-12));

  CHECK_THROWS_AS(id.forward(Tensor::zeros({5})), ShapeError);
}

TEST_CASE("metric forward matches a naive triple-loop oracle") {
  Rng rng(2);
  MetricLayer layer(5, 7);
  layer.l = Tensor::gaussian(layer.l.shape(), 1.0, rng);
  Tensor f = Tensor::gaussian({7}, 1.0, rng);
  Tensor e = layer.forward(f);
  for (std::size_t a = 0; a < 5; ++a) {
    double acc = 0.0;
    for (std::size_t b = 0; b < 7; ++b) acc += layer.l[a * 7 + b] * f[b];
    CHECK(std::abs(e[a] - acc) <= 1e-12);
  }
}

TEST_CASE("metric backward basics") {
  Rng rng(3);
  MetricLayer layer(4, 4);
  layer.l = Tensor::gaussian(layer.l.shape(), 1.0, rng);
  Tensor f = Tensor::gaussian({4}, 1.0, rng);

  Tensor gf = Tensor::zeros({4});
  Tensor gl = Tensor::zeros(layer.l.shape());
  layer.backward(f, Tensor::zeros({4}), gf, gl);
  CHECK(max_abs(gf) == 0.0);
  CHECK(max_abs(gl) == 0.0);

  MetricLayer id = identity_metric(4);
  Tensor ge = Tensor::gaussian({4}, 1.0, rng);
  Tensor gf2 = Tensor::zeros({4});
  Tensor gl2 = Tensor::zeros(id.l.shape());
  id.backward(f, ge, gf2, gl2);
  for (std::size_t i = 0; i < 4; ++i) CHECK(gf2[i] == ge[i]);
}

TEST_CASE("metric backward matches finite differences of the distance") {
  Rng rng(4);
  MetricLayer layer(6, 6);
  layer.l = Tensor::gaussian(layer.l.shape(), 0.7, rng);
  Tensor f1 = Tensor::gaussian({6}, 1.0, rng);
  Tensor f2 = Tensor::gaussian({6}, 1.0, rng);

  // d^2 = ||L (f1-f2)||^2; analytic via the layer backward with grad 2e.
  Tensor delta = f1;
  add_scaled(delta, f2, -1.0);
  Tensor e = layer.forward(delta);
  Tensor ge = e;
  scale(ge, 2.0);
  Tensor gf = Tensor::zeros({6});
  Tensor gl = Tensor::zeros(layer.l.shape());
  layer.backward(delta, ge, gf, gl);

  const double h = 1e-5;
  auto rel = [](double a, double b) {
    return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
  };
  for (std::size_t i = 0; i < layer.l.size(); ++i) {
    const double orig = layer.l[i];
    layer.l[i] = orig + h;
    const double fp = factorized_distance(f1, f2, layer);
    layer.l[i] = orig - h;
    const double fm = factorized_distance(f1, f2, layer);
    layer.l[i] = orig;
    CHECK(rel(gl[i], (fp - fm) / (2 * h)) <= 1e-6);
  }
  // grad wrt f1 equals the grad wrt delta.
  for (std::size_t i = 0; i < f1.size(); ++i) {
    const double orig = f1[i];
    f1[i] = orig + h;
    const double fp = factorized_distance(f1, f2, layer);
    f1[i] = orig - h;
    const double fm = factorized_distance(f1, f2, layer);
    f1[i] = orig;
    CHECK(rel(gf[i], (fp - fm) / (2 * h)) <= 1e-6);
  }
}

TEST_CASE("mahalanobis distance examples") {
  Rng rng(5);
  Tensor f = Tensor::gaussian({6}, 1.0, rng);
  MetricLayer layer(6, 6);
  layer.l = Tensor::gaussian(layer.l.shape(), 1.0, rng);
  Tensor m = reconstruct_metric(layer);
  CHECK(std::abs(mahalanobis_distance(f, f, m)) <= 1e-12);

  Tensor eye = reconstruct_metric(identity_metric(6));
  Tensor f2 = Tensor::gaussian({6}, 1.0, rng);
  Tensor d = f;
  add_scaled(d, f2, -1.0);
  CHECK(mahalanobis_distance(f, f2, eye) ==
        doctest::Approx(squared_l2(d)).epsilon(1e-12));

  CHECK_THROWS_AS(mahalanobis_distance(f, Tensor::zeros({5}), m), ShapeError);
}

TEST_CASE("factorized distance examples") {
  MetricLayer id = identity_metric(2);
  Tensor f1 = Tensor::zeros({2});
  f1[0] = 1.0;
  Tensor f2 = Tensor::zeros({2});
  f2[1] = 1.0;
  CHECK(factorized_distance(f1, f2, id) == 2.0);
  CHECK(factorized_distance(f1, f1, id) == 0.0);
}

TEST_CASE("factorized distance is exactly symmetric and a seminorm") {
  Rng rng(6);
  MetricLayer layer(4, 6);
  layer.l = Tensor::gaussian(layer.l.shape(), 1.0, rng);
  for (int trial = 0; trial < 100; ++trial) {
    Tensor a = Tensor::gaussian({6}, 1.0, rng);
    Tensor b = Tensor::gaussian({6}, 1.0, rng);
    Tensor c = Tensor::gaussian({6}, 1.0, rng);
    CHECK(factorized_distance(a, b, layer) ==
          factorized_distance(b, a, layer));
    // Triangle inequality on the square roots.
    const double dab = std::sqrt(factorized_distance(a, b, layer));
    const double dbc = std::sqrt(factorized_distance(b, c, layer));
    const double dac = std::sqrt(factorized_distance(a, c, layer));
    CHECK(dac <= dab + dbc + 1e-10);
  }
}

TEST_CASE("equivalence of the two distance forms") {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t d = 3 + rng.below(8);
    const std::size_t m = 2 + rng.below(8);
    MetricLayer layer(m, d);
    layer.l = Tensor::gaussian(layer.l.shape(), 1.0, rng);
    Tensor f1 = Tensor::gaussian({d}, 1.0, rng);
    Tensor f2 = Tensor::gaussian({d}, 1.0, rng);
    const double maha =
        mahalanobis_distance(f1, f2, reconstruct_metric(layer));
    const double fact = factorized_distance(f1, f2, layer);
    CHECK(std::abs(maha - fact) <= 1e-10);
    CHECK(maha >= -1e-12);
  }
}

TEST_CASE("reconstructed metric examples") {
  Tensor eye = reconstruct_metric(identity_metric(3));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      CHECK(eye[i * 3 + j] == (i == j ? 1.0 : 0.0));

  MetricLayer rank1(1, 2);
  rank1.l[0] = 1.0;
  rank1.l[1] = 1.0;
  Tensor m = reconstruct_metric(rank1);
  for (std::size_t i = 0; i < 4; ++i) CHECK(m[i] == 1.0);
}

TEST_CASE("reconstructed metric is symmetric and PSD on samples") {
  Rng rng(8);
  MetricLayer layer(5, 9);
  layer.l = Tensor::gaussian(layer.l.shape(), 1.0, rng);
  Tensor m = reconstruct_metric(layer);
  for (std::size_t i = 0; i < 9; ++i)
    for (std::size_t j = 0; j < 9; ++j)
      CHECK(m[i * 9 + j] == m[j * 9 + i]);  // exact by construction
  for (int trial = 0; trial < 1000; ++trial) {
    Tensor x = random_unit(9, rng);
    Tensor zero = Tensor::zeros({9});
    CHECK(mahalanobis_distance(x, zero, m) >= -1e-12);
  }
}

TEST_CASE("trace regularizer") {
  CHECK(trace_regularizer(identity_metric(400)) == 400.0);
  CHECK(trace_regularizer(MetricLayer(5, 5)) == 0.0);

  Rng rng(9);
  MetricLayer layer(6, 8);
  layer.l = Tensor::gaussian(layer.l.shape(), 1.0, rng);
  Tensor m = reconstruct_metric(layer);
  double trace = 0.0;
  for (std::size_t i = 0; i < 8; ++i) trace += m[i * 8 + i];
  CHECK(std::abs(trace_regularizer(layer) - trace) <= 1e-10);
}
