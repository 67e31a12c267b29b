#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "reid/tensor.hpp"

using namespace reid;

TEST_CASE("filled tensors") {
  Tensor z = Tensor::filled({2, 2}, 0.0);
  for (std::size_t i = 0; i < 4; ++i) CHECK(z[i] == 0.0);

  Tensor c = Tensor::filled({3}, 1.5);
  CHECK(c.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(c[i] == 1.5);
}

TEST_CASE("degenerate shapes rejected") {
  CHECK_THROWS_AS(Shape{0}, ShapeError);
  CHECK_THROWS_AS(Shape({2, 0, 3}), ShapeError);
  CHECK_THROWS_AS(Shape(std::vector<std::size_t>{}), ShapeError);
  // element count overflow
  CHECK_THROWS_AS(Shape({std::size_t(1) << 40, std::size_t(1) << 40}),
                  ShapeError);
}

TEST_CASE("gaussian sample statistics") {
  const std::size_t n = 1'000'000;

  Rng rng(7);
  Tensor a = Tensor::gaussian({n}, 0.01, rng);
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += a[i];
  mean /= n;
  CHECK(std::abs(mean) <= 4.0 * (0.01 / 1000.0));

  Rng rng2(8);
  Tensor b = Tensor::gaussian({n}, 0.001, rng2);
  double m2 = 0.0, var = 0.0;
  for (std::size_t i = 0; i < n; ++i) m2 += b[i];
  m2 /= n;
  for (std::size_t i = 0; i < n; ++i) var += (b[i] - m2) * (b[i] - m2);
  const double stddev = std::sqrt(var / (n - 1));
  CHECK(stddev == doctest::Approx(0.001).epsilon(0.05));
}

TEST_CASE("gaussian determinism and validation") {
  Rng r1(42), r2(42);
  Tensor a = Tensor::gaussian({5, 7}, 0.5, r1);
  Tensor b = Tensor::gaussian({5, 7}, 0.5, r2);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);

  Rng r3(1);
  CHECK_THROWS_AS(Tensor::gaussian({3}, 0.0, r3), ParamError);
  CHECK_THROWS_AS(Tensor::gaussian({3}, -1.0, r3), ParamError);
}

TEST_CASE("squared_l2") {
  Tensor t = Tensor::zeros({2});
  t[0] = 3.0;
  t[1] = 4.0;
  CHECK(squared_l2(t) == 25.0);
  CHECK(squared_l2(Tensor::zeros({10})) == 0.0);
  CHECK(squared_l2(Tensor::filled({4}, 1.0)) == 4.0);
}

TEST_CASE("squared_l2 equals self dot and is nonnegative") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor t = Tensor::gaussian({17}, 2.0, rng);
    CHECK(squared_l2(t) == dot(t, t));
    CHECK(squared_l2(t) >= 0.0);
  }
}

TEST_CASE("add_scaled") {
  Tensor acc = Tensor::zeros({2});
  acc[0] = 1.0;
  acc[1] = 2.0;
  Tensor x = Tensor::filled({2}, 10.0);
  add_scaled(acc, x, 0.5);
  CHECK(acc[0] == 6.0);
  CHECK(acc[1] == 7.0);

  Tensor before = acc;
  add_scaled(acc, x, 0.0);
  CHECK(acc[0] == before[0]);
  CHECK(acc[1] == before[1]);

  Tensor wrong = Tensor::zeros({3});
  CHECK_THROWS_AS(add_scaled(acc, wrong, 1.0), ShapeError);
}

TEST_CASE("add then subtract is exact on integer-valued data") {
  Rng rng(11);
  Tensor a = Tensor::zeros({64});
  Tensor x = Tensor::zeros({64});
  for (std::size_t i = 0; i < 64; ++i) {
    a[i] = static_cast<double>(rng.below(2000)) - 1000.0;
    x[i] = static_cast<double>(rng.below(2000)) - 1000.0;
  }
  Tensor orig = a;
  add_scaled(a, x, 1.0);
  add_scaled(a, x, -1.0);
  for (std::size_t i = 0; i < 64; ++i) CHECK(a[i] == orig[i]);
}

TEST_CASE("rng stream derivation is stable and independent") {
  Rng base(99);
  Rng d1 = base.derive(1, 2, 3);
  Rng d2 = base.derive(1, 2, 3);
  CHECK(d1.next_u64() == d2.next_u64());
  CHECK(base.derive(1).next_u64() != base.derive(2).next_u64());

  // Consuming from the base does not move derived streams.
  Rng fresh(99);
  (void)fresh.next_u64();
  CHECK(fresh.derive(1, 2, 3).next_u64() == base.derive(1, 2, 3).next_u64());
}

TEST_CASE("rng below is in range and deterministic") {
  Rng a(5), b(5);
  for (int i = 0; i < 1000; ++i) {
    const std::uint64_t v = a.below(17);
    CHECK(v < 17);
    CHECK(v == b.below(17));
  }
  CHECK_THROWS_AS(a.below(0), ParamError);
}
