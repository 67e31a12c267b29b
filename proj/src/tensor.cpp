#include "reid/tensor.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace reid {

void Shape::validate() const {
  if (dims.empty()) throw ShapeError("shape must have at least one dim");
  std::size_t n = 1;
  for (std::size_t d : dims) {
    if (d == 0) throw ShapeError("shape dim must be >= 1, got 0 in " + str());
    if (d > std::numeric_limits<std::size_t>::max() / n)
      throw ShapeError("shape element count overflows: " + str());
    n *= d;
  }
}

std::size_t Shape::count() const {
  std::size_t n = 1;
  for (std::size_t d : dims) n *= d;
  return n;
}

std::string Shape::str() const {
  std::string s;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) s += 'x';
    s += std::to_string(dims[i]);
  }
  return s;
}

double Rng::next_gaussian() {
  if (has_cached_) {
    has_cached_ = false;
    return cached_gauss_;
  }
  // u1 in (0,1] so the log is finite.
  const double u1 =
      static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  const double u2 = next_unit();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * std::numbers::pi * u2;
  cached_gauss_ = r * std::sin(a);
  has_cached_ = true;
  return r * std::cos(a);
}

Tensor Tensor::filled(const Shape& shape, double value) {
  return Tensor(shape, std::vector<double>(shape.count(), value));
}

Tensor Tensor::gaussian(const Shape& shape, double stddev, Rng& rng) {
  if (!(stddev > 0.0))
    throw ParamError("gaussian stddev must be > 0, got " +
                     std::to_string(stddev));
  std::vector<double> data(shape.count());
  for (double& v : data) v = stddev * rng.next_gaussian();
  return Tensor(shape, std::move(data));
}

double squared_l2(const Tensor& t) {
  double s = 0.0;
  const double* p = t.data();
  for (std::size_t i = 0, n = t.size(); i < n; ++i) s += p[i] * p[i];
  return s;
}

double dot(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b))
    throw ShapeError("dot shape mismatch: " + a.shape().str() + " vs " +
                     b.shape().str());
  double s = 0.0;
  const double* pa = a.data();
  const double* pb = b.data();
  for (std::size_t i = 0, n = a.size(); i < n; ++i) s += pa[i] * pb[i];
  return s;
}

void add_scaled(Tensor& acc, const Tensor& x, double alpha) {
  if (!acc.same_shape(x))
    throw ShapeError("add_scaled shape mismatch: " + acc.shape().str() +
                     " vs " + x.shape().str());
  double* pa = acc.data();
  const double* px = x.data();
  for (std::size_t i = 0, n = acc.size(); i < n; ++i) pa[i] += alpha * px[i];
}

void scale(Tensor& t, double factor) {
  double* p = t.data();
  for (std::size_t i = 0, n = t.size(); i < n; ++i) p[i] *= factor;
}

double max_abs(const Tensor& t) {
  double m = 0.0;
  const double* p = t.data();
  for (std::size_t i = 0, n = t.size(); i < n; ++i)
    m = std::max(m, std::abs(p[i]));
  return m;
}

bool all_finite(const Tensor& t) {
  const double* p = t.data();
  for (std::size_t i = 0, n = t.size(); i < n; ++i)
    if (!std::isfinite(p[i])) return false;
  return true;
}

}  // namespace reid
