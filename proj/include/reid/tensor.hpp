#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "reid/error.hpp"
#include "reid/rng.hpp"

namespace reid {

// Index space of a dense array. Every dim must be >= 1 and the element
// count must fit std::size_t.
struct Shape {
  std::vector<std::size_t> dims;

  Shape() = default;
  Shape(std::initializer_list<std::size_t> d) : dims(d) { validate(); }
  explicit Shape(std::vector<std::size_t> d) : dims(std::move(d)) {
    validate();
  }

  std::size_t count() const;
  std::size_t rank() const { return dims.size(); }
  std::size_t operator[](std::size_t i) const { return dims[i]; }
  bool operator==(const Shape&) const = default;
  std::string str() const;  // e.g. "3x230x80"

 private:
  void validate() const;
};

// Dense row-major array of 64-bit reals. Immutable once built except through
// the explicit mutating entry points below (add_scaled, scale, data()).
class Tensor {
 public:
  Tensor() = default;

  static Tensor filled(const Shape& shape, double value);
  static Tensor zeros(const Shape& shape) { return filled(shape, 0.0); }
  // Elements i.i.d. N(0, stddev^2); bit-reproducible per (shape, stddev, seed).
  static Tensor gaussian(const Shape& shape, double stddev, Rng& rng);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool empty() const { return data_.empty(); }

 private:
  Tensor(Shape shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {}

  Shape shape_;
  std::vector<double> data_;
};

double squared_l2(const Tensor& t);
double dot(const Tensor& a, const Tensor& b);
// acc += alpha * x, elementwise; shape mismatch throws.
void add_scaled(Tensor& acc, const Tensor& x, double alpha);
void scale(Tensor& t, double factor);
double max_abs(const Tensor& t);
bool all_finite(const Tensor& t);

}  // namespace reid
