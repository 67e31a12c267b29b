#pragma once

#include <cstdint>
#include <vector>

#include "reid/tensor.hpp"

namespace reid {

// Per-layer forward state kept for the backward pass. Each cache stores the
// minimum its layer needs; an empty cache means no forward has run.
struct ConvCache {
  Tensor input;
};

struct ReluCache {
  std::vector<std::uint8_t> positive;  // input > 0 mask
  Shape shape;
};

struct PoolCache {
  std::vector<std::size_t> argmax;  // flat input index per output element
  Shape in_shape;
  Shape out_shape;
};

struct FCCache {
  Tensor input;  // flattened
  Shape in_shape;
};

struct L2NormCache {
  Tensor output;  // normalized vector
  double input_norm = 0.0;
};

// Valid (no padding) cross-correlation with per-output-channel bias.
// Output spatial dim = floor((in - kernel) / stride) + 1 per axis.
class ConvLayer {
 public:
  ConvLayer(std::size_t out_channels, std::size_t in_channels,
            std::size_t kernel, std::size_t stride);

  Tensor forward(const Tensor& x, ConvCache& cache,
                 std::size_t threads = 1) const;
  // Accumulates into grad_w / grad_b; returns grad wrt input (empty tensor
  // when need_grad_in is false).
  Tensor backward(const ConvCache& cache, const Tensor& grad_out,
                  Tensor& grad_w, Tensor& grad_b, std::size_t threads = 1,
                  bool need_grad_in = true) const;
  Shape output_shape(const Shape& in) const;

  std::size_t out_channels() const { return weights.shape()[0]; }
  std::size_t in_channels() const { return weights.shape()[1]; }

  Tensor weights;  // [outC, inC, k, k]
  Tensor bias;     // [outC]
  std::size_t kernel;
  std::size_t stride;
};

// Max pooling; trailing partial windows are dropped (floor arithmetic) and
// ties resolve to the first (row-major smallest) index.
class MaxPoolLayer {
 public:
  MaxPoolLayer(std::size_t window, std::size_t stride);

  Tensor forward(const Tensor& x, PoolCache& cache) const;
  Tensor backward(const PoolCache& cache, const Tensor& grad_out) const;
  Shape output_shape(const Shape& in) const;

  std::size_t window;
  std::size_t stride;
};

// y = max(x, 0); subgradient at 0 is 0.
Tensor relu_forward(const Tensor& x, ReluCache& cache);
Tensor relu_backward(const ReluCache& cache, const Tensor& grad_out);

// y = W x + b on the flattened input.
class FCLayer {
 public:
  FCLayer(std::size_t out_dim, std::size_t in_dim);

  Tensor forward(const Tensor& x, FCCache& cache) const;
  // Accumulates into grad_w / grad_b; returns grad wrt input in the
  // original input shape.
  Tensor backward(const FCCache& cache, const Tensor& grad_out,
                  Tensor& grad_w, Tensor& grad_b) const;

  std::size_t out_dim() const { return weights.shape()[0]; }
  std::size_t in_dim() const { return weights.shape()[1]; }

  Tensor weights;  // [out, in]
  Tensor bias;     // [out]
};

// y = x / ||x||; inputs with norm <= epsilon are rejected.
class L2NormLayer {
 public:
  explicit L2NormLayer(double epsilon = 1e-12) : epsilon(epsilon) {}

  Tensor forward(const Tensor& x, L2NormCache& cache) const;
  Tensor backward(const L2NormCache& cache, const Tensor& grad_out) const;

  double epsilon;
};

}  // namespace reid
