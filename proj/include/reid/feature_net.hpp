#pragma once

#include <vector>

#include "reid/layers.hpp"

namespace reid {

// Architecture knobs. Defaults give the full-size network; everything is
// configurable so small test nets run the same code paths.
struct NetConfig {
  std::size_t input_channels = 3;
  std::size_t input_height = 230;
  std::size_t input_width = 80;
  std::size_t conv1_channels = 32;
  std::size_t conv1_kernel = 5;
  std::size_t conv1_stride = 2;
  std::size_t pool1_window = 3;
  std::size_t pool1_stride = 3;
  std::size_t conv2_channels = 32;
  std::size_t conv2_kernel = 5;
  std::size_t conv2_stride = 1;
  std::size_t pool2_window = 3;
  std::size_t pool2_stride = 3;
  std::size_t feature_dim = 400;
  std::size_t metric_dim = 400;
  bool joint_metric = true;
  double l2_epsilon = 1e-12;

  // Small architecture used by gradcheck/equiv: 3x16x12 input, two
  // conv(4,3x3,s1) + pool(2/2) blocks, FC->6, metric 6x6.
  static NetConfig tiny();

  bool operator==(const NetConfig&) const = default;
};

struct NetCache {
  ConvCache conv1, conv2;
  ReluCache relu1, relu2;
  PoolCache pool1, pool2;
  FCCache fc;
  L2NormCache l2;
  // The cached feature F_W(I) after normalization.
  const Tensor& feature() const { return l2.output; }
};

struct FeatureNetGrads {
  Tensor conv1_w, conv1_b, conv2_w, conv2_b, fc_w, fc_b;
};

// Feature sub-network: conv-relu-pool, conv-relu-pool, FC, L2 normalize.
// The shape chain is validated at construction.
class FeatureNet {
 public:
  explicit FeatureNet(const NetConfig& config);

  // Returns the unit-norm feature vector; fills the cache for backward.
  Tensor forward(const Tensor& image, NetCache& cache,
                 std::size_t threads = 1) const;
  // Accumulates this image's parameter gradients into acc.
  void backward(const NetCache& cache, const Tensor& grad_feature,
                FeatureNetGrads& acc, std::size_t threads = 1) const;

  FeatureNetGrads zero_grads() const;

  // Output shape after each stage: input, conv1, pool1, conv2, pool2,
  // then the flattened/fc sizes ([flat] and [feature_dim]).
  const std::vector<Shape>& shape_chain() const { return chain_; }
  std::size_t flat_dim() const { return flat_dim_; }
  const Shape& input_shape() const { return chain_.front(); }

  ConvLayer conv1, conv2;
  MaxPoolLayer pool1, pool2;
  FCLayer fc;
  L2NormLayer l2norm;
  NetConfig config;

 private:
  std::vector<Shape> chain_;
  std::size_t flat_dim_ = 0;
};

}  // namespace reid
