#include "reid/feature_net.hpp"

namespace reid {

NetConfig NetConfig::tiny() {
  NetConfig c;
  c.input_channels = 3;
  c.input_height = 16;
  c.input_width = 12;
  c.conv1_channels = 4;
  c.conv1_kernel = 3;
  c.conv1_stride = 1;
  c.pool1_window = 2;
  c.pool1_stride = 2;
  c.conv2_channels = 4;
  c.conv2_kernel = 3;
  c.conv2_stride = 1;
  c.pool2_window = 2;
  c.pool2_stride = 2;
  c.feature_dim = 6;
  c.metric_dim = 6;
  return c;
}

FeatureNet::FeatureNet(const NetConfig& cfg)
    : conv1(cfg.conv1_channels, cfg.input_channels, cfg.conv1_kernel,
            cfg.conv1_stride),
      conv2(cfg.conv2_channels, cfg.conv1_channels, cfg.conv2_kernel,
            cfg.conv2_stride),
      pool1(cfg.pool1_window, cfg.pool1_stride),
      pool2(cfg.pool2_window, cfg.pool2_stride),
      fc(1, 1),  // re-shaped below once the flat size is known
      l2norm(cfg.l2_epsilon),
      config(cfg) {
  const Shape input{cfg.input_channels, cfg.input_height, cfg.input_width};
  const Shape s1 = conv1.output_shape(input);
  const Shape s2 = pool1.output_shape(s1);
  const Shape s3 = conv2.output_shape(s2);
  const Shape s4 = pool2.output_shape(s3);
  flat_dim_ = s4.count();
  fc = FCLayer(cfg.feature_dim, flat_dim_);
  chain_ = {input, s1, s2, s3, s4, Shape{flat_dim_}, Shape{cfg.feature_dim}};
}

Tensor FeatureNet::forward(const Tensor& image, NetCache& cache,
                           std::size_t threads) const {
  if (!(image.shape() == input_shape()))
    throw ShapeError("net input shape " + image.shape().str() +
                     " does not match configured " + input_shape().str());
  Tensor x = conv1.forward(image, cache.conv1, threads);
  x = relu_forward(x, cache.relu1);
  x = pool1.forward(x, cache.pool1);
  x = conv2.forward(x, cache.conv2, threads);
  x = relu_forward(x, cache.relu2);
  x = pool2.forward(x, cache.pool2);
  x = fc.forward(x, cache.fc);
  return l2norm.forward(x, cache.l2);
}

void FeatureNet::backward(const NetCache& cache, const Tensor& grad_feature,
                          FeatureNetGrads& acc, std::size_t threads) const {
  if (cache.l2.output.empty())
    throw StateError("net backward called without a forward cache");
  Tensor g = l2norm.backward(cache.l2, grad_feature);
  g = fc.backward(cache.fc, g, acc.fc_w, acc.fc_b);
  g = pool2.backward(cache.pool2, g);
  g = relu_backward(cache.relu2, g);
  g = conv2.backward(cache.conv2, g, acc.conv2_w, acc.conv2_b, threads);
  g = pool1.backward(cache.pool1, g);
  g = relu_backward(cache.relu1, g);
  // Gradient wrt the input image is never consumed.
  conv1.backward(cache.conv1, g, acc.conv1_w, acc.conv1_b, threads,
                 /*need_grad_in=*/false);
}

FeatureNetGrads FeatureNet::zero_grads() const {
  FeatureNetGrads g;
  g.conv1_w = Tensor::zeros(conv1.weights.shape());
  g.conv1_b = Tensor::zeros(conv1.bias.shape());
  g.conv2_w = Tensor::zeros(conv2.weights.shape());
  g.conv2_b = Tensor::zeros(conv2.bias.shape());
  g.fc_w = Tensor::zeros(fc.weights.shape());
  g.fc_b = Tensor::zeros(fc.bias.shape());
  return g;
}

}  // namespace reid
