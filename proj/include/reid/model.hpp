#pragma once

#include <optional>
#include <string>
#include <vector>

#include "reid/feature_net.hpp"
#include "reid/metric.hpp"

namespace reid {

// The full parameter set: feature network plus the metric factor L.
// With joint_metric off the metric layer is the identity map and the
// embedding is the normalized feature itself.
struct Model {
  explicit Model(const NetConfig& cfg);

  Tensor embed(const Tensor& image, NetCache& cache,
               std::size_t threads = 1) const;
  std::size_t embedding_dim() const {
    return metric ? metric->out_dim() : config.feature_dim;
  }

  NetConfig config;
  FeatureNet net;
  std::optional<MetricLayer> metric;
};

// Gradient of every parameter tensor, congruent with Model.
struct ParamGrads {
  FeatureNetGrads net;
  Tensor metric_l;  // empty when the model has no metric layer

  static ParamGrads zeros_like(const Model& model);
  void add(const ParamGrads& other, double alpha = 1.0);
  double max_abs() const;
  bool finite() const;
};

// One named parameter slot. stream_id is a stable per-slot constant used to
// derive initialization streams, independent of which slots a model has.
struct ParamBinding {
  std::string name;
  bool decay;  // weight decay applies (weights yes, biases no)
  int stream_id;
  Tensor* param;
  Tensor* grad;  // null when bound without gradients
};

std::vector<ParamBinding> bind_params(Model& model, ParamGrads* grads);

// Gaussian init: conv weights std 0.01, FC and metric weights std 0.001,
// all biases exactly 0. Streams derive from (rng, slot) so the draws for a
// given layer do not depend on other layers being present.
void init_params(Model& model, const Rng& rng);

double max_abs_diff(const ParamGrads& a, const ParamGrads& b);

}  // namespace reid
