#include "reid/model.hpp"

#include <algorithm>
#include <cmath>

namespace reid {

Model::Model(const NetConfig& cfg) : config(cfg), net(cfg) {
  if (cfg.joint_metric)
    metric.emplace(cfg.metric_dim, cfg.feature_dim);
}

Tensor Model::embed(const Tensor& image, NetCache& cache,
                    std::size_t threads) const {
  Tensor feature = net.forward(image, cache, threads);
  return metric ? metric->forward(feature) : feature;
}

ParamGrads ParamGrads::zeros_like(const Model& model) {
  ParamGrads g;
  g.net = model.net.zero_grads();
  if (model.metric) g.metric_l = Tensor::zeros(model.metric->l.shape());
  return g;
}

void ParamGrads::add(const ParamGrads& other, double alpha) {
  add_scaled(net.conv1_w, other.net.conv1_w, alpha);
  add_scaled(net.conv1_b, other.net.conv1_b, alpha);
  add_scaled(net.conv2_w, other.net.conv2_w, alpha);
  add_scaled(net.conv2_b, other.net.conv2_b, alpha);
  add_scaled(net.fc_w, other.net.fc_w, alpha);
  add_scaled(net.fc_b, other.net.fc_b, alpha);
  if (!metric_l.empty()) add_scaled(metric_l, other.metric_l, alpha);
}

double ParamGrads::max_abs() const {
  double m = 0.0;
  for (const Tensor* t : {&net.conv1_w, &net.conv1_b, &net.conv2_w,
                          &net.conv2_b, &net.fc_w, &net.fc_b, &metric_l})
    if (!t->empty()) m = std::max(m, reid::max_abs(*t));
  return m;
}

bool ParamGrads::finite() const {
  for (const Tensor* t : {&net.conv1_w, &net.conv1_b, &net.conv2_w,
                          &net.conv2_b, &net.fc_w, &net.fc_b, &metric_l})
    if (!t->empty() && !all_finite(*t)) return false;
  return true;
}

std::vector<ParamBinding> bind_params(Model& model, ParamGrads* grads) {
  auto g = [&](Tensor ParamGrads::*outer) -> Tensor* {
    return grads ? &(grads->*outer) : nullptr;
  };
  auto gn = [&](Tensor FeatureNetGrads::*inner) -> Tensor* {
    return grads ? &(grads->net.*inner) : nullptr;
  };
  std::vector<ParamBinding> out = {
      {"conv1.weights", true, 0, &model.net.conv1.weights,
       gn(&FeatureNetGrads::conv1_w)},
      {"conv1.bias", false, 1, &model.net.conv1.bias,
       gn(&FeatureNetGrads::conv1_b)},
      {"conv2.weights", true, 2, &model.net.conv2.weights,
       gn(&FeatureNetGrads::conv2_w)},
      {"conv2.bias", false, 3, &model.net.conv2.bias,
       gn(&FeatureNetGrads::conv2_b)},
      {"fc.weights", true, 4, &model.net.fc.weights,
       gn(&FeatureNetGrads::fc_w)},
      {"fc.bias", false, 5, &model.net.fc.bias, gn(&FeatureNetGrads::fc_b)},
  };
  if (model.metric)
    out.push_back(
        {"metric.l", true, 6, &model.metric->l, g(&ParamGrads::metric_l)});
  return out;
}

void init_params(Model& model, const Rng& rng) {
  const double conv_std = 0.01;
  const double fc_std = 0.001;
  for (auto& b : bind_params(model, nullptr)) {
    if (!b.decay) {
      *b.param = Tensor::zeros(b.param->shape());
      continue;
    }
    const double stddev =
        (b.stream_id == 0 || b.stream_id == 2) ? conv_std : fc_std;
    Rng stream = rng.derive(stream::kInit, static_cast<std::uint64_t>(b.stream_id));
    *b.param = Tensor::gaussian(b.param->shape(), stddev, stream);
  }
}

double max_abs_diff(const ParamGrads& a, const ParamGrads& b) {
  auto diff = [](const Tensor& x, const Tensor& y) {
    if (x.empty() && y.empty()) return 0.0;
    if (!x.same_shape(y)) throw ShapeError("gradient shape mismatch");
    double m = 0.0;
    for (std::size_t i = 0, n = x.size(); i < n; ++i)
      m = std::max(m, std::abs(x[i] - y[i]));
    return m;
  };
  double m = 0.0;
  m = std::max(m, diff(a.net.conv1_w, b.net.conv1_w));
  m = std::max(m, diff(a.net.conv1_b, b.net.conv1_b));
  m = std::max(m, diff(a.net.conv2_w, b.net.conv2_w));
  m = std::max(m, diff(a.net.conv2_b, b.net.conv2_b));
  m = std::max(m, diff(a.net.fc_w, b.net.fc_w));
  m = std::max(m, diff(a.net.fc_b, b.net.fc_b));
  m = std::max(m, diff(a.metric_l, b.metric_l));
  return m;
}

}  // namespace reid
