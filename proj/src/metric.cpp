#include "reid/metric.hpp"

namespace reid {

Tensor MetricLayer::forward(const Tensor& feature) const {
  if (feature.size() != in_dim())
    throw ShapeError("metric expects feature of dim " +
                     std::to_string(in_dim()) + ", got " +
                     std::to_string(feature.size()));
  const std::size_t M = out_dim(), D = in_dim();
  Tensor e = Tensor::zeros({M});
  const double* lp = l.data();
  const double* fp = feature.data();
  for (std::size_t a = 0; a < M; ++a) {
    double acc = 0.0;
    const double* row = lp + a * D;
    for (std::size_t b = 0; b < D; ++b) acc += row[b] * fp[b];
    e[a] = acc;
  }
  return e;
}

void MetricLayer::backward(const Tensor& feature, const Tensor& grad_embedding,
                           Tensor& grad_feature, Tensor& grad_l) const {
  if (feature.size() != in_dim() || grad_embedding.size() != out_dim())
    throw ShapeError("metric backward dimension mismatch");
  if (!grad_l.same_shape(l) || grad_feature.size() != in_dim())
    throw ShapeError("metric gradient accumulator shape mismatch");
  const std::size_t M = out_dim(), D = in_dim();
  const double* lp = l.data();
  const double* fp = feature.data();
  const double* gp = grad_embedding.data();
  double* gfp = grad_feature.data();
  double* glp = grad_l.data();
  std::fill(gfp, gfp + D, 0.0);
  for (std::size_t a = 0; a < M; ++a) {
    const double g = gp[a];
    const double* row = lp + a * D;
    double* grow = glp + a * D;
    for (std::size_t b = 0; b < D; ++b) {
      gfp[b] += row[b] * g;
      grow[b] += g * fp[b];
    }
  }
}

Tensor reconstruct_metric(const MetricLayer& layer) {
  const std::size_t M = layer.out_dim(), D = layer.in_dim();
  Tensor out = Tensor::zeros({D, D});
  const double* lp = layer.l.data();
  double* mp = out.data();
  for (std::size_t i = 0; i < D; ++i) {
    for (std::size_t j = i; j < D; ++j) {
      double acc = 0.0;
      for (std::size_t a = 0; a < M; ++a) acc += lp[a * D + i] * lp[a * D + j];
      mp[i * D + j] = acc;
      mp[j * D + i] = acc;
    }
  }
  return out;
}

double mahalanobis_distance(const Tensor& f1, const Tensor& f2,
                            const Tensor& m) {
  const std::size_t D = f1.size();
  if (f2.size() != D)
    throw ShapeError("mahalanobis feature dimension mismatch");
  if (m.shape().rank() != 2 || m.shape()[0] != D || m.shape()[1] != D)
    throw ShapeError("metric matrix must be " + std::to_string(D) + "x" +
                     std::to_string(D) + ", got " + m.shape().str());
  std::vector<double> delta(D);
  for (std::size_t i = 0; i < D; ++i) delta[i] = f1[i] - f2[i];
  const double* mp = m.data();
  double total = 0.0;
  for (std::size_t i = 0; i < D; ++i) {
    double acc = 0.0;
    const double* row = mp + i * D;
    for (std::size_t j = 0; j < D; ++j) acc += row[j] * delta[j];
    total += delta[i] * acc;
  }
  return total;
}

double factorized_distance(const Tensor& f1, const Tensor& f2,
                           const MetricLayer& layer) {
  const std::size_t D = layer.in_dim(), M = layer.out_dim();
  if (f1.size() != D || f2.size() != D)
    throw ShapeError("factorized_distance feature dimension mismatch");
  const double* lp = layer.l.data();
  const double* p1 = f1.data();
  const double* p2 = f2.data();
  double total = 0.0;
  for (std::size_t a = 0; a < M; ++a) {
    double acc = 0.0;
    const double* row = lp + a * D;
    for (std::size_t b = 0; b < D; ++b) acc += row[b] * (p1[b] - p2[b]);
    total += acc * acc;
  }
  return total;
}

double trace_regularizer(const MetricLayer& layer) {
  return squared_l2(layer.l);
}

}  // namespace reid
