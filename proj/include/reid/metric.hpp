#pragma once

#include "reid/tensor.hpp"

namespace reid {

// Linear metric layer: the factor L of M = L^T L. No bias term -- a bias
// would break d^2(I,I) = 0 and the factorized-distance identity.
class MetricLayer {
 public:
  MetricLayer(std::size_t out_dim, std::size_t in_dim)
      : l(Tensor::zeros({out_dim, in_dim})) {}

  std::size_t out_dim() const { return l.shape()[0]; }
  std::size_t in_dim() const { return l.shape()[1]; }

  // Embedding L * feature.
  Tensor forward(const Tensor& feature) const;
  // grad_feature = L^T grad_embedding; grad_l += grad_embedding (x) feature.
  void backward(const Tensor& feature, const Tensor& grad_embedding,
                Tensor& grad_feature, Tensor& grad_l) const;

  Tensor l;  // [m, d]
};

// M = L^T L, built exactly symmetric. PSD by construction, so no projection
// step exists anywhere in this module.
Tensor reconstruct_metric(const MetricLayer& layer);

// (f1-f2)^T M (f1-f2) for a square metric matrix M.
double mahalanobis_distance(const Tensor& f1, const Tensor& f2,
                            const Tensor& m);

// ||L (f1-f2)||^2; equal to the Mahalanobis form with M = L^T L.
double factorized_distance(const Tensor& f1, const Tensor& f2,
                           const MetricLayer& layer);

// sum L_ij^2 == trace(L^T L); the tr(M) regularizer realized as weight decay.
double trace_regularizer(const MetricLayer& layer);

}  // namespace reid
