#include "reid/layers.hpp"

#include <algorithm>
#include <cmath>

#include "reid/parallel.hpp"

namespace reid {

namespace {

void require_chw(const Tensor& x, const char* who) {
  if (x.shape().rank() != 3)
    throw ShapeError(std::string(who) + " expects a [C,H,W] tensor, got " +
                     x.shape().str());
}

}  // namespace

ConvLayer::ConvLayer(std::size_t out_channels, std::size_t in_channels,
                     std::size_t kernel, std::size_t stride)
    : weights(Tensor::zeros({out_channels, in_channels, kernel, kernel})),
      bias(Tensor::zeros({out_channels})),
      kernel(kernel),
      stride(stride) {
  if (kernel < 1 || stride < 1)
    throw ParamError("conv kernel and stride must be >= 1");
}

Shape ConvLayer::output_shape(const Shape& in) const {
  if (in.rank() != 3)
    throw ShapeError("conv input must be [C,H,W], got " + in.str());
  if (in[0] != in_channels())
    throw ShapeError("conv expects " + std::to_string(in_channels()) +
                     " input channels, got " + std::to_string(in[0]));
  if (in[1] < kernel || in[2] < kernel)
    throw ShapeError("conv input " + in.str() + " smaller than kernel " +
                     std::to_string(kernel));
  return Shape{out_channels(), (in[1] - kernel) / stride + 1,
               (in[2] - kernel) / stride + 1};
}

Tensor ConvLayer::forward(const Tensor& x, ConvCache& cache,
                          std::size_t threads) const {
  const Shape out_shape = output_shape(x.shape());
  const std::size_t IC = in_channels(), OC = out_channels();
  const std::size_t H = x.shape()[1], W = x.shape()[2];
  const std::size_t OH = out_shape[1], OW = out_shape[2];
  const std::size_t K = kernel, S = stride;

  Tensor out = Tensor::zeros(out_shape);
  const double* xp = x.data();
  const double* wp = weights.data();
  const double* bp = bias.data();
  double* op = out.data();

  parallel_for(OC, threads, [&](std::size_t oc) {
    double* ochan = op + oc * OH * OW;
    std::fill(ochan, ochan + OH * OW, bp[oc]);
    for (std::size_t ic = 0; ic < IC; ++ic) {
      for (std::size_t ky = 0; ky < K; ++ky) {
        for (std::size_t kx = 0; kx < K; ++kx) {
          const double wv = wp[((oc * IC + ic) * K + ky) * K + kx];
          for (std::size_t oy = 0; oy < OH; ++oy) {
            const double* xrow = xp + (ic * H + oy * S + ky) * W + kx;
            double* orow = ochan + oy * OW;
            for (std::size_t ox = 0; ox < OW; ++ox)
              orow[ox] += wv * xrow[ox * S];
          }
        }
      }
    }
  });

  cache.input = x;
  return out;
}

Tensor ConvLayer::backward(const ConvCache& cache, const Tensor& grad_out,
                           Tensor& grad_w, Tensor& grad_b,
                           std::size_t threads, bool need_grad_in) const {
  if (cache.input.empty())
    throw StateError("conv backward called without a forward cache");
  const Shape out_shape = output_shape(cache.input.shape());
  if (!(grad_out.shape() == out_shape))
    throw ShapeError("conv grad_out shape " + grad_out.shape().str() +
                     " does not match output " + out_shape.str());
  if (!grad_w.same_shape(weights) || !grad_b.same_shape(bias))
    throw ShapeError("conv gradient accumulator shape mismatch");

  const std::size_t IC = in_channels(), OC = out_channels();
  const std::size_t H = cache.input.shape()[1], W = cache.input.shape()[2];
  const std::size_t OH = out_shape[1], OW = out_shape[2];
  const std::size_t K = kernel, S = stride;

  const double* xp = cache.input.data();
  const double* gp = grad_out.data();
  const double* wp = weights.data();
  double* gwp = grad_w.data();
  double* gbp = grad_b.data();

  parallel_for(OC, threads, [&](std::size_t oc) {
    const double* gchan = gp + oc * OH * OW;
    double bsum = 0.0;
    for (std::size_t i = 0; i < OH * OW; ++i) bsum += gchan[i];
    gbp[oc] += bsum;
    for (std::size_t ic = 0; ic < IC; ++ic) {
      for (std::size_t ky = 0; ky < K; ++ky) {
        for (std::size_t kx = 0; kx < K; ++kx) {
          double acc = 0.0;
          for (std::size_t oy = 0; oy < OH; ++oy) {
            const double* xrow = xp + (ic * H + oy * S + ky) * W + kx;
            const double* grow = gchan + oy * OW;
            for (std::size_t ox = 0; ox < OW; ++ox)
              acc += grow[ox] * xrow[ox * S];
          }
          gwp[((oc * IC + ic) * K + ky) * K + kx] += acc;
        }
      }
    }
  });

  if (!need_grad_in) return Tensor();

  Tensor grad_in = Tensor::zeros(cache.input.shape());
  double* gip = grad_in.data();
  parallel_for(IC, threads, [&](std::size_t ic) {
    for (std::size_t oc = 0; oc < OC; ++oc) {
      const double* gchan = gp + oc * OH * OW;
      for (std::size_t ky = 0; ky < K; ++ky) {
        for (std::size_t kx = 0; kx < K; ++kx) {
          const double wv = wp[((oc * IC + ic) * K + ky) * K + kx];
          for (std::size_t oy = 0; oy < OH; ++oy) {
            double* irow = gip + (ic * H + oy * S + ky) * W + kx;
            const double* grow = gchan + oy * OW;
            for (std::size_t ox = 0; ox < OW; ++ox)
              irow[ox * S] += wv * grow[ox];
          }
        }
      }
    }
  });
  return grad_in;
}

MaxPoolLayer::MaxPoolLayer(std::size_t window, std::size_t stride)
    : window(window), stride(stride) {
  if (window < 1 || stride < 1)
    throw ParamError("pool window and stride must be >= 1");
}

Shape MaxPoolLayer::output_shape(const Shape& in) const {
  if (in.rank() != 3)
    throw ShapeError("pool input must be [C,H,W], got " + in.str());
  if (in[1] < window || in[2] < window)
    throw ShapeError("pool input " + in.str() + " smaller than window " +
                     std::to_string(window));
  return Shape{in[0], (in[1] - window) / stride + 1,
               (in[2] - window) / stride + 1};
}

Tensor MaxPoolLayer::forward(const Tensor& x, PoolCache& cache) const {
  require_chw(x, "pool");
  const Shape out_shape = output_shape(x.shape());
  const std::size_t C = x.shape()[0], H = x.shape()[1], W = x.shape()[2];
  const std::size_t OH = out_shape[1], OW = out_shape[2];

  Tensor out = Tensor::zeros(out_shape);
  cache.argmax.assign(out_shape.count(), 0);
  cache.in_shape = x.shape();
  cache.out_shape = out_shape;

  const double* xp = x.data();
  double* op = out.data();
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t oy = 0; oy < OH; ++oy) {
      for (std::size_t ox = 0; ox < OW; ++ox) {
        std::size_t best_idx = (c * H + oy * stride) * W + ox * stride;
        double best = xp[best_idx];
        for (std::size_t wy = 0; wy < window; ++wy) {
          const std::size_t row = (c * H + oy * stride + wy) * W + ox * stride;
          for (std::size_t wx = 0; wx < window; ++wx) {
            if (xp[row + wx] > best) {  // strict: first max wins ties
              best = xp[row + wx];
              best_idx = row + wx;
            }
          }
        }
        const std::size_t o = (c * OH + oy) * OW + ox;
        op[o] = best;
        cache.argmax[o] = best_idx;
      }
    }
  }
  return out;
}

Tensor MaxPoolLayer::backward(const PoolCache& cache,
                              const Tensor& grad_out) const {
  if (cache.argmax.empty())
    throw StateError("pool backward called without a forward cache");
  if (!(grad_out.shape() == cache.out_shape))
    throw ShapeError("pool grad_out shape " + grad_out.shape().str() +
                     " does not match output " + cache.out_shape.str());
  Tensor grad_in = Tensor::zeros(cache.in_shape);
  double* gip = grad_in.data();
  const double* gp = grad_out.data();
  for (std::size_t i = 0, n = grad_out.size(); i < n; ++i)
    gip[cache.argmax[i]] += gp[i];
  return grad_in;
}

Tensor relu_forward(const Tensor& x, ReluCache& cache) {
  Tensor y = x;
  cache.positive.assign(x.size(), 0);
  cache.shape = x.shape();
  double* p = y.data();
  for (std::size_t i = 0, n = y.size(); i < n; ++i) {
    if (p[i] > 0.0) {
      cache.positive[i] = 1;
    } else {
      p[i] = 0.0;
    }
  }
  return y;
}

Tensor relu_backward(const ReluCache& cache, const Tensor& grad_out) {
  if (cache.positive.empty() && cache.shape.dims.empty())
    throw StateError("relu backward called without a forward cache");
  if (!(grad_out.shape() == cache.shape))
    throw ShapeError("relu grad_out shape " + grad_out.shape().str() +
                     " does not match input " + cache.shape.str());
  Tensor grad_in = grad_out;
  double* p = grad_in.data();
  for (std::size_t i = 0, n = grad_in.size(); i < n; ++i)
    if (!cache.positive[i]) p[i] = 0.0;
  return grad_in;
}

FCLayer::FCLayer(std::size_t out_dim, std::size_t in_dim)
    : weights(Tensor::zeros({out_dim, in_dim})),
      bias(Tensor::zeros({out_dim})) {}

Tensor FCLayer::forward(const Tensor& x, FCCache& cache) const {
  if (x.size() != in_dim())
    throw ShapeError("fc expects flattened input of " +
                     std::to_string(in_dim()) + " values, got " +
                     std::to_string(x.size()));
  const std::size_t O = out_dim(), I = in_dim();
  Tensor y = Tensor::zeros({O});
  const double* xp = x.data();
  const double* wp = weights.data();
  double* yp = y.data();
  for (std::size_t o = 0; o < O; ++o) {
    double acc = bias[o];
    const double* wrow = wp + o * I;
    for (std::size_t i = 0; i < I; ++i) acc += wrow[i] * xp[i];
    yp[o] = acc;
  }
  cache.in_shape = x.shape();
  cache.input = Tensor::zeros({x.size()});
  std::copy(x.data(), x.data() + x.size(), cache.input.data());
  return y;
}

Tensor FCLayer::backward(const FCCache& cache, const Tensor& grad_out,
                         Tensor& grad_w, Tensor& grad_b) const {
  if (cache.input.empty())
    throw StateError("fc backward called without a forward cache");
  if (grad_out.size() != out_dim())
    throw ShapeError("fc grad_out size " + std::to_string(grad_out.size()) +
                     " does not match out dim " + std::to_string(out_dim()));
  if (!grad_w.same_shape(weights) || !grad_b.same_shape(bias))
    throw ShapeError("fc gradient accumulator shape mismatch");

  const std::size_t O = out_dim(), I = in_dim();
  Tensor grad_in = Tensor::zeros(cache.in_shape);
  const double* gp = grad_out.data();
  const double* xp = cache.input.data();
  const double* wp = weights.data();
  double* gip = grad_in.data();
  double* gwp = grad_w.data();
  for (std::size_t o = 0; o < O; ++o) {
    const double g = gp[o];
    grad_b[o] += g;
    const double* wrow = wp + o * I;
    double* gwrow = gwp + o * I;
    for (std::size_t i = 0; i < I; ++i) {
      gip[i] += wrow[i] * g;
      gwrow[i] += g * xp[i];
    }
  }
  return grad_in;
}

Tensor L2NormLayer::forward(const Tensor& x, L2NormCache& cache) const {
  const double norm = std::sqrt(squared_l2(x));
  if (!(norm > epsilon))
    throw NumericError("l2norm: degenerate input with norm " +
                       std::to_string(norm));
  Tensor y = x;
  scale(y, 1.0 / norm);
  cache.output = y;
  cache.input_norm = norm;
  return y;
}

Tensor L2NormLayer::backward(const L2NormCache& cache,
                             const Tensor& grad_out) const {
  if (cache.output.empty())
    throw StateError("l2norm backward called without a forward cache");
  if (!grad_out.same_shape(cache.output))
    throw ShapeError("l2norm grad_out shape " + grad_out.shape().str() +
                     " does not match " + cache.output.shape().str());
  // grad_in = (g - y (y . g)) / ||x||
  const double proj = dot(cache.output, grad_out);
  Tensor grad_in = grad_out;
  add_scaled(grad_in, cache.output, -proj);
  scale(grad_in, 1.0 / cache.input_norm);
  return grad_in;
}

}  // namespace reid
