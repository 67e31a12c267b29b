#include "reid/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "reid/parallel.hpp"

namespace reid {

double learning_rate_at(const TrainConfig& cfg, std::size_t iteration) {
  if (cfg.lr_decay_every == 0) return cfg.learning_rate;
  const std::size_t steps = (iteration - 1) / cfg.lr_decay_every;
  return cfg.learning_rate * std::pow(cfg.lr_decay_factor,
                                      static_cast<double>(steps));
}

Tensor augment_image(const Tensor& image, std::size_t crop_h,
                     std::size_t crop_w, bool training, int perturbation,
                     Rng& rng) {
  if (image.shape().rank() != 3)
    throw ShapeError("augment expects a [C,H,W] image, got " +
                     image.shape().str());
  const std::size_t C = image.shape()[0], H = image.shape()[1],
                    W = image.shape()[2];
  if (H < crop_h || W < crop_w)
    throw ShapeError("image " + image.shape().str() +
                     " smaller than crop " + std::to_string(crop_h) + "x" +
                     std::to_string(crop_w));

  bool mirror = false;
  long top = static_cast<long>((H - crop_h) / 2);
  long left = static_cast<long>((W - crop_w) / 2);
  if (training) {
    mirror = rng.next_unit() < 0.5;
    if (perturbation > 0) {
      const long span = 2L * perturbation + 1;
      top += static_cast<long>(rng.below(span)) - perturbation;
      left += static_cast<long>(rng.below(span)) - perturbation;
      top = std::clamp<long>(top, 0, static_cast<long>(H - crop_h));
      left = std::clamp<long>(left, 0, static_cast<long>(W - crop_w));
    }
  }

  Tensor out = Tensor::zeros({C, crop_h, crop_w});
  const double* src = image.data();
  double* dst = out.data();
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t y = 0; y < crop_h; ++y) {
      const double* srow = src + (c * H + top + y) * W;
      double* drow = dst + (c * crop_h + y) * crop_w;
      if (mirror) {
        for (std::size_t x = 0; x < crop_w; ++x)
          drow[x] = srow[W - 1 - (left + x)];
      } else {
        for (std::size_t x = 0; x < crop_w; ++x) drow[x] = srow[left + x];
      }
    }
  }
  return out;
}

namespace {

// Backpropagate one image's output gradient through the metric layer (when
// present) and the feature net, accumulating parameter gradients.
void backprop_image(const Model& model, const NetCache& cache,
                    const Tensor& grad_embedding, ParamGrads& acc,
                    std::size_t threads) {
  if (model.metric) {
    Tensor grad_feature = Tensor::zeros({model.metric->in_dim()});
    model.metric->backward(cache.feature(), grad_embedding, grad_feature,
                           acc.metric_l);
    model.net.backward(cache, grad_feature, acc.net, threads);
  } else {
    model.net.backward(cache, grad_embedding, acc.net, threads);
  }
}

}  // namespace

BatchGradient batch_gradient_deduplicated(const Model& model,
                                          const std::vector<Tensor>& inputs,
                                          const TripletBatch& batch,
                                          std::size_t threads,
                                          bool deterministic) {
  const std::size_t n = batch.distinct_images.size();
  if (inputs.size() != n)
    throw StateError("expected one input per distinct image");

  std::vector<NetCache> caches(n);
  std::vector<Tensor> embeddings(n);
  parallel_for(n, threads, [&](std::size_t i) {
    embeddings[i] = model.embed(inputs[i], caches[i], 1);
  });
  for (const Tensor& e : embeddings)
    if (!all_finite(e)) throw NumericError("non-finite embedding");

  BatchGradient out;
  out.forward_passes = n;
  out.report = triplet_loss(embeddings, batch);
  const std::vector<Tensor> ograds = output_gradients(embeddings, batch);
  out.grads = ParamGrads::zeros_like(model);

  if (deterministic || threads <= 1) {
    // Summation in distinct-image order; layer-internal threading assigns
    // each output element to exactly one worker, so the result does not
    // depend on the thread count.
    for (std::size_t i = 0; i < n; ++i)
      backprop_image(model, caches[i], ograds[i], out.grads, threads);
  } else {
    const std::size_t blocks = std::min(threads, n);
    std::vector<ParamGrads> partial;
    partial.reserve(blocks);
    for (std::size_t b = 0; b < blocks; ++b)
      partial.push_back(ParamGrads::zeros_like(model));
    parallel_for(blocks, blocks, [&](std::size_t b) {
      const std::size_t lo = n * b / blocks, hi = n * (b + 1) / blocks;
      for (std::size_t i = lo; i < hi; ++i)
        backprop_image(model, caches[i], ograds[i], partial[b], 1);
    });
    for (std::size_t b = 0; b < blocks; ++b) out.grads.add(partial[b]);
  }
  out.backward_passes = n;
  return out;
}

BatchGradient batch_gradient_per_triplet(const Model& model,
                                         const std::vector<Tensor>& inputs,
                                         const TripletBatch& batch,
                                         std::size_t threads) {
  const std::size_t n = batch.distinct_images.size();
  if (inputs.size() != n)
    throw StateError("expected one input per distinct image");

  BatchGradient out;
  out.grads = ParamGrads::zeros_like(model);
  out.report.total_triplets = batch.triplets.size();
  const std::size_t dim = model.embedding_dim();

  for (const Triplet& t : batch.triplets) {
    NetCache ca, cp, cn;
    const Tensor ea = model.embed(inputs[t.anchor], ca, threads);
    const Tensor ep = model.embed(inputs[t.positive], cp, threads);
    const Tensor en = model.embed(inputs[t.negative], cn, threads);
    out.forward_passes += 3;

    double d_an = 0.0, d_ap = 0.0;
    for (std::size_t k = 0; k < dim; ++k) {
      const double dn = ea[k] - en[k];
      const double dp = ea[k] - ep[k];
      d_an += dn * dn;
      d_ap += dp * dp;
    }
    const double dd = d_an - d_ap;
    if (dd <= 0.0) ++out.report.order_violations;
    if (dd >= 1.0) continue;
    ++out.report.margin_violations;
    out.report.loss += 1.0 - dd;

    Tensor ga = Tensor::zeros({dim});
    Tensor gp = Tensor::zeros({dim});
    Tensor gn = Tensor::zeros({dim});
    for (std::size_t k = 0; k < dim; ++k) {
      ga[k] = 2.0 * (en[k] - ep[k]);
      gp[k] = -2.0 * (ea[k] - ep[k]);
      gn[k] = 2.0 * (ea[k] - en[k]);
    }
    backprop_image(model, ca, ga, out.grads, threads);
    backprop_image(model, cp, gp, out.grads, threads);
    backprop_image(model, cn, gn, out.grads, threads);
    out.backward_passes += 3;
  }
  return out;
}

namespace {

void apply_update(Model& model, ParamGrads& grads, ParamGrads* velocity,
                  const TrainConfig& cfg, double lr) {
  auto bindings = bind_params(model, &grads);
  if (cfg.weight_decay > 0)
    for (auto& b : bindings)
      if (b.decay) add_scaled(*b.grad, *b.param, cfg.weight_decay);
  if (cfg.momentum > 0 && velocity) {
    auto vel = bind_params(model, velocity);
    for (std::size_t i = 0; i < bindings.size(); ++i) {
      scale(*vel[i].grad, cfg.momentum);
      add_scaled(*vel[i].grad, *bindings[i].grad, 1.0);
      add_scaled(*bindings[i].param, *vel[i].grad, -lr);
    }
  } else {
    for (auto& b : bindings) add_scaled(*b.param, *b.grad, -lr);
  }
}

std::vector<Tensor> augmented_inputs(const Dataset& dataset,
                                     const TripletBatch& batch,
                                     const TrainConfig& cfg,
                                     const NetConfig& net,
                                     std::size_t iteration, bool training) {
  const Rng root(cfg.seed);
  std::vector<Tensor> inputs;
  inputs.reserve(batch.distinct_images.size());
  for (std::size_t i = 0; i < batch.distinct_images.size(); ++i) {
    Rng aug = root.derive(stream::kAugment, iteration, i);
    inputs.push_back(augment_image(dataset.images[batch.distinct_images[i]],
                                   net.input_height, net.input_width,
                                   training, cfg.crop_perturbation, aug));
  }
  return inputs;
}

}  // namespace

void train_iteration(Model& model, const Dataset& dataset,
                     const TrainConfig& cfg, TrainState& state,
                     ParamGrads* velocity, std::ostream* log) {
  const std::size_t t = state.iteration + 1;
  const double lr = learning_rate_at(cfg, t);
  const Rng root(cfg.seed);

  Rng batch_rng = root.derive(stream::kBatch, t);
  const TripletBatch batch = generate_batch(
      dataset.labels, cfg.classes_per_batch, cfg.triplets_per_batch,
      batch_rng);
  const std::vector<Tensor> inputs =
      augmented_inputs(dataset, batch, cfg, model.config, t, cfg.augment);

  BatchGradient bg;
  try {
    bg = batch_gradient_deduplicated(model, inputs, batch, cfg.threads,
                                     cfg.deterministic);
  } catch (const DivergenceError&) {
    throw;
  } catch (const NumericError& e) {
    throw DivergenceError(e.what(), t);
  }
  if (!std::isfinite(bg.report.loss))
    throw DivergenceError("non-finite batch loss", t);
  if (!bg.grads.finite())
    throw DivergenceError("non-finite parameter gradient", t);

  apply_update(model, bg.grads, velocity, cfg, lr);

  state.iteration = t;
  state.last_report = bg.report;
  state.loss_history.push_back(bg.report.loss);
  state.forward_history.push_back(bg.forward_passes);
  state.last_forward_passes = bg.forward_passes;
  state.last_backward_passes = bg.backward_passes;
  state.total_forward_passes += bg.forward_passes;
  state.total_backward_passes += bg.backward_passes;

  if (cfg.stop_on_holdout) {
    Rng holdout_rng = root.derive(stream::kHoldout, t);
    const TripletBatch probe = generate_batch(
        dataset.labels, cfg.classes_per_batch, cfg.triplets_per_batch,
        holdout_rng);
    std::vector<Tensor> probe_inputs = augmented_inputs(
        dataset, probe, cfg, model.config, t, /*training=*/false);
    std::vector<Tensor> embeddings(probe_inputs.size());
    parallel_for(probe_inputs.size(), cfg.threads, [&](std::size_t i) {
      NetCache cache;
      embeddings[i] = model.embed(probe_inputs[i], cache, 1);
    });
    state.last_holdout_violations = count_violations(
        embeddings, probe,
        cfg.stop_on_margin ? ViolationMode::Margin : ViolationMode::Order);
  }

  if (log) {
    char line[192];
    std::snprintf(line, sizeof line, "%zu %.17g %zu %zu %.17g %zu %zu\n", t,
                  bg.report.loss, bg.report.margin_violations,
                  bg.report.order_violations, lr,
                  batch.distinct_images.size(), bg.forward_passes);
    (*log) << line;
    log->flush();
  }
}

void train_loop(Model& model, const Dataset& dataset, const TrainConfig& cfg,
                TrainState& state, std::ostream* log) {
  ParamGrads velocity;
  ParamGrads* vel = nullptr;
  if (cfg.momentum > 0) {
    velocity = ParamGrads::zeros_like(model);
    vel = &velocity;
  }
  state.stop_reason = "max_iterations";
  while (state.iteration < cfg.max_iterations) {
    train_iteration(model, dataset, cfg, state, vel, log);
    const std::size_t violations =
        cfg.stop_on_holdout
            ? state.last_holdout_violations
            : (cfg.stop_on_margin ? state.last_report.margin_violations
                                  : state.last_report.order_violations);
    if (violations < cfg.stop_violation_threshold) {
      state.stop_reason = "violations";
      break;
    }
  }
}

}  // namespace reid
