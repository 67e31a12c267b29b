#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "reid/data_io.hpp"
#include "reid/model.hpp"
#include "reid/triplet.hpp"

namespace reid {

struct TrainConfig {
  std::size_t classes_per_batch = 60;
  std::size_t triplets_per_batch = 4800;
  double learning_rate = 0.01;
  double lr_decay_factor = 0.1;
  std::size_t lr_decay_every = 0;  // iterations per decay step; 0 = constant
  double weight_decay = 5e-4;
  double momentum = 0.0;  // 0 = plain SGD
  std::size_t max_iterations = 10000;
  std::size_t stop_violation_threshold = 10;
  bool stop_on_margin = false;   // stopping counts order violations by default
  bool stop_on_holdout = false;  // check violations on a fresh batch instead
  bool augment = true;
  int crop_perturbation = 5;  // pixels, each axis
  bool deterministic = true;
  std::size_t threads = 1;
  std::uint64_t seed = 0;
};

struct TrainState {
  std::size_t iteration = 0;
  ViolationReport last_report;
  std::vector<double> loss_history;
  std::vector<std::size_t> forward_history;  // per-iteration forward passes
  std::size_t last_forward_passes = 0;
  std::size_t last_backward_passes = 0;
  std::size_t total_forward_passes = 0;
  std::size_t total_backward_passes = 0;
  std::size_t last_holdout_violations = 0;
  std::string stop_reason;  // "violations" or "max_iterations"
};

double learning_rate_at(const TrainConfig& cfg, std::size_t iteration);

// Mirror (training only, p=0.5) then crop crop_h x crop_w at the center,
// perturbed by up to +-perturbation pixels per axis in training mode.
// Evaluation mode is the exact center crop with no mirror.
Tensor augment_image(const Tensor& image, std::size_t crop_h,
                     std::size_t crop_w, bool training, int perturbation,
                     Rng& rng);

// Gradient of the batch loss wrt all parameters (data term only).
struct BatchGradient {
  ParamGrads grads;
  ViolationReport report;
  std::size_t forward_passes = 0;
  std::size_t backward_passes = 0;
};

// One propagation per distinct image: forward all, form the per-image
// output gradients, then backpropagate each image once and sum.
BatchGradient batch_gradient_deduplicated(const Model& model,
                                          const std::vector<Tensor>& inputs,
                                          const TripletBatch& batch,
                                          std::size_t threads,
                                          bool deterministic);

// Reference route: three propagations per triplet, summed. Same inputs,
// same result up to floating-point grouping.
BatchGradient batch_gradient_per_triplet(const Model& model,
                                         const std::vector<Tensor>& inputs,
                                         const TripletBatch& batch,
                                         std::size_t threads);

// One batch step: generate triplets, augment + forward the distinct images,
// backpropagate, add weight decay, apply the SGD update. Appends one
// space-separated log line ("iter loss margin order lr distinct forward")
// when log is given.
void train_iteration(Model& model, const Dataset& dataset,
                     const TrainConfig& cfg, TrainState& state,
                     ParamGrads* velocity, std::ostream* log);

// Runs until the violation count drops below the threshold or max_iterations
// is reached. State keeps the history even when a divergence error is thrown.
void train_loop(Model& model, const Dataset& dataset, const TrainConfig& cfg,
                TrainState& state, std::ostream* log = nullptr);

}  // namespace reid
