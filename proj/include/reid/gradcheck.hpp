#pragma once

#include <string>
#include <vector>

#include "reid/model.hpp"

namespace reid {

// Central-difference verification of every layer's backward pass on the
// small architecture, plus an end-to-end check through the triplet loss.
struct LayerCheck {
  std::string layer;
  double max_rel_err = 0.0;
};

struct GradCheckReport {
  std::vector<LayerCheck> layers;
  double tolerance = 1e-4;
  bool passed = true;
  std::string failing_layer;
};

// corrupt_layer is a test hook: the named layer's analytic gradient is
// perturbed so the check must fail there. Valid names: conv1, conv2, pool1,
// pool2, relu, fc, l2norm, metric, loss.
GradCheckReport run_gradcheck(std::uint64_t seed,
                              const std::string& corrupt_layer = "");

// Computes the full parameter gradient of a small batch twice -- once per
// triplet (3 propagations each) and once per distinct image -- and compares.
struct EquivalenceReport {
  std::size_t num_images = 0;
  std::size_t num_triplets = 0;
  std::size_t per_triplet_forwards = 0;
  std::size_t deduplicated_forwards = 0;
  double max_abs_diff = 0.0;

  bool counts_ok() const {
    return per_triplet_forwards == 3 * num_triplets &&
           deduplicated_forwards == num_images;
  }
  bool passed(double tolerance = 1e-9) const {
    return counts_ok() && max_abs_diff <= tolerance;
  }
};

EquivalenceReport run_equivalence(std::size_t num_images,
                                  std::size_t num_triplets,
                                  std::uint64_t seed);

}  // namespace reid
