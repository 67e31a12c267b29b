#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "reid/tensor.hpp"

namespace reid {

// Indices into a batch's distinct-image list. anchor/positive share a class,
// negative comes from a different class.
struct Triplet {
  std::size_t anchor;
  std::size_t positive;
  std::size_t negative;
};

struct TripletBatch {
  std::vector<std::size_t> distinct_images;  // dataset indices, ascending
  std::vector<Triplet> triplets;             // local indices
  std::vector<int> class_sample;             // selected class labels
};

struct ViolationReport {
  std::size_t total_triplets = 0;
  std::size_t margin_violations = 0;  // delta d^2 < 1 (loss-active)
  std::size_t order_violations = 0;   // delta d^2 <= 0 (wrong ordering)
  double loss = 0.0;
};

enum class ViolationMode { Order, Margin };

// N*(N-1)*(M-1)*N*M valid triplets for M classes of N images each.
std::uint64_t count_all_triplets(std::uint64_t num_classes,
                                 std::uint64_t per_class);

// Picks classes_per_batch classes uniformly without replacement (among
// classes with >= 2 images), then spreads triplets_per_batch as evenly as
// possible over (class, anchor image) pairs, remainder to the
// lexicographically first pairs. Positives are drawn uniformly from the
// anchor's class, negatives uniformly from the images of the other selected
// classes, both with replacement.
TripletBatch generate_batch(const std::vector<int>& labels,
                            std::size_t classes_per_batch,
                            std::size_t triplets_per_batch, Rng& rng);

// Hinge loss sum(max(0, 1 - (d^2(a,n) - d^2(a,p)))) over the batch, with the
// violation counts. One embedding per distinct image.
ViolationReport triplet_loss(const std::vector<Tensor>& embeddings,
                             const TripletBatch& batch);

// Per-distinct-image gradient of the loss wrt that image's embedding:
// the anchor of an active triplet receives +2(e_n - e_p), the positive
// -2(e_a - e_p), the negative +2(e_a - e_n). Triplets at or above the unit
// margin contribute nothing.
std::vector<Tensor> output_gradients(const std::vector<Tensor>& embeddings,
                                     const TripletBatch& batch);

std::size_t count_violations(const std::vector<Tensor>& embeddings,
                             const TripletBatch& batch, ViolationMode mode);

// Debug dump, one "anchor positive negative" line per triplet using
// dataset-level indices.
void dump_batch(const TripletBatch& batch, std::ostream& os);

}  // namespace reid
