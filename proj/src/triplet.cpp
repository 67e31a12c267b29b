#include "reid/triplet.hpp"

#include <algorithm>
#include <map>
#include <ostream>

namespace reid {

namespace {

double sq_dist(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  const double* pa = a.data();
  const double* pb = b.data();
  for (std::size_t i = 0, n = a.size(); i < n; ++i) {
    const double d = pa[i] - pb[i];
    s += d * d;
  }
  return s;
}

void require_embeddings(const std::vector<Tensor>& embeddings,
                        const TripletBatch& batch) {
  if (embeddings.size() != batch.distinct_images.size())
    throw StateError("expected " +
                     std::to_string(batch.distinct_images.size()) +
                     " embeddings, got " + std::to_string(embeddings.size()));
  for (const Tensor& e : embeddings)
    if (e.empty()) throw StateError("missing embedding for a distinct image");
}

double delta_d2(const std::vector<Tensor>& e, const Triplet& t) {
  return sq_dist(e[t.anchor], e[t.negative]) -
         sq_dist(e[t.anchor], e[t.positive]);
}

}  // namespace

std::uint64_t count_all_triplets(std::uint64_t num_classes,
                                 std::uint64_t per_class) {
  if (num_classes < 2 || per_class < 2)
    throw ParamError("triplets need >= 2 classes and >= 2 images per class");
  return per_class * (per_class - 1) * (num_classes - 1) * per_class *
         num_classes;
}

TripletBatch generate_batch(const std::vector<int>& labels,
                            std::size_t classes_per_batch,
                            std::size_t triplets_per_batch, Rng& rng) {
  if (classes_per_batch < 2)
    throw DatasetError("a batch needs at least two classes");
  if (triplets_per_batch == 0)
    throw ParamError("triplets_per_batch must be >= 1");

  // Classes with >= 2 images, ordered by label.
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i)
    by_class[labels[i]].push_back(i);
  std::vector<int> eligible;
  for (const auto& [label, imgs] : by_class)
    if (imgs.size() >= 2) eligible.push_back(label);
  if (eligible.size() < classes_per_batch)
    throw DatasetError("need " + std::to_string(classes_per_batch) +
                       " classes with >= 2 images, have " +
                       std::to_string(eligible.size()));

  // Uniform sample without replacement, then sorted so the
  // (class, anchor image) pair order is well defined.
  for (std::size_t i = 0; i < classes_per_batch; ++i) {
    const std::size_t j = i + rng.below(eligible.size() - i);
    std::swap(eligible[i], eligible[j]);
  }
  std::vector<int> selected(eligible.begin(),
                            eligible.begin() + classes_per_batch);
  std::sort(selected.begin(), selected.end());

  struct AnchorSlot {
    int label;
    std::size_t image;  // dataset index
    std::size_t within; // position inside the class image list
  };
  std::vector<AnchorSlot> slots;
  for (int label : selected) {
    const auto& imgs = by_class[label];
    for (std::size_t k = 0; k < imgs.size(); ++k)
      slots.push_back({label, imgs[k], k});
  }

  const std::size_t base = triplets_per_batch / slots.size();
  const std::size_t rem = triplets_per_batch % slots.size();

  // Negative pool per class: every image of the other selected classes.
  std::map<int, std::vector<std::size_t>> negatives;
  for (int label : selected) {
    auto& pool = negatives[label];
    for (int other : selected) {
      if (other == label) continue;
      const auto& imgs = by_class[other];
      pool.insert(pool.end(), imgs.begin(), imgs.end());
    }
  }

  std::vector<Triplet> raw;  // dataset indices, remapped below
  raw.reserve(triplets_per_batch);
  for (std::size_t s = 0; s < slots.size(); ++s) {
    const AnchorSlot& slot = slots[s];
    const auto& own = by_class[slot.label];
    const auto& pool = negatives[slot.label];
    const std::size_t count = base + (s < rem ? 1 : 0);
    for (std::size_t n = 0; n < count; ++n) {
      std::size_t p = rng.below(own.size() - 1);
      if (p >= slot.within) ++p;  // skip the anchor itself
      const std::size_t neg = pool[rng.below(pool.size())];
      raw.push_back({slot.image, own[p], neg});
    }
  }

  TripletBatch batch;
  batch.class_sample = selected;
  for (const Triplet& t : raw) {
    batch.distinct_images.push_back(t.anchor);
    batch.distinct_images.push_back(t.positive);
    batch.distinct_images.push_back(t.negative);
  }
  std::sort(batch.distinct_images.begin(), batch.distinct_images.end());
  batch.distinct_images.erase(
      std::unique(batch.distinct_images.begin(), batch.distinct_images.end()),
      batch.distinct_images.end());

  auto local = [&](std::size_t dataset_idx) {
    return static_cast<std::size_t>(
        std::lower_bound(batch.distinct_images.begin(),
                         batch.distinct_images.end(), dataset_idx) -
        batch.distinct_images.begin());
  };
  batch.triplets.reserve(raw.size());
  for (const Triplet& t : raw)
    batch.triplets.push_back(
        {local(t.anchor), local(t.positive), local(t.negative)});
  return batch;
}

ViolationReport triplet_loss(const std::vector<Tensor>& embeddings,
                             const TripletBatch& batch) {
  require_embeddings(embeddings, batch);
  ViolationReport r;
  r.total_triplets = batch.triplets.size();
  for (const Triplet& t : batch.triplets) {
    const double dd = delta_d2(embeddings, t);
    if (dd <= 0.0) ++r.order_violations;
    if (dd < 1.0) {
      ++r.margin_violations;
      r.loss += 1.0 - dd;
    }
  }
  return r;
}

std::vector<Tensor> output_gradients(const std::vector<Tensor>& embeddings,
                                     const TripletBatch& batch) {
  require_embeddings(embeddings, batch);
  const std::size_t dim = embeddings.empty() ? 0 : embeddings[0].size();
  std::vector<Tensor> grads(embeddings.size(), Tensor::zeros({dim}));
  for (const Triplet& t : batch.triplets) {
    if (delta_d2(embeddings, t) >= 1.0) continue;
    const double* ea = embeddings[t.anchor].data();
    const double* ep = embeddings[t.positive].data();
    const double* en = embeddings[t.negative].data();
    double* ga = grads[t.anchor].data();
    double* gp = grads[t.positive].data();
    double* gn = grads[t.negative].data();
    for (std::size_t k = 0; k < dim; ++k) {
      ga[k] += 2.0 * (en[k] - ep[k]);
      gp[k] -= 2.0 * (ea[k] - ep[k]);
      gn[k] += 2.0 * (ea[k] - en[k]);
    }
  }
  return grads;
}

std::size_t count_violations(const std::vector<Tensor>& embeddings,
                             const TripletBatch& batch, ViolationMode mode) {
  require_embeddings(embeddings, batch);
  std::size_t count = 0;
  for (const Triplet& t : batch.triplets) {
    const double dd = delta_d2(embeddings, t);
    if (mode == ViolationMode::Order ? dd <= 0.0 : dd < 1.0) ++count;
  }
  return count;
}

void dump_batch(const TripletBatch& batch, std::ostream& os) {
  for (const Triplet& t : batch.triplets)
    os << batch.distinct_images[t.anchor] << ' '
       << batch.distinct_images[t.positive] << ' '
       << batch.distinct_images[t.negative] << '\n';
}

}  // namespace reid
