#pragma once

#include <iosfwd>
#include <utility>
#include <vector>

#include "reid/data_io.hpp"
#include "reid/trainer.hpp"

namespace reid {

// Single-shot retrieval split: exactly one gallery image per identity, the
// rest probed against it.
struct GalleryProbeSplit {
  std::vector<std::size_t> gallery;  // one dataset index per identity
  std::vector<std::size_t> probes;
};

// Cumulative match rates at ranks 1..G; non-decreasing, ends at 1.
struct CMCCurve {
  std::vector<double> rates;
};

// Per identity, one uniformly chosen gallery image. Probes come from the
// opposite camera view for two-view datasets, otherwise all remaining
// images of the identity.
GalleryProbeSplit split_gallery_probe(const Dataset& dataset, Rng& rng);

// 1-based position of the true identity's gallery image when the gallery is
// sorted by squared distance ascending, ties broken by gallery index.
std::size_t rank_of_match(const Tensor& probe_embedding,
                          const std::vector<Tensor>& gallery_embeddings,
                          const std::vector<int>& gallery_labels,
                          int true_label);

// Average of per-split cumulative match rates over num_splits random
// gallery/probe splits, using the given per-image embeddings.
CMCCurve cmc_from_embeddings(const std::vector<Tensor>& embeddings,
                             const Dataset& dataset, std::size_t num_splits,
                             Rng& rng);

// Embeds every image (deterministic center crop) and averages the curve
// over num_splits splits.
CMCCurve cmc_curve(const Model& model, const Dataset& dataset,
                   std::size_t num_splits, Rng& rng, std::size_t threads = 1);

// Per-image embeddings under evaluation-mode augmentation.
std::vector<Tensor> embed_dataset(const Model& model, const Dataset& dataset,
                                  std::size_t threads = 1);

void validate_cmc(const CMCCurve& curve);
void write_cmc_csv(const CMCCurve& curve, std::ostream& os);

// Trains twice from identical seeds -- the full model, and the same pipeline
// with the metric layer replaced by the identity map -- and evaluates both.
std::pair<CMCCurve, CMCCurve> ablation_compare(const Dataset& dataset,
                                               const NetConfig& net_cfg,
                                               const TrainConfig& train_cfg,
                                               std::size_t eval_splits);

}  // namespace reid
