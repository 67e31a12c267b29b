#include "reid/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>

#include "reid/parallel.hpp"

namespace reid {

namespace {

double sq_dist(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0, n = a.size(); i < n; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace

GalleryProbeSplit split_gallery_probe(const Dataset& dataset, Rng& rng) {
  const std::size_t num_ids = dataset.num_identities();
  std::vector<std::vector<std::size_t>> by_identity(num_ids);
  for (std::size_t i = 0; i < dataset.size(); ++i)
    by_identity[dataset.labels[i]].push_back(i);

  const bool two_view = dataset.manifest.split_style == SplitStyle::TwoView;
  GalleryProbeSplit split;
  for (std::size_t id = 0; id < num_ids; ++id) {
    const auto& imgs = by_identity[id];
    if (two_view) {
      bool has[2] = {false, false};
      for (std::size_t i : imgs) {
        const int v = dataset.views[i];
        if (v >= 0 && v < 2) has[v] = true;
      }
      if (!has[0] || !has[1])
        throw DatasetError("identity '" + dataset.identity_names[id] +
                           "' lacks an image in one of the two views");
    } else if (imgs.size() < 2) {
      throw DatasetError("identity '" + dataset.identity_names[id] +
                         "' has fewer than 2 images");
    }
    const std::size_t g = imgs[rng.below(imgs.size())];
    split.gallery.push_back(g);
    for (std::size_t i : imgs) {
      if (i == g) continue;
      if (two_view && dataset.views[i] == dataset.views[g]) continue;
      split.probes.push_back(i);
    }
  }
  return split;
}

std::size_t rank_of_match(const Tensor& probe_embedding,
                          const std::vector<Tensor>& gallery_embeddings,
                          const std::vector<int>& gallery_labels,
                          int true_label) {
  if (gallery_embeddings.empty())
    throw ProtocolError("empty gallery");
  if (gallery_embeddings.size() != gallery_labels.size())
    throw ProtocolError("gallery embedding/label count mismatch");
  std::size_t target = gallery_labels.size();
  for (std::size_t g = 0; g < gallery_labels.size(); ++g)
    if (gallery_labels[g] == true_label) {
      target = g;
      break;
    }
  if (target == gallery_labels.size())
    throw ProtocolError("probe identity not present in the gallery");

  const double d_true = sq_dist(probe_embedding, gallery_embeddings[target]);
  std::size_t rank = 1;
  for (std::size_t g = 0; g < gallery_embeddings.size(); ++g) {
    if (g == target) continue;
    const double d = sq_dist(probe_embedding, gallery_embeddings[g]);
    if (d < d_true || (d == d_true && g < target)) ++rank;
  }
  return rank;
}

CMCCurve cmc_from_embeddings(const std::vector<Tensor>& embeddings,
                             const Dataset& dataset, std::size_t num_splits,
                             Rng& rng) {
  if (num_splits < 1) throw ParamError("num_splits must be >= 1");
  if (embeddings.size() != dataset.size())
    throw StateError("expected one embedding per dataset image");

  const std::size_t G = dataset.num_identities();
  std::vector<double> rates(G, 0.0);
  for (std::size_t s = 0; s < num_splits; ++s) {
    const GalleryProbeSplit split = split_gallery_probe(dataset, rng);
    std::vector<Tensor> gallery_emb;
    std::vector<int> gallery_labels;
    gallery_emb.reserve(split.gallery.size());
    for (std::size_t g : split.gallery) {
      gallery_emb.push_back(embeddings[g]);
      gallery_labels.push_back(dataset.labels[g]);
    }
    std::vector<std::size_t> hist(G, 0);
    for (std::size_t p : split.probes) {
      const std::size_t r = rank_of_match(embeddings[p], gallery_emb,
                                          gallery_labels, dataset.labels[p]);
      ++hist[r - 1];
    }
    std::size_t cum = 0;
    for (std::size_t n = 0; n < G; ++n) {
      cum += hist[n];
      rates[n] += static_cast<double>(cum) /
                  static_cast<double>(split.probes.size());
    }
  }
  CMCCurve curve;
  curve.rates.resize(G);
  for (std::size_t n = 0; n < G; ++n)
    curve.rates[n] = rates[n] / static_cast<double>(num_splits);
  validate_cmc(curve);
  return curve;
}

std::vector<Tensor> embed_dataset(const Model& model, const Dataset& dataset,
                                  std::size_t threads) {
  std::vector<Tensor> embeddings(dataset.size());
  parallel_for(dataset.size(), threads, [&](std::size_t i) {
    Rng local(0);  // evaluation mode draws nothing
    Tensor crop = augment_image(dataset.images[i], model.config.input_height,
                                model.config.input_width, /*training=*/false,
                                0, local);
    NetCache cache;
    embeddings[i] = model.embed(crop, cache, 1);
  });
  return embeddings;
}

CMCCurve cmc_curve(const Model& model, const Dataset& dataset,
                   std::size_t num_splits, Rng& rng, std::size_t threads) {
  const std::vector<Tensor> embeddings =
      embed_dataset(model, dataset, threads);
  return cmc_from_embeddings(embeddings, dataset, num_splits, rng);
}

void validate_cmc(const CMCCurve& curve) {
  if (curve.rates.empty()) throw StateError("empty CMC curve");
  double prev = 0.0;
  for (double r : curve.rates) {
    if (r < -1e-12 || r > 1.0 + 1e-12 || r + 1e-12 < prev)
      throw StateError("CMC curve violates monotonicity/range invariants");
    prev = r;
  }
  if (std::abs(curve.rates.back() - 1.0) > 1e-12)
    throw StateError("CMC curve does not end at 1.0");
}

void write_cmc_csv(const CMCCurve& curve, std::ostream& os) {
  os << "rank,rate\n";
  char line[64];
  for (std::size_t n = 0; n < curve.rates.size(); ++n) {
    std::snprintf(line, sizeof line, "%zu,%.17g\n", n + 1, curve.rates[n]);
    os << line;
  }
}

std::pair<CMCCurve, CMCCurve> ablation_compare(const Dataset& dataset,
                                               const NetConfig& net_cfg,
                                               const TrainConfig& train_cfg,
                                               std::size_t eval_splits) {
  auto run = [&](bool joint) {
    NetConfig cfg = net_cfg;
    cfg.joint_metric = joint;
    Model model(cfg);
    init_params(model, Rng(train_cfg.seed));
    TrainState state;
    train_loop(model, dataset, train_cfg, state);
    Rng eval_rng = Rng(train_cfg.seed).derive(stream::kEval);
    return cmc_curve(model, dataset, eval_splits, eval_rng,
                     train_cfg.threads);
  };
  return {run(true), run(false)};
}

}  // namespace reid
