#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <sstream>

#include "doctest.h"
#include "reid/evaluation.hpp"

using namespace reid;

namespace {

Dataset fake_dataset(std::size_t ids, std::size_t per_view,
                     SplitStyle style) {
  Dataset ds;
  ds.manifest.split_style = style;
  char buf[32];
  for (std::size_t id = 0; id < ids; ++id) {
    for (std::size_t v = 0; v < 2; ++v) {
      for (std::size_t k = 0; k < per_view; ++k) {
        ImageRecord r;
        std::snprintf(buf, sizeof buf, "r%zu_%zu_%zu", id, v, k);
        r.id = buf;
        std::snprintf(buf, sizeof buf, "p%zu", id);
        r.identity = buf;
        r.view = v == 0 ? "a" : "b";
        ds.manifest.records.push_back(r);
        ds.images.push_back(Tensor::zeros({1, 1, 1}));
      }
    }
  }
  index_dataset(ds);
  return ds;
}

// Brute-force rank: stable sort by (distance, gallery index).
std::size_t oracle_rank(const Tensor& probe,
                        const std::vector<Tensor>& gallery,
                        const std::vector<int>& labels, int target) {
  std::vector<std::pair<double, std::size_t>> order;
  for (std::size_t g = 0; g < gallery.size(); ++g) {
    double d = 0.0;
    for (std::size_t i = 0; i < probe.size(); ++i)
      d += (probe[i] - gallery[g][i]) * (probe[i] - gallery[g][i]);
    order.emplace_back(d, g);
  }
  std::stable_sort(order.begin(), order.end());
  for (std::size_t pos = 0; pos < order.size(); ++pos)
    if (labels[order[pos].second] == target) return pos + 1;
  return 0;
}

Tensor one_hot(std::size_t dim, std::size_t at, double value = 1.0) {
  Tensor t = Tensor::zeros({dim});
  t[at] = value;
  return t;
}

}  // namespace

TEST_CASE("gallery/probe split counting") {
  Dataset ds = fake_dataset(100, 2, SplitStyle::TwoView);
  Rng rng(1);
  const GalleryProbeSplit split = split_gallery_probe(ds, rng);
  CHECK(split.gallery.size() == 100);
  CHECK(split.probes.size() == 200);

  // No overlap, one gallery entry per identity, probes in the other view.
  std::vector<bool> in_gallery(ds.size(), false);
  for (std::size_t g : split.gallery) in_gallery[g] = true;
  for (std::size_t p : split.probes) CHECK(!in_gallery[p]);
  for (std::size_t g : split.gallery)
    for (std::size_t p : split.probes)
      if (ds.labels[p] == ds.labels[g]) CHECK(ds.views[p] != ds.views[g]);
}

TEST_CASE("split determinism and validation") {
  Dataset ds = fake_dataset(10, 2, SplitStyle::TwoView);
  Rng r1(2), r2(2);
  const GalleryProbeSplit a = split_gallery_probe(ds, r1);
  const GalleryProbeSplit b = split_gallery_probe(ds, r2);
  CHECK(a.gallery == b.gallery);
  CHECK(a.probes == b.probes);

  // Identity with images in only one view fails the two-view precondition.
  Dataset bad = fake_dataset(3, 1, SplitStyle::TwoView);
  bad.manifest.records.pop_back();
  bad.images.pop_back();
  index_dataset(bad);
  Rng r3(3);
  CHECK_THROWS_AS(split_gallery_probe(bad, r3), DatasetError);

  // Single-pool style needs two images per identity.
  Dataset pool = fake_dataset(3, 1, SplitStyle::SinglePool);
  pool.manifest.records.pop_back();
  pool.images.pop_back();
  index_dataset(pool);
  Rng r4(4);
  CHECK_THROWS_AS(split_gallery_probe(pool, r4), DatasetError);
}

TEST_CASE("single-pool split uses all remaining images") {
  Dataset ds = fake_dataset(5, 2, SplitStyle::SinglePool);
  Rng rng(5);
  const GalleryProbeSplit split = split_gallery_probe(ds, rng);
  CHECK(split.gallery.size() == 5);
  CHECK(split.probes.size() == 15);  // 4 images per identity minus gallery
}

TEST_CASE("rank of match examples") {
  std::vector<Tensor> gallery = {one_hot(3, 0), one_hot(3, 1), one_hot(3, 2)};
  std::vector<int> labels = {0, 1, 2};

  CHECK(rank_of_match(one_hot(3, 1), gallery, labels, 1) == 1);

  // Probe equidistant to every gallery item: rank is the tie-break position.
  Tensor center = Tensor::zeros({3});
  CHECK(rank_of_match(center, gallery, labels, 0) == 1);
  CHECK(rank_of_match(center, gallery, labels, 1) == 2);
  CHECK(rank_of_match(center, gallery, labels, 2) == 3);

  CHECK_THROWS_AS(rank_of_match(center, gallery, labels, 9), ProtocolError);
}

TEST_CASE("rank matches the brute-force oracle") {
  Rng rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t g = 5;
    std::vector<Tensor> gallery;
    std::vector<int> labels;
    for (std::size_t i = 0; i < g; ++i) {
      gallery.push_back(Tensor::gaussian({4}, 1.0, rng));
      labels.push_back(static_cast<int>(i));
    }
    Tensor probe = Tensor::gaussian({4}, 1.0, rng);
    const int target = static_cast<int>(rng.below(g));
    CHECK(rank_of_match(probe, gallery, labels, target) ==
          oracle_rank(probe, gallery, labels, target));
  }
}

TEST_CASE("rank is invariant to gallery permutation without ties") {
  Rng rng(7);
  std::vector<Tensor> gallery;
  std::vector<int> labels;
  for (std::size_t i = 0; i < 8; ++i) {
    gallery.push_back(Tensor::gaussian({4}, 1.0, rng));
    labels.push_back(static_cast<int>(i));
  }
  Tensor probe = Tensor::gaussian({4}, 1.0, rng);
  const std::size_t r0 = rank_of_match(probe, gallery, labels, 3);

  std::vector<std::size_t> perm = {5, 2, 7, 0, 4, 1, 6, 3};
  std::vector<Tensor> shuffled;
  std::vector<int> shuffled_labels;
  for (std::size_t p : perm) {
    shuffled.push_back(gallery[p]);
    shuffled_labels.push_back(labels[p]);
  }
  CHECK(rank_of_match(probe, shuffled, shuffled_labels, 3) == r0);
}

TEST_CASE("identical embeddings reproduce the tie-break oracle exactly") {
  Dataset ds = fake_dataset(5, 1, SplitStyle::TwoView);
  std::vector<Tensor> embeddings(ds.size(), Tensor::filled({4}, 0.5));

  Rng rng(8);
  const CMCCurve curve = cmc_from_embeddings(embeddings, ds, 10, rng);

  // Oracle: same splits, ranks from a full stable sort, same averaging.
  Rng rng2(8);
  std::vector<double> rates(5, 0.0);
  for (int s = 0; s < 10; ++s) {
    const GalleryProbeSplit split = split_gallery_probe(ds, rng2);
    std::vector<Tensor> gal;
    std::vector<int> labels;
    for (std::size_t g : split.gallery) {
      gal.push_back(embeddings[g]);
      labels.push_back(ds.labels[g]);
    }
    std::vector<std::size_t> hist(5, 0);
    for (std::size_t p : split.probes)
      ++hist[oracle_rank(embeddings[p], gal, labels, ds.labels[p]) - 1];
    std::size_t cum = 0;
    for (std::size_t n = 0; n < 5; ++n) {
      cum += hist[n];
      rates[n] += static_cast<double>(cum) / split.probes.size();
    }
  }
  for (std::size_t n = 0; n < 5; ++n) {
    CHECK(curve.rates[n] == rates[n] / 10.0);
    CHECK(std::abs(curve.rates[n] - (n + 1) / 5.0) <= 1e-12);
  }
}

TEST_CASE("perfect embeddings give rank-1 rate 1") {
  Dataset ds = fake_dataset(6, 2, SplitStyle::TwoView);
  std::vector<Tensor> embeddings;
  for (std::size_t i = 0; i < ds.size(); ++i)
    embeddings.push_back(one_hot(6, ds.labels[i]));
  Rng rng(9);
  const CMCCurve curve = cmc_from_embeddings(embeddings, ds, 5, rng);
  CHECK(curve.rates[0] == 1.0);
  CHECK(curve.rates.back() == 1.0);
}

TEST_CASE("curves are non-decreasing and end at one") {
  Dataset ds = fake_dataset(7, 2, SplitStyle::TwoView);
  Rng erng(10);
  std::vector<Tensor> embeddings;
  for (std::size_t i = 0; i < ds.size(); ++i)
    embeddings.push_back(Tensor::gaussian({5}, 1.0, erng));
  Rng rng(11);
  const CMCCurve curve = cmc_from_embeddings(embeddings, ds, 7, rng);
  validate_cmc(curve);  // throws on violation
  for (std::size_t n = 1; n < curve.rates.size(); ++n)
    CHECK(curve.rates[n] >= curve.rates[n - 1]);
  CHECK(curve.rates.back() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("model evaluation is deterministic") {
  SynthConfig sc;
  sc.num_identities = 4;
  sc.images_per_view = 2;
  sc.height = 16;
  sc.width = 12;
  sc.seed = 12;
  const Dataset ds = synth_generate(sc);

  Model model{NetConfig::tiny()};
  init_params(model, Rng(13));
  Rng r1 = Rng(14).derive(stream::kEval);
  Rng r2 = Rng(14).derive(stream::kEval);
  const CMCCurve a = cmc_curve(model, ds, 4, r1);
  const CMCCurve b = cmc_curve(model, ds, 4, r2);
  CHECK(a.rates == b.rates);
}

TEST_CASE("cmc csv format") {
  CMCCurve curve;
  curve.rates = {0.5, 0.75, 1.0};
  std::ostringstream os;
  write_cmc_csv(curve, os);
  std::istringstream is(os.str());
  std::string header;
  std::getline(is, header);
  CHECK(header == "rank,rate");
  std::string line;
  std::size_t rows = 0;
  while (std::getline(is, line)) ++rows;
  CHECK(rows == 3);
}

TEST_CASE("ablation produces two valid curves") {
  SynthConfig sc;
  sc.num_identities = 4;
  sc.images_per_view = 2;
  sc.height = 16;
  sc.width = 12;
  sc.seed = 15;
  const Dataset ds = synth_generate(sc);

  TrainConfig tc;
  tc.classes_per_batch = 2;
  tc.triplets_per_batch = 8;
  tc.max_iterations = 2;
  tc.stop_violation_threshold = 0;
  tc.seed = 16;

  auto [joint, feature_only] =
      ablation_compare(ds, NetConfig::tiny(), tc, 3);
  validate_cmc(joint);
  validate_cmc(feature_only);
  CHECK(joint.rates.size() == 4);
  CHECK(feature_only.rates.size() == 4);
}
