#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "reid/model.hpp"

namespace reid {

enum class SplitStyle { TwoView, SinglePool };

struct ImageRecord {
  std::string id;
  std::string identity;
  std::string view;
  std::string path;
};

// Tab-separated manifest: one "id<TAB>identity<TAB>view<TAB>path" line per
// record. Directive lines "#split two-view|single-pool" and
// "#size C H W" set the split style and the declared image size; other
// '#' lines are comments.
struct DatasetManifest {
  std::vector<ImageRecord> records;
  SplitStyle split_style = SplitStyle::TwoView;
  std::size_t channels = 3;
  std::size_t height = 250;
  std::size_t width = 100;
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<Tensor> images;             // [C,H,W] each, values in [0,1]
  std::vector<int> labels;                // identity index per record
  std::vector<int> views;                 // view index per record
  std::vector<std::string> identity_names;
  std::vector<std::string> view_names;

  std::size_t size() const { return images.size(); }
  std::size_t num_identities() const { return identity_names.size(); }
};

DatasetManifest parse_manifest(std::istream& in, const std::string& origin);
DatasetManifest load_manifest(const std::string& path);
void validate_manifest(const DatasetManifest& m);

// Binary 8-bit PPM (P6) only; pixels scaled to [0,1].
Tensor load_ppm(const std::string& path);
void save_ppm(const Tensor& image, const std::string& path);
Tensor resize_bilinear(const Tensor& image, std::size_t out_h,
                       std::size_t out_w);

// Loads the manifest and every image, resizing to the declared size when a
// source differs. Builds labels/views from the records.
Dataset load_dataset(const std::string& manifest_path);

// Rebuilds Dataset label/view tables from manifest records (used when the
// images are already in memory).
void index_dataset(Dataset& ds);

// Writes manifest.tsv plus one PPM per record into dir.
void write_dataset(const Dataset& ds, const std::string& dir);

// Synthetic two-view identity data: each identity is a seeded pattern of
// colored stripes/bars; the second view applies a fixed brightness shift and
// per-channel gain plus a small per-image translation; i.i.d. Gaussian pixel
// noise is added everywhere and values are clamped to [0,1].
struct SynthConfig {
  std::size_t num_identities = 20;
  std::size_t images_per_view = 3;
  std::size_t channels = 3;
  std::size_t height = 250;
  std::size_t width = 100;
  double brightness_shift = 0.25;  // view-2 additive shift magnitude
  double channel_gain = 0.35;      // view-2 per-channel gain spread
  int view_jitter = 6;             // view-2 translation range, pixels
  double noise_std = 0.05;
  std::uint64_t seed = 1;
};

Dataset synth_generate(const SynthConfig& cfg);

// Checkpoint: little-endian binary container. Header carries a format
// version, the generator id, the architecture config with a digest, and the
// training iteration; the tensor table round-trips parameters bit-exactly.
struct CheckpointMeta {
  std::uint32_t version = 0;
  std::string rng_id;
  NetConfig config;
  std::uint64_t iteration = 0;
};

void save_checkpoint(const Model& model, std::uint64_t iteration,
                     const std::string& path);
std::pair<Model, CheckpointMeta> load_checkpoint(const std::string& path);

}  // namespace reid
