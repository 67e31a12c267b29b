#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "reid/data_io.hpp"

using namespace reid;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::path("io_tmp") / name) {
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void spit(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

double tensor_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.same_shape(b));
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

}  // namespace

TEST_CASE("manifest parsing and validation") {
  std::istringstream good(
      "#split two-view\n"
      "#size 3 8 6\n"
      "a1\tp0\ta\timg/a1.ppm\n"
      "a2\tp0\tb\timg/a2.ppm\n"
      "b1\tp1\ta\timg/b1.ppm\n"
      "b2\tp1\tb\timg/b2.ppm\n");
  const DatasetManifest m = parse_manifest(good, "test");
  CHECK(m.records.size() == 4);
  CHECK(m.split_style == SplitStyle::TwoView);
  CHECK(m.height == 8);
  CHECK(m.width == 6);

  std::istringstream dup(
      "a1\tp0\ta\tx.ppm\n"
      "a1\tp0\tb\ty.ppm\n"
      "b1\tp1\ta\tz.ppm\n"
      "b2\tp1\tb\tw.ppm\n");
  CHECK_THROWS_WITH_AS(parse_manifest(dup, "test"),
                       doctest::Contains("a1"), DatasetError);

  std::istringstream lonely(
      "a1\tp0\ta\tx.ppm\n"
      "a2\tp0\tb\ty.ppm\n"
      "b1\tp1\ta\tz.ppm\n");
  CHECK_THROWS_WITH_AS(parse_manifest(lonely, "test"),
                       doctest::Contains("p1"), DatasetError);

  std::istringstream short_line("a1\tp0\ta\n");
  CHECK_THROWS_WITH_AS(parse_manifest(short_line, "test"),
                       doctest::Contains(":1"), DatasetError);
}

TEST_CASE("ppm load") {
  TempDir dir("ppm");
  const std::string white = dir.file("white.ppm");
  {
    std::ofstream out(white, std::ios::binary);
    out << "P6\n2 2\n255\n";
    for (int i = 0; i < 12; ++i) out.put(static_cast<char>(0xFF));
  }
  const Tensor img = load_ppm(white);
  REQUIRE(img.shape() == Shape{3, 2, 2});
  for (std::size_t i = 0; i < img.size(); ++i) CHECK(img[i] == 1.0);

  const std::string bad = dir.file("bad.ppm");
  spit(bad, "P5\n2 2\n255\n0000");
  CHECK_THROWS_AS(load_ppm(bad), IoError);

  const std::string trunc = dir.file("trunc.ppm");
  spit(trunc, "P6\n2 2\n255\nab");
  CHECK_THROWS_AS(load_ppm(trunc), IoError);
}

TEST_CASE("ppm round trip is exact on quantized values") {
  TempDir dir("ppm_rt");
  Tensor img = Tensor::zeros({3, 4, 5});
  Rng rng(1);
  for (std::size_t i = 0; i < img.size(); ++i)
    img[i] = static_cast<double>(rng.below(256)) / 255.0;
  const std::string path = dir.file("rt.ppm");
  save_ppm(img, path);
  const Tensor back = load_ppm(path);
  CHECK(tensor_diff(img, back) == 0.0);

  // Determinism of the stored bytes.
  const std::string again = dir.file("rt2.ppm");
  save_ppm(img, again);
  CHECK(slurp(path) == slurp(again));
}

TEST_CASE("bilinear resize") {
  Tensor flat = Tensor::filled({3, 4, 4}, 0.25);
  const Tensor up = resize_bilinear(flat, 9, 7);
  REQUIRE(up.shape() == Shape{3, 9, 7});
  for (std::size_t i = 0; i < up.size(); ++i)
    CHECK(up[i] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("load_dataset resizes to the declared size") {
  TempDir dir("load");
  Tensor img = Tensor::filled({3, 4, 4}, 0.5);
  save_ppm(img, dir.file("a1.ppm"));
  save_ppm(img, dir.file("a2.ppm"));
  save_ppm(img, dir.file("b1.ppm"));
  save_ppm(img, dir.file("b2.ppm"));
  spit(dir.file("manifest.tsv"),
       "#split two-view\n"
       "#size 3 8 8\n"
       "a1\tp0\ta\ta1.ppm\n"
       "a2\tp0\tb\ta2.ppm\n"
       "b1\tp1\ta\tb1.ppm\n"
       "b2\tp1\tb\tb2.ppm\n");
  const Dataset ds = load_dataset(dir.file("manifest.tsv"));
  REQUIRE(ds.size() == 4);
  CHECK(ds.images[0].shape() == Shape{3, 8, 8});
  CHECK(ds.num_identities() == 2);
  CHECK(ds.labels[0] == ds.labels[1]);
  CHECK(ds.views[0] != ds.views[1]);
}

TEST_CASE("checkpoint round trip is bitwise") {
  TempDir dir("ckpt");
  Model model{NetConfig::tiny()};
  init_params(model, Rng(2));
  const std::string path = dir.file("model.ckpt");
  save_checkpoint(model, 37, path);

  auto [back, meta] = load_checkpoint(path);
  CHECK(meta.version == 1);
  CHECK(meta.iteration == 37);
  CHECK(meta.rng_id == Rng::kId);
  CHECK(meta.config == model.config);

  auto a = bind_params(model, nullptr);
  auto b = bind_params(back, nullptr);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(tensor_diff(*a[i].param, *b[i].param) == 0.0);
}

TEST_CASE("checkpoint rejects damaged files") {
  TempDir dir("ckpt_bad");
  Model model{NetConfig::tiny()};
  init_params(model, Rng(3));
  const std::string path = dir.file("model.ckpt");
  save_checkpoint(model, 5, path);
  const std::string bytes = slurp(path);

  // Wrong magic.
  std::string magic = bytes;
  magic[0] = 'X';
  spit(dir.file("magic.ckpt"), magic);
  CHECK_THROWS_WITH_AS(load_checkpoint(dir.file("magic.ckpt")),
                       doctest::Contains("magic"), IoError);

  // Unsupported version.
  std::string version = bytes;
  version[8] = 9;
  spit(dir.file("version.ckpt"), version);
  CHECK_THROWS_WITH_AS(load_checkpoint(dir.file("version.ckpt")),
                       doctest::Contains("version"), IoError);

  // Truncation.
  spit(dir.file("trunc.ckpt"), bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_WITH_AS(load_checkpoint(dir.file("trunc.ckpt")),
                       doctest::Contains("truncated"), IoError);

  // Edited architecture config trips the digest.
  std::uint16_t rng_len;
  std::memcpy(&rng_len, bytes.data() + 12, 2);
  const std::size_t cfg_off = 8 + 4 + 2 + rng_len + 8;
  std::string cfg = bytes;
  cfg[cfg_off] = static_cast<char>(cfg[cfg_off] + 1);
  spit(dir.file("cfg.ckpt"), cfg);
  CHECK_THROWS_WITH_AS(load_checkpoint(dir.file("cfg.ckpt")),
                       doctest::Contains("digest"), IoError);

  // Edited tensor dims trip the shape check.
  const std::size_t name_pos = bytes.find("conv1.weights");
  REQUIRE(name_pos != std::string::npos);
  std::string dims = bytes;
  dims[name_pos + std::strlen("conv1.weights") + 4] = 99;
  spit(dir.file("dims.ckpt"), dims);
  CHECK_THROWS_WITH_AS(load_checkpoint(dir.file("dims.ckpt")),
                       doctest::Contains("shape"), IoError);
}

TEST_CASE("synthetic dataset counting and determinism") {
  SynthConfig cfg;
  cfg.num_identities = 20;
  cfg.images_per_view = 3;
  cfg.height = 24;
  cfg.width = 12;
  cfg.seed = 4;
  const Dataset a = synth_generate(cfg);
  CHECK(a.size() == 120);
  CHECK(a.num_identities() == 20);
  validate_manifest(a.manifest);  // throws on violation

  const Dataset b = synth_generate(cfg);
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(tensor_diff(a.images[i], b.images[i]) == 0.0);

  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(max_abs(a.images[i]) <= 1.0);
    double lo = 1.0;
    for (std::size_t k = 0; k < a.images[i].size(); ++k)
      lo = std::min(lo, a.images[i][k]);
    CHECK(lo >= 0.0);
  }
}

TEST_CASE("degenerate synthetic transform makes the views identical") {
  SynthConfig cfg;
  cfg.num_identities = 3;
  cfg.images_per_view = 2;
  cfg.height = 16;
  cfg.width = 10;
  cfg.brightness_shift = 0.0;
  cfg.channel_gain = 0.0;
  cfg.view_jitter = 0;
  cfg.noise_std = 0.0;
  cfg.seed = 5;
  const Dataset ds = synth_generate(cfg);

  // Images of one identity are identical across views and repetitions.
  for (std::size_t id = 0; id < 3; ++id) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < ds.size(); ++i)
      if (ds.labels[i] == static_cast<int>(id)) members.push_back(i);
    REQUIRE(members.size() == 4);
    for (std::size_t m = 1; m < members.size(); ++m)
      CHECK(tensor_diff(ds.images[members[0]], ds.images[members[m]]) == 0.0);
  }
}

TEST_CASE("write_dataset then load_dataset round trips") {
  TempDir dir("synth_rt");
  SynthConfig cfg;
  cfg.num_identities = 3;
  cfg.images_per_view = 2;
  cfg.height = 12;
  cfg.width = 8;
  cfg.seed = 6;
  const Dataset ds = synth_generate(cfg);
  write_dataset(ds, dir.file("data"));

  const Dataset back = load_dataset(dir.file("data") + "/manifest.tsv");
  REQUIRE(back.size() == ds.size());
  CHECK(back.manifest.split_style == SplitStyle::TwoView);
  CHECK(back.num_identities() == 3);
  // Pixels survive up to 8-bit quantization.
  for (std::size_t i = 0; i < ds.size(); ++i)
    CHECK(tensor_diff(ds.images[i], back.images[i]) <= 0.5 / 255.0 + 1e-12);
}
