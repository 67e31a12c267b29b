#include "reid/data_io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace reid {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- manifest

DatasetManifest parse_manifest(std::istream& in, const std::string& origin) {
  DatasetManifest m;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream ds(line.substr(1));
      std::string directive;
      ds >> directive;
      if (directive == "split") {
        std::string style;
        ds >> style;
        if (style == "two-view")
          m.split_style = SplitStyle::TwoView;
        else if (style == "single-pool")
          m.split_style = SplitStyle::SinglePool;
        else
          throw DatasetError(origin + ":" + std::to_string(line_no) +
                             ": unknown split style '" + style + "'");
      } else if (directive == "size") {
        if (!(ds >> m.channels >> m.height >> m.width))
          throw DatasetError(origin + ":" + std::to_string(line_no) +
                             ": #size needs C H W");
      }
      continue;  // other comment lines ignored
    }
    ImageRecord rec;
    std::size_t start = 0;
    std::vector<std::string> fields;
    while (true) {
      const std::size_t tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 4)
      throw DatasetError(origin + ":" + std::to_string(line_no) +
                         ": expected 4 tab-separated fields, got " +
                         std::to_string(fields.size()));
    rec.id = fields[0];
    rec.identity = fields[1];
    rec.view = fields[2];
    rec.path = fields[3];
    m.records.push_back(std::move(rec));
  }
  validate_manifest(m);
  return m;
}

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path);
  return parse_manifest(in, path);
}

void validate_manifest(const DatasetManifest& m) {
  std::set<std::string> ids;
  std::map<std::string, std::size_t> per_identity;
  for (const ImageRecord& r : m.records) {
    if (r.id.empty() || r.identity.empty() || r.view.empty())
      throw DatasetError("record with empty id/identity/view field");
    if (!ids.insert(r.id).second)
      throw DatasetError("duplicate record id '" + r.id + "'");
    ++per_identity[r.identity];
  }
  if (per_identity.size() < 2)
    throw DatasetError("manifest needs at least 2 identities, has " +
                       std::to_string(per_identity.size()));
  for (const auto& [identity, count] : per_identity)
    if (count < 2)
      throw DatasetError("identity '" + identity + "' has only " +
                         std::to_string(count) + " record");
}

// -------------------------------------------------------------------- ppm

namespace {

int ppm_token(std::istream& in) {
  // Skips whitespace and '#' comments, returns the next integer.
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (std::isspace(c)) {
      c = in.get();
    } else {
      break;
    }
  }
  if (c == EOF || !std::isdigit(c)) return -1;
  int value = 0;
  while (c != EOF && std::isdigit(c)) {
    value = value * 10 + (c - '0');
    c = in.get();
  }
  return value;
}

}  // namespace

Tensor load_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image: " + path);
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (magic[0] != 'P' || magic[1] != '6')
    throw IoError(path + ": not a binary PPM (P6)");
  const int w = ppm_token(in);
  const int h = ppm_token(in);
  const int maxval = ppm_token(in);
  if (w <= 0 || h <= 0) throw IoError(path + ": bad PPM dimensions");
  if (maxval != 255) throw IoError(path + ": only 8-bit PPM supported");
  // The single whitespace after maxval was consumed by the token reader.
  std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * 3);
  in.read(reinterpret_cast<char*>(raw.data()),
          static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size())
    throw IoError(path + ": truncated pixel data");
  Tensor out = Tensor::zeros({3, static_cast<std::size_t>(h),
                              static_cast<std::size_t>(w)});
  double* p = out.data();
  const std::size_t plane = static_cast<std::size_t>(w) * h;
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < 3; ++c)
      p[c * plane + i] = raw[i * 3 + c] / 255.0;
  return out;
}

void save_ppm(const Tensor& image, const std::string& path) {
  if (image.shape().rank() != 3 || image.shape()[0] != 3)
    throw ShapeError("save_ppm expects a [3,H,W] tensor, got " +
                     image.shape().str());
  const std::size_t h = image.shape()[1], w = image.shape()[2];
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write image: " + path);
  out << "P6\n" << w << ' ' << h << "\n255\n";
  const double* p = image.data();
  const std::size_t plane = h * w;
  std::vector<unsigned char> raw(plane * 3);
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      const double v = std::clamp(p[c * plane + i], 0.0, 1.0);
      raw[i * 3 + c] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
  }
  out.write(reinterpret_cast<const char*>(raw.data()),
            static_cast<std::streamsize>(raw.size()));
  if (!out) throw IoError("failed writing image: " + path);
}

Tensor resize_bilinear(const Tensor& image, std::size_t out_h,
                       std::size_t out_w) {
  const std::size_t C = image.shape()[0], H = image.shape()[1],
                    W = image.shape()[2];
  if (H == out_h && W == out_w) return image;
  Tensor out = Tensor::zeros({C, out_h, out_w});
  const double* src = image.data();
  double* dst = out.data();
  const double sy = static_cast<double>(H) / out_h;
  const double sx = static_cast<double>(W) / out_w;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      double fy = (oy + 0.5) * sy - 0.5;
      fy = std::clamp(fy, 0.0, static_cast<double>(H - 1));
      const std::size_t y0 = static_cast<std::size_t>(fy);
      const std::size_t y1 = std::min(y0 + 1, H - 1);
      const double wy = fy - y0;
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        double fx = (ox + 0.5) * sx - 0.5;
        fx = std::clamp(fx, 0.0, static_cast<double>(W - 1));
        const std::size_t x0 = static_cast<std::size_t>(fx);
        const std::size_t x1 = std::min(x0 + 1, W - 1);
        const double wx = fx - x0;
        const double top = src[(c * H + y0) * W + x0] * (1 - wx) +
                           src[(c * H + y0) * W + x1] * wx;
        const double bot = src[(c * H + y1) * W + x0] * (1 - wx) +
                           src[(c * H + y1) * W + x1] * wx;
        dst[(c * out_h + oy) * out_w + ox] = top * (1 - wy) + bot * wy;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------- dataset

void index_dataset(Dataset& ds) {
  ds.labels.clear();
  ds.views.clear();
  ds.identity_names.clear();
  ds.view_names.clear();
  std::map<std::string, int> ident_idx, view_idx;
  for (const ImageRecord& r : ds.manifest.records) {
    auto [it, fresh] =
        ident_idx.emplace(r.identity, static_cast<int>(ident_idx.size()));
    if (fresh) ds.identity_names.push_back(r.identity);
    ds.labels.push_back(it->second);
    auto [vt, vfresh] =
        view_idx.emplace(r.view, static_cast<int>(view_idx.size()));
    if (vfresh) ds.view_names.push_back(r.view);
    ds.views.push_back(vt->second);
  }
}

Dataset load_dataset(const std::string& manifest_path) {
  Dataset ds;
  ds.manifest = load_manifest(manifest_path);
  const fs::path base = fs::path(manifest_path).parent_path();
  for (const ImageRecord& r : ds.manifest.records) {
    fs::path p(r.path);
    if (p.is_relative()) p = base / p;
    Tensor img = load_ppm(p.string());
    if (img.shape()[0] != ds.manifest.channels)
      throw DatasetError("record '" + r.id + "': expected " +
                         std::to_string(ds.manifest.channels) + " channels");
    if (img.shape()[1] != ds.manifest.height ||
        img.shape()[2] != ds.manifest.width)
      img = resize_bilinear(img, ds.manifest.height, ds.manifest.width);
    ds.images.push_back(std::move(img));
  }
  index_dataset(ds);
  return ds;
}

void write_dataset(const Dataset& ds, const std::string& dir) {
  fs::path root(dir);
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw IoError("cannot create output directory: " + dir);
  std::ofstream out(root / "manifest.tsv");
  if (!out) throw IoError("cannot write manifest in: " + dir);
  out << "#split "
      << (ds.manifest.split_style == SplitStyle::TwoView ? "two-view"
                                                         : "single-pool")
      << '\n';
  out << "#size " << ds.manifest.channels << ' ' << ds.manifest.height << ' '
      << ds.manifest.width << '\n';
  for (std::size_t i = 0; i < ds.manifest.records.size(); ++i) {
    const ImageRecord& r = ds.manifest.records[i];
    const std::string name = r.id + ".ppm";
    save_ppm(ds.images[i], (root / name).string());
    out << r.id << '\t' << r.identity << '\t' << r.view << '\t' << name
        << '\n';
  }
  if (!out) throw IoError("failed writing manifest in: " + dir);
}

// ------------------------------------------------------------------ synth

namespace {

// Each identity is a random arrangement of colored bands and bars; the
// colors stay inside a palette with headroom so the view transform does not
// saturate. Identity diversity keeps the initial features spread out (the
// learning signal scales with it); task difficulty comes from the
// cross-view transform strength.
struct Stripe {
  std::size_t lo, hi;  // [lo, hi) over the axis
  double rgb[3];
};

struct IdentityPattern {
  double background[3];
  std::vector<Stripe> rows;  // horizontal bands
  std::vector<Stripe> cols;  // vertical bars
};

constexpr double kPaletteLo = 0.15;
constexpr double kPaletteSpan = 0.7;

IdentityPattern make_pattern(Rng rng, std::size_t h, std::size_t w) {
  IdentityPattern p;
  for (double& v : p.background)
    v = kPaletteLo + kPaletteSpan * rng.next_unit();
  const std::size_t n_rows = 4 + rng.below(3);
  for (std::size_t i = 0; i < n_rows; ++i) {
    Stripe s;
    s.lo = rng.below(h);
    s.hi = std::min<std::size_t>(
        h, s.lo + 2 + h / 10 + rng.below(std::max<std::size_t>(h / 5, 1)));
    for (double& v : s.rgb) v = kPaletteLo + kPaletteSpan * rng.next_unit();
    p.rows.push_back(s);
  }
  const std::size_t n_cols = 2 + rng.below(2);
  for (std::size_t i = 0; i < n_cols; ++i) {
    Stripe s;
    s.lo = rng.below(w);
    s.hi = std::min<std::size_t>(
        w, s.lo + 2 + w / 10 + rng.below(std::max<std::size_t>(w / 5, 1)));
    for (double& v : s.rgb) v = kPaletteLo + kPaletteSpan * rng.next_unit();
    p.cols.push_back(s);
  }
  return p;
}

double sample_pattern(const IdentityPattern& p, std::size_t c, long y,
                      long x, std::size_t h, std::size_t w) {
  const std::size_t yy = static_cast<std::size_t>(
      std::clamp<long>(y, 0, static_cast<long>(h) - 1));
  const std::size_t xx = static_cast<std::size_t>(
      std::clamp<long>(x, 0, static_cast<long>(w) - 1));
  double v = p.background[c];
  for (const Stripe& s : p.cols)
    if (xx >= s.lo && xx < s.hi) v = s.rgb[c];
  for (const Stripe& s : p.rows)
    if (yy >= s.lo && yy < s.hi) v = s.rgb[c];
  return v;
}

}  // namespace

Dataset synth_generate(const SynthConfig& cfg) {
  if (cfg.num_identities < 2)
    throw ParamError("synthetic dataset needs >= 2 identities");
  if (cfg.images_per_view < 1)
    throw ParamError("synthetic dataset needs >= 1 image per view");
  if (cfg.noise_std < 0) throw ParamError("noise_std must be >= 0");
  if (cfg.channels != 3)
    throw ParamError("synthetic generator produces 3-channel images");

  const Rng root(cfg.seed);
  // Fixed per-dataset camera transform for the second view.
  Rng view_rng = root.derive(stream::kSynthView);
  double gains[3];
  for (double& g : gains)
    g = 1.0 + cfg.channel_gain * (2.0 * view_rng.next_unit() - 1.0);
  const double brightness =
      cfg.brightness_shift * (2.0 * view_rng.next_unit() - 1.0);

  Dataset ds;
  ds.manifest.split_style = SplitStyle::TwoView;
  ds.manifest.channels = cfg.channels;
  ds.manifest.height = cfg.height;
  ds.manifest.width = cfg.width;

  const std::size_t H = cfg.height, W = cfg.width;
  char buf[64];
  for (std::size_t id = 0; id < cfg.num_identities; ++id) {
    const IdentityPattern pattern =
        make_pattern(root.derive(stream::kSynthIdentity, id), H, W);
    for (std::size_t view = 0; view < 2; ++view) {
      for (std::size_t k = 0; k < cfg.images_per_view; ++k) {
        Rng img_rng = root.derive(stream::kSynthImage, id * 2 + view, k);
        long dy = 0, dx = 0;
        if (view == 1 && cfg.view_jitter > 0) {
          dy = static_cast<long>(img_rng.below(2 * cfg.view_jitter + 1)) -
               cfg.view_jitter;
          dx = static_cast<long>(img_rng.below(2 * cfg.view_jitter + 1)) -
               cfg.view_jitter;
        }
        Tensor img = Tensor::zeros({3, H, W});
        double* p = img.data();
        for (std::size_t c = 0; c < 3; ++c) {
          for (std::size_t y = 0; y < H; ++y) {
            for (std::size_t x = 0; x < W; ++x) {
              double v = sample_pattern(pattern, c,
                                        static_cast<long>(y) + dy,
                                        static_cast<long>(x) + dx, H, W);
              if (view == 1) v = gains[c] * v + brightness;
              if (cfg.noise_std > 0)
                v += cfg.noise_std * img_rng.next_gaussian();
              p[(c * H + y) * W + x] = std::clamp(v, 0.0, 1.0);
            }
          }
        }
        ds.images.push_back(std::move(img));
        ImageRecord rec;
        std::snprintf(buf, sizeof buf, "i%03zu_%c%zu", id,
                      view == 0 ? 'a' : 'b', k);
        rec.id = buf;
        std::snprintf(buf, sizeof buf, "id%03zu", id);
        rec.identity = buf;
        rec.view = view == 0 ? "a" : "b";
        rec.path = rec.id + ".ppm";
        ds.manifest.records.push_back(std::move(rec));
      }
    }
  }
  validate_manifest(ds.manifest);
  index_dataset(ds);
  return ds;
}

// ------------------------------------------------------------- checkpoint

namespace {

constexpr char kMagic[8] = {'R', 'M', 'C', 'K', 'P', 'T', '0', '1'};
constexpr std::uint32_t kVersion = 1;

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

struct Reader {
  std::istream& in;
  const std::string& path;
  template <class T>
  T get() {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw IoError(path + ": truncated checkpoint");
    return v;
  }
  std::string bytes(std::size_t n) {
    std::string s(n, '\0');
    in.read(s.data(), static_cast<std::streamsize>(n));
    if (!in) throw IoError(path + ": truncated checkpoint");
    return s;
  }
};

std::string encode_config(const NetConfig& c) {
  std::string out;
  for (std::size_t v :
       {c.input_channels, c.input_height, c.input_width, c.conv1_channels,
        c.conv1_kernel, c.conv1_stride, c.pool1_window, c.pool1_stride,
        c.conv2_channels, c.conv2_kernel, c.conv2_stride, c.pool2_window,
        c.pool2_stride, c.feature_dim, c.metric_dim})
    put<std::uint64_t>(out, v);
  put<std::uint8_t>(out, c.joint_metric ? 1 : 0);
  put<double>(out, c.l2_epsilon);
  return out;
}

NetConfig decode_config(const std::string& bytes, const std::string& path) {
  if (bytes.size() != 15 * 8 + 1 + 8)
    throw IoError(path + ": bad architecture config block");
  NetConfig c;
  std::size_t off = 0;
  auto u64 = [&] {
    std::uint64_t v;
    std::memcpy(&v, bytes.data() + off, 8);
    off += 8;
    return static_cast<std::size_t>(v);
  };
  c.input_channels = u64();
  c.input_height = u64();
  c.input_width = u64();
  c.conv1_channels = u64();
  c.conv1_kernel = u64();
  c.conv1_stride = u64();
  c.pool1_window = u64();
  c.pool1_stride = u64();
  c.conv2_channels = u64();
  c.conv2_kernel = u64();
  c.conv2_stride = u64();
  c.pool2_window = u64();
  c.pool2_stride = u64();
  c.feature_dim = u64();
  c.metric_dim = u64();
  c.joint_metric = bytes[off++] != 0;
  std::memcpy(&c.l2_epsilon, bytes.data() + off, 8);
  return c;
}

}  // namespace

void save_checkpoint(const Model& model, std::uint64_t iteration,
                     const std::string& path) {
  std::string out;
  out.append(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kVersion);
  const std::string rng_id = Rng::kId;
  put<std::uint16_t>(out, static_cast<std::uint16_t>(rng_id.size()));
  out += rng_id;
  const std::string cfg = encode_config(model.config);
  put<std::uint64_t>(out, fnv1a(cfg));
  out += cfg;
  put<std::uint64_t>(out, iteration);

  Model& mutable_model = const_cast<Model&>(model);
  auto bindings = bind_params(mutable_model, nullptr);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(bindings.size()));
  for (const auto& b : bindings) {
    put<std::uint16_t>(out, static_cast<std::uint16_t>(b.name.size()));
    out += b.name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(b.param->shape().rank()));
    for (std::size_t d : b.param->shape().dims) put<std::uint64_t>(out, d);
    const std::size_t bytes = b.param->size() * sizeof(double);
    const std::size_t pos = out.size();
    out.resize(pos + bytes);
    std::memcpy(out.data() + pos, b.param->data(), bytes);
  }

  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw IoError("cannot write checkpoint: " + tmp);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("failed writing checkpoint: " + tmp);
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place: " + path);
}

std::pair<Model, CheckpointMeta> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  Reader r{in, path};

  const std::string magic = r.bytes(sizeof kMagic);
  if (std::memcmp(magic.data(), kMagic, sizeof kMagic) != 0)
    throw IoError(path + ": not a checkpoint file (bad magic)");
  CheckpointMeta meta;
  meta.version = r.get<std::uint32_t>();
  if (meta.version != kVersion)
    throw IoError(path + ": unsupported checkpoint version " +
                  std::to_string(meta.version));
  meta.rng_id = r.bytes(r.get<std::uint16_t>());
  const std::uint64_t digest = r.get<std::uint64_t>();
  const std::string cfg_bytes = r.bytes(15 * 8 + 1 + 8);
  if (fnv1a(cfg_bytes) != digest)
    throw IoError(path + ": architecture config digest mismatch");
  meta.config = decode_config(cfg_bytes, path);
  meta.iteration = r.get<std::uint64_t>();

  Model model(meta.config);
  auto bindings = bind_params(model, nullptr);
  const std::uint32_t count = r.get<std::uint32_t>();
  if (count != bindings.size())
    throw IoError(path + ": expected " + std::to_string(bindings.size()) +
                  " tensors, file has " + std::to_string(count));
  for (auto& b : bindings) {
    const std::string name = r.bytes(r.get<std::uint16_t>());
    if (name != b.name)
      throw IoError(path + ": tensor '" + name + "' where '" + b.name +
                    "' was expected");
    const std::uint32_t rank = r.get<std::uint32_t>();
    std::vector<std::size_t> dims(rank);
    for (auto& d : dims) d = r.get<std::uint64_t>();
    if (!(Shape(dims) == b.param->shape()))
      throw IoError(path + ": tensor '" + name + "' shape " +
                    Shape(dims).str() + " does not match architecture " +
                    b.param->shape().str());
    in.read(reinterpret_cast<char*>(b.param->data()),
            static_cast<std::streamsize>(b.param->size() * sizeof(double)));
    if (!in) throw IoError(path + ": truncated checkpoint");
  }
  return {std::move(model), std::move(meta)};
}

}  // namespace reid
