#include "unetplus/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>
#include <sstream>

#include "unetplus/augment.hpp"

namespace unetplus {
namespace fs = std::filesystem;

std::string to_string(LabelMode mode) {
  switch (mode) {
    case LabelMode::Binary: return "binary";
    case LabelMode::Parts: return "parts";
    case LabelMode::Type: return "type";
  }
  return "binary";
}

LabelMode parse_label_mode(const std::string& text) {
  if (text == "binary") return LabelMode::Binary;
  if (text == "parts") return LabelMode::Parts;
  if (text == "type") return LabelMode::Type;
  throw ConfigError("unknown label mode '" + text + "'");
}

std::size_t mode_label_count(LabelMode mode) {
  switch (mode) {
    case LabelMode::Binary: return 2;
    case LabelMode::Parts: return 4;
    case LabelMode::Type: return 1 + kInstrumentTypes;
  }
  return 2;
}

void DatasetConfig::validate() const {
  if (n_samples < 1) throw ConfigError("n_samples must be >= 1");
  if (image_size < 16) throw ConfigError("image_size must be >= 16");
  if (min_instruments > max_instruments || max_instruments > 3) {
    throw ConfigError("instrument range must satisfy min <= max <= 3");
  }
  if (!(texture_noise >= 0.0)) throw ConfigError("texture_noise must be >= 0");
}

namespace {

struct Point {
  double y, x;
};

Point operator+(Point a, Point b) { return {a.y + b.y, a.x + b.x}; }
Point operator-(Point a, Point b) { return {a.y - b.y, a.x - b.x}; }
Point operator*(Point a, double s) { return {a.y * s, a.x * s}; }
double dot(Point a, Point b) { return a.y * b.y + a.x * b.x; }
double cross(Point a, Point b) { return a.x * b.y - a.y * b.x; }

bool in_triangle(Point p, Point a, Point b, Point c) {
  const double d1 = cross(b - a, p - a), d2 = cross(c - b, p - b), d3 = cross(a - c, p - c);
  const bool neg = d1 < 0 || d2 < 0 || d3 < 0, pos = d1 > 0 || d2 > 0 || d3 > 0;
  return !(neg && pos);
}

struct Instrument {
  std::size_t type = 1;  // 1..kInstrumentTypes
  Point entry{}, dir{}, perp{};
  double shaft_len = 0, shaft_half = 0;
  Point wrist{};
  double wrist_a = 0, wrist_b = 0;
  std::array<std::array<Point, 3>, 2> jaws{};

  // Part label at p, 0 if outside. Claspers drawn over wrist over shaft.
  std::uint8_t part_at(Point p, double* shade) const {
    for (const auto& jaw : jaws) {
      if (in_triangle(p, jaw[0], jaw[1], jaw[2])) {
        *shade = 1.0;
        return kClaspers;
      }
    }
    const Point dw = p - wrist;
    const double ta = dot(dw, dir) / wrist_a, tb = dot(dw, perp) / wrist_b;
    if (ta * ta + tb * tb <= 1.0) {
      *shade = 1.0 - 0.25 * tb * tb;
      return kWrist;
    }
    const Point ds = p - entry;
    const double t = dot(ds, dir), s = dot(ds, perp);
    if (t >= 0 && t <= shaft_len && std::abs(s) <= shaft_half) {
      const double r = s / shaft_half;
      *shade = 1.0 - 0.35 * r * r;
      return kShaft;
    }
    return kBackground;
  }
};

Instrument draw_instrument(std::mt19937_64& rng, double size) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double scale = size / 64.0;
  Instrument ins;
  ins.type = 1 + static_cast<std::size_t>(unit(rng) * kInstrumentTypes) % kInstrumentTypes;
  const std::array<double, kInstrumentTypes> half_widths{3.2, 4.0, 2.6};
  ins.shaft_half = half_widths[ins.type - 1] * scale;
  ins.wrist_a = 4.5 * scale;
  ins.wrist_b = ins.shaft_half + 1.6 * scale;
  // Wrist centre somewhere in the middle of the frame.
  ins.wrist = {size * (0.25 + 0.5 * unit(rng)), size * (0.25 + 0.5 * unit(rng))};
  const int side = static_cast<int>(unit(rng) * 4.0) % 4;
  const double along = size * (0.1 + 0.8 * unit(rng));
  const double off = -0.1 * size;
  switch (side) {
    case 0: ins.entry = {off, along}; break;
    case 1: ins.entry = {size - off, along}; break;
    case 2: ins.entry = {along, off}; break;
    default: ins.entry = {along, size - off}; break;
  }
  Point d = ins.wrist - ins.entry;
  const double len = std::sqrt(dot(d, d));
  ins.dir = d * (1.0 / len);
  ins.perp = {ins.dir.x, -ins.dir.y};
  ins.shaft_len = len - 0.6 * ins.wrist_a;
  // Two jaws opening symmetrically beyond the wrist.
  const Point base = ins.wrist + ins.dir * (0.85 * ins.wrist_a);
  const double jaw_len = 9.0 * scale, jaw_w = 3.4 * scale, gap = 0.7 * scale;
  const double open = (0.5 + 2.0 * unit(rng)) * scale;
  for (int k = 0; k < 2; ++k) {
    const double sgn = k == 0 ? 1.0 : -1.0;
    ins.jaws[k] = {base + ins.perp * (sgn * gap), base + ins.perp * (sgn * (gap + jaw_w)),
                   base + ins.dir * jaw_len + ins.perp * (sgn * (gap + 0.5 * jaw_w + open))};
  }
  return ins;
}

float quantize(double v) {
  const double c = std::clamp(v, 0.02, 1.0);
  return static_cast<float>(std::lround(c * 255.0)) / 255.0f;
}

}  // namespace

std::vector<SegSample> gen_synthetic(const DatasetConfig& cfg, std::vector<std::size_t>* instrument_counts) {
  cfg.validate();
  const std::size_t s = cfg.image_size;
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<SegSample> out;
  if (instrument_counts) instrument_counts->clear();
  const std::array<std::array<double, 3>, kInstrumentTypes> shaft_colors{
      {{0.30, 0.30, 0.34}, {0.20, 0.21, 0.23}, {0.42, 0.39, 0.36}}};
  while (out.size() < cfg.n_samples) {
    const std::size_t n_ins =
        cfg.min_instruments + static_cast<std::size_t>(unit(rng) * static_cast<double>(cfg.max_instruments - cfg.min_instruments + 1)) %
                                  (cfg.max_instruments - cfg.min_instruments + 1);
    std::vector<Instrument> instruments;
    for (std::size_t k = 0; k < n_ins; ++k) instruments.push_back(draw_instrument(rng, static_cast<double>(s)));

    Mask parts(s, s), owner(s, s);
    std::vector<double> shade(s * s, 1.0);
    for (std::size_t i = 0; i < s; ++i) {
      for (std::size_t j = 0; j < s; ++j) {
        const Point p{static_cast<double>(i) + 0.5, static_cast<double>(j) + 0.5};
        // Later instruments lie on top.
        for (std::size_t k = n_ins; k-- > 0;) {
          double sh = 1.0;
          const std::uint8_t part = instruments[k].part_at(p, &sh);
          if (part != kBackground) {
            parts.at(i, j) = part;
            owner.at(i, j) = static_cast<std::uint8_t>(k + 1);
            shade[i * s + j] = sh;
            break;
          }
        }
      }
    }
    // Reject layouts where some part of some instrument ended up hidden.
    std::vector<std::array<std::size_t, 4>> visible(n_ins, {0, 0, 0, 0});
    for (std::size_t p = 0; p < s * s; ++p) {
      if (owner.labels[p]) visible[owner.labels[p] - 1][parts.labels[p]]++;
    }
    const bool ok = std::all_of(visible.begin(), visible.end(), [](const auto& v) {
      return v[kShaft] >= 4 && v[kWrist] >= 4 && v[kClaspers] >= 4;
    });
    if (!ok) continue;

    // Background: tinted tissue with smooth blotches and fine noise.
    const std::array<double, 3> tint{0.55 + 0.15 * unit(rng), 0.20 + 0.10 * unit(rng), 0.18 + 0.10 * unit(rng)};
    std::vector<double> blotch(s * s);
    for (auto& v : blotch) v = 2.0 * unit(rng) - 1.0;
    blotch = gaussian_smooth(blotch, s, s, 3.0 * static_cast<double>(s) / 64.0);
    SegSample sample;
    sample.image = Tensor<float>({3, s, s});
    sample.mask = Mask(s, s);
    for (std::size_t p = 0; p < s * s; ++p) {
      const std::uint8_t part = parts.labels[p];
      for (std::size_t c = 0; c < 3; ++c) {
        double v;
        if (part == kBackground) {
          v = tint[c] * (1.0 + 4.0 * blotch[p]) + cfg.texture_noise * normal(rng);
        } else {
          const Instrument& ins = instruments[owner.labels[p] - 1];
          const double body = part == kShaft ? shaft_colors[ins.type - 1][c]
                              : part == kWrist ? 0.58 + 0.04 * static_cast<double>(c == 2)
                                               : 0.80;
          v = body * shade[p] + 0.5 * cfg.texture_noise * normal(rng);
        }
        sample.image[c * s * s + p] = quantize(v);
      }
      std::uint8_t label = 0;
      if (part != kBackground) {
        switch (cfg.mode) {
          case LabelMode::Binary: label = 1; break;
          case LabelMode::Parts: label = part; break;
          case LabelMode::Type: label = static_cast<std::uint8_t>(instruments[owner.labels[p] - 1].type); break;
        }
      }
      sample.mask.labels[p] = label;
    }
    out.push_back(std::move(sample));
    if (instrument_counts) instrument_counts->push_back(n_ins);
  }
  return out;
}

// ---------------------------------------------------------------------------
// PNM

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(const std::vector<std::uint8_t>& bytes) : b_(bytes) {}

  void skip_space_and_comments() {
    while (pos_ < b_.size()) {
      if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else if (std::isspace(b_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::size_t number() {
    skip_space_and_comments();
    const std::size_t start = pos_;
    std::size_t v = 0;
    while (pos_ < b_.size() && std::isdigit(b_[pos_])) {
      v = v * 10 + (b_[pos_] - '0');
      if (v > (1u << 24)) throw FormatError("header value too large", start);
      ++pos_;
    }
    if (pos_ == start) throw FormatError("expected a decimal number in header", start);
    return v;
  }

  std::size_t pos() const { return pos_; }
  void advance() { ++pos_; }

 private:
  const std::vector<std::uint8_t>& b_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path + "'");
}

struct Pnm {
  std::size_t channels, height, width;
  std::vector<std::uint8_t> raster;
};

Pnm parse_pnm(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw FormatError("not a binary PGM (P5) or PPM (P6) file", 0);
  }
  Pnm p;
  p.channels = bytes[1] == '6' ? 3 : 1;
  HeaderReader r(bytes);
  r.advance();
  r.advance();
  p.width = r.number();
  p.height = r.number();
  const std::size_t maxval_at = r.pos();
  const std::size_t maxval = r.number();
  if (p.width == 0 || p.height == 0) throw FormatError("zero image dimension", maxval_at);
  if (maxval != 255) throw FormatError("unsupported maxval " + std::to_string(maxval) + " (only 255)", maxval_at);
  if (r.pos() >= bytes.size() || !std::isspace(bytes[r.pos()])) {
    throw FormatError("missing whitespace after maxval", r.pos());
  }
  const std::size_t start = r.pos() + 1;
  const std::size_t need = p.channels * p.height * p.width;
  if (bytes.size() - start < need) throw FormatError("truncated raster", bytes.size());
  p.raster.assign(bytes.begin() + static_cast<long>(start), bytes.begin() + static_cast<long>(start + need));
  return p;
}

std::vector<std::uint8_t> make_pnm(std::size_t channels, std::size_t h, std::size_t w, const std::vector<std::uint8_t>& raster) {
  const std::string header = std::string(channels == 3 ? "P6" : "P5") + "\n" + std::to_string(w) + " " +
                             std::to_string(h) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), raster.begin(), raster.end());
  return out;
}

}  // namespace

std::vector<std::uint8_t> encode_pnm(const Tensor<float>& image) {
  if (image.rank() != 3 || (image.dim(0) != 1 && image.dim(0) != 3)) {
    throw ShapeError("write_image expects [1|3, H, W], got " + shape_str(image.shape()));
  }
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  std::vector<std::uint8_t> raster(c * h * w);
  // Planar tensor to interleaved raster.
  for (std::size_t p = 0; p < h * w; ++p) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double v = std::clamp(static_cast<double>(image[ch * h * w + p]), 0.0, 1.0);
      raster[p * c + ch] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
  }
  return make_pnm(c, h, w, raster);
}

Tensor<float> decode_pnm(const std::vector<std::uint8_t>& bytes) {
  Pnm p = parse_pnm(bytes);
  Tensor<float> img({p.channels, p.height, p.width});
  const std::size_t hw = p.height * p.width;
  for (std::size_t q = 0; q < hw; ++q) {
    for (std::size_t ch = 0; ch < p.channels; ++ch) {
      img[ch * hw + q] = static_cast<float>(p.raster[q * p.channels + ch]) / 255.0f;
    }
  }
  return img;
}

Tensor<float> read_image(const std::string& path) { return decode_pnm(read_file(path)); }

void write_image(const std::string& path, const Tensor<float>& image) { write_file(path, encode_pnm(image)); }

Mask read_mask(const std::string& path) {
  Pnm p = parse_pnm(read_file(path));
  if (p.channels != 1) throw FormatError("mask must be a PGM (P5) file", 0);
  Mask m(p.height, p.width);
  m.labels = std::move(p.raster);
  return m;
}

void write_mask(const std::string& path, const Mask& mask) {
  write_file(path, make_pnm(1, mask.height, mask.width, mask.labels));
}

// ---------------------------------------------------------------------------
// Normalization and cropping

Tensor<float> normalize_zscore(const Tensor<float>& image) {
  if (image.rank() != 3) throw ShapeError("normalize_zscore expects [C, H, W]");
  ChannelStats stats;
  const std::size_t c = image.dim(0), hw = image.dim(1) * image.dim(2);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double s = 0;
    for (std::size_t p = 0; p < hw; ++p) s += image[ch * hw + p];
    const double mu = s / static_cast<double>(hw);
    double ss = 0;
    for (std::size_t p = 0; p < hw; ++p) ss += (image[ch * hw + p] - mu) * (image[ch * hw + p] - mu);
    stats.mean.push_back(mu);
    stats.std.push_back(std::sqrt(ss / static_cast<double>(hw)));
  }
  return normalize_with(image, stats);
}

ChannelStats corpus_stats(const std::vector<SegSample>& samples) {
  if (samples.empty()) throw ConfigError("corpus_stats: empty dataset");
  const std::size_t c = samples[0].image.dim(0);
  std::vector<double> s(c, 0.0), ss(c, 0.0);
  double count = 0;
  for (const auto& smp : samples) {
    const std::size_t hw = smp.image.dim(1) * smp.image.dim(2);
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t p = 0; p < hw; ++p) {
        const double v = smp.image[ch * hw + p];
        s[ch] += v;
        ss[ch] += v * v;
      }
    }
    count += static_cast<double>(hw);
  }
  ChannelStats stats;
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double mu = s[ch] / count;
    stats.mean.push_back(mu);
    stats.std.push_back(std::sqrt(std::max(0.0, ss[ch] / count - mu * mu)));
  }
  return stats;
}

Tensor<float> normalize_with(const Tensor<float>& image, const ChannelStats& stats) {
  const std::size_t c = image.dim(0), hw = image.dim(1) * image.dim(2);
  if (stats.mean.size() != c || stats.std.size() != c) throw ShapeError("channel stats do not match image");
  Tensor<float> out(image.shape());
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double sd = std::max(stats.std[ch], 1e-6);
    for (std::size_t p = 0; p < hw; ++p) {
      out[ch * hw + p] = static_cast<float>((image[ch * hw + p] - stats.mean[ch]) / sd);
    }
  }
  return out;
}

std::pair<Tensor<float>, Mask> crop_border(const Tensor<float>& image, const Mask& mask, const Rect& rect) {
  if (image.rank() != 3 || image.dim(1) != mask.height || image.dim(2) != mask.width) {
    throw ShapeError("crop_border: image and mask are not aligned");
  }
  if (rect.height == 0 || rect.width == 0 || rect.top + rect.height > mask.height || rect.left + rect.width > mask.width) {
    throw ConfigError("crop rectangle outside the image");
  }
  const std::size_t c = image.dim(0), w = mask.width;
  Tensor<float> img({c, rect.height, rect.width});
  Mask m(rect.height, rect.width);
  for (std::size_t i = 0; i < rect.height; ++i) {
    for (std::size_t j = 0; j < rect.width; ++j) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        img[(ch * rect.height + i) * rect.width + j] = image[(ch * mask.height + rect.top + i) * w + rect.left + j];
      }
      m.at(i, j) = mask.at(rect.top + i, rect.left + j);
    }
  }
  return {std::move(img), std::move(m)};
}

Rect detect_content_rect(const Tensor<float>& image, float threshold) {
  if (image.rank() != 3) throw ShapeError("detect_content_rect expects [C, H, W]");
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  std::size_t top = h, bottom = 0, left = w, right = 0;
  bool any = false;
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      bool content = false;
      for (std::size_t ch = 0; ch < c && !content; ++ch) content = image[(ch * h + i) * w + j] > threshold;
      if (!content) continue;
      any = true;
      top = std::min(top, i);
      bottom = std::max(bottom, i);
      left = std::min(left, j);
      right = std::max(right, j);
    }
  }
  if (!any) return Rect{0, 0, h, w};
  return Rect{top, left, bottom - top + 1, right - left + 1};
}

SegSample pad_black_border(const SegSample& sample, std::size_t top, std::size_t bottom, std::size_t left,
                           std::size_t right) {
  const std::size_t c = sample.image.dim(0), h = sample.mask.height, w = sample.mask.width;
  const std::size_t nh = h + top + bottom, nw = w + left + right;
  SegSample out{Tensor<float>({c, nh, nw}), Mask(nh, nw)};
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        out.image[(ch * nh + top + i) * nw + left + j] = sample.image[(ch * h + i) * w + j];
      }
      out.mask.at(top + i, left + j) = sample.mask.at(i, j);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Manifests

std::vector<std::pair<std::string, std::string>> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest '" + path + "'");
  const fs::path base = fs::path(path).parent_path();
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string img, msk, extra;
    if (!(ls >> img >> msk) || (ls >> extra)) {
      throw IoError("manifest '" + path + "' line " + std::to_string(lineno) + ": expected 'image_path mask_path'");
    }
    auto resolve = [&](const std::string& p) {
      return fs::path(p).is_absolute() ? p : (base / p).string();
    };
    out.emplace_back(resolve(img), resolve(msk));
  }
  return out;
}

void write_manifest(const std::string& path, const std::vector<std::pair<std::string, std::string>>& entries) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest '" + path + "'");
  for (const auto& [img, msk] : entries) out << img << ' ' << msk << '\n';
}

std::vector<SegSample> load_dataset(const std::string& manifest_path) {
  std::vector<SegSample> out;
  for (const auto& [img, msk] : read_manifest(manifest_path)) {
    SegSample s{read_image(img), read_mask(msk)};
    if (s.image.dim(1) != s.mask.height || s.image.dim(2) != s.mask.width) {
      throw IoError("image '" + img + "' and mask '" + msk + "' differ in size");
    }
    out.push_back(std::move(s));
  }
  if (out.empty()) throw IoError("manifest '" + manifest_path + "' lists no samples");
  return out;
}

std::string save_dataset(const std::string& dir, const std::vector<SegSample>& samples) {
  fs::create_directories(dir);
  std::vector<std::pair<std::string, std::string>> entries;
  char name[64];
  for (std::size_t i = 0; i < samples.size(); ++i) {
    std::snprintf(name, sizeof name, "%04zu", i);
    const std::string img = std::string("image_") + name + ".ppm", msk = std::string("mask_") + name + ".pgm";
    write_image((fs::path(dir) / img).string(), samples[i].image);
    write_mask((fs::path(dir) / msk).string(), samples[i].mask);
    entries.emplace_back(img, msk);
  }
  const std::string manifest = (fs::path(dir) / "manifest.txt").string();
  write_manifest(manifest, entries);
  return manifest;
}

std::uint64_t dataset_hash(const std::vector<SegSample>& samples) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& s : samples) {
    feed(s.image.data().data(), s.image.size() * sizeof(float));
    feed(s.mask.labels.data(), s.mask.labels.size());
  }
  return h;
}

}  // namespace unetplus
