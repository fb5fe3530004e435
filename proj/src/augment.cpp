#include "unetplus/augment.hpp"

#include <algorithm>
#include <cmath>

namespace unetplus {
namespace {

void require_aligned(const Tensor<float>& image, const Mask& mask) {
  if (image.rank() != 3 || image.dim(1) != mask.height || image.dim(2) != mask.width) {
    throw ShapeError("image " + shape_str(image.shape()) + " not aligned with mask [" +
                     std::to_string(mask.height) + "," + std::to_string(mask.width) + "]");
  }
}

std::size_t reflect101(long i, std::size_t n) {
  if (n == 1) return 0;
  const long period = 2 * static_cast<long>(n) - 2;
  long r = std::abs(i) % period;
  if (r >= static_cast<long>(n)) r = period - r;
  return static_cast<std::size_t>(r);
}

// Resamples image (bilinear) and mask (nearest) through a map from output
// pixel (i, j) to fractional source coordinates (y, x).
template <typename SourceMap>
std::pair<Tensor<float>, Mask> resample(const Tensor<float>& image, const Mask& mask, SourceMap source) {
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  Tensor<float> out_img(image.shape());
  Mask out_mask(h, w);
  const double max_y = static_cast<double>(h - 1), max_x = static_cast<double>(w - 1);
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      auto [y, x] = source(i, j);
      y = std::clamp(y, 0.0, max_y);
      x = std::clamp(x, 0.0, max_x);
      const std::size_t y0 = static_cast<std::size_t>(std::floor(y));
      const std::size_t x0 = static_cast<std::size_t>(std::floor(x));
      const std::size_t y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
      const double fy = y - static_cast<double>(y0), fx = x - static_cast<double>(x0);
      for (std::size_t ch = 0; ch < c; ++ch) {
        const float* p = image.data().data() + ch * h * w;
        const double top = (1.0 - fx) * p[y0 * w + x0] + fx * p[y0 * w + x1];
        const double bottom = (1.0 - fx) * p[y1 * w + x0] + fx * p[y1 * w + x1];
        out_img[(ch * h + i) * w + j] = static_cast<float>((1.0 - fy) * top + fy * bottom);
      }
      const std::size_t ny = static_cast<std::size_t>(std::lround(y));
      const std::size_t nx = static_cast<std::size_t>(std::lround(x));
      out_mask.at(i, j) = mask.at(ny, nx);
    }
  }
  return {std::move(out_img), std::move(out_mask)};
}

}  // namespace

void AffineConfig::validate() const {
  if (!(scale_lo > 0.0) || !(scale_hi > 0.0)) throw ConfigError("affine scale range must be positive");
  if (scale_lo > scale_hi) throw ConfigError("affine scale range has lo > hi");
  for (double p : {p_hflip, p_vflip}) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("affine flip probability outside [0, 1]");
  }
  for (double v : {translate_frac, brightness_delta, noise_std}) {
    if (!std::isfinite(v) || v < 0.0) throw ConfigError("affine ranges must be finite and non-negative");
  }
}

AffineConfig AffineConfig::standard() {
  AffineConfig cfg;
  cfg.scale_lo = 0.9;
  cfg.scale_hi = 1.1;
  cfg.translate_frac = 0.0625;
  cfg.p_hflip = 0.5;
  cfg.p_vflip = 0.5;
  cfg.brightness_delta = 0.1;
  cfg.noise_std = 0.01;
  return cfg;
}

void ElasticConfig::validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("elastic alpha must be >= 0");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ConfigError("elastic sigma must be > 0");
}

AffineDraw draw_affine(const AffineConfig& cfg, std::size_t height, std::size_t width, std::mt19937_64& rng) {
  cfg.validate();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  // Every field is drawn unconditionally so the stream position is stable.
  AffineDraw d;
  d.hflip = unit(rng) < cfg.p_hflip;
  d.vflip = unit(rng) < cfg.p_vflip;
  const double s = unit(rng), tx = unit(rng), ty = unit(rng), b = unit(rng);
  d.scale = cfg.scale_lo == cfg.scale_hi ? cfg.scale_lo : cfg.scale_lo + (cfg.scale_hi - cfg.scale_lo) * s;
  d.shift_x = cfg.translate_frac == 0.0 ? 0.0 : (2.0 * tx - 1.0) * cfg.translate_frac * static_cast<double>(width);
  d.shift_y = cfg.translate_frac == 0.0 ? 0.0 : (2.0 * ty - 1.0) * cfg.translate_frac * static_cast<double>(height);
  d.brightness = cfg.brightness_delta == 0.0 ? 0.0 : (2.0 * b - 1.0) * cfg.brightness_delta;
  d.noise_seed = rng();
  return d;
}

DisplacementField random_displacement_field(std::size_t height, std::size_t width, std::uint64_t seed) {
  if (height < 1 || width < 1) throw ShapeError("displacement field needs positive dims");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  DisplacementField f{height, width, std::vector<double>(height * width), std::vector<double>(height * width)};
  for (auto& v : f.dx) v = unit(rng);
  for (auto& v : f.dy) v = unit(rng);
  return f;
}

std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0.0)) throw ConfigError("gaussian sigma must be > 0");
  const long radius = static_cast<long>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double total = 0;
  for (long t = -radius; t <= radius; ++t) {
    k[t + radius] = std::exp(-static_cast<double>(t * t) / (2.0 * sigma * sigma));
    total += k[t + radius];
  }
  for (auto& v : k) v /= total;
  return k;
}

std::vector<double> gaussian_smooth(const std::vector<double>& field, std::size_t h, std::size_t w, double sigma) {
  if (field.size() != h * w) throw ShapeError("gaussian_smooth: field size does not match dims");
  const std::vector<double> k = gaussian_kernel(sigma);
  const long radius = static_cast<long>(k.size() / 2);
  std::vector<double> tmp(h * w), out(h * w);
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      double acc = 0;
      for (long t = -radius; t <= radius; ++t) {
        acc += k[t + radius] * field[i * w + reflect101(static_cast<long>(j) + t, w)];
      }
      tmp[i * w + j] = acc;
    }
  }
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      double acc = 0;
      for (long t = -radius; t <= radius; ++t) {
        acc += k[t + radius] * tmp[reflect101(static_cast<long>(i) + t, h) * w + j];
      }
      out[i * w + j] = acc;
    }
  }
  return out;
}

std::pair<Tensor<float>, Mask> elastic_transform(const Tensor<float>& image, const Mask& mask, const ElasticConfig& cfg) {
  require_aligned(image, mask);
  cfg.validate();
  if (cfg.alpha == 0.0) return {image, mask};
  const std::size_t h = mask.height, w = mask.width;
  DisplacementField f = random_displacement_field(h, w, cfg.seed);
  const std::vector<double> dx = gaussian_smooth(f.dx, h, w, cfg.sigma);
  const std::vector<double> dy = gaussian_smooth(f.dy, h, w, cfg.sigma);
  return resample(image, mask, [&](std::size_t i, std::size_t j) {
    return std::pair<double, double>{static_cast<double>(i) + cfg.alpha * dy[i * w + j],
                                     static_cast<double>(j) + cfg.alpha * dx[i * w + j]};
  });
}

std::pair<Tensor<float>, Mask> affine_transform(const Tensor<float>& image, const Mask& mask, const AffineConfig& cfg,
                                                const AffineDraw& draw) {
  require_aligned(image, mask);
  cfg.validate();
  if (!(draw.scale > 0.0)) throw ConfigError("affine scale must be positive");
  const std::size_t h = mask.height, w = mask.width;
  std::pair<Tensor<float>, Mask> out{image, mask};
  if (!draw.geometric_identity()) {
    const double cy = (static_cast<double>(h) - 1.0) / 2.0, cx = (static_cast<double>(w) - 1.0) / 2.0;
    out = resample(image, mask, [&](std::size_t i, std::size_t j) {
      double y = (static_cast<double>(i) - cy - draw.shift_y) / draw.scale + cy;
      double x = (static_cast<double>(j) - cx - draw.shift_x) / draw.scale + cx;
      if (draw.vflip) y = static_cast<double>(h - 1) - y;
      if (draw.hflip) x = static_cast<double>(w - 1) - x;
      return std::pair<double, double>{y, x};
    });
  }
  if (draw.brightness != 0.0 || cfg.noise_std > 0.0) {
    std::mt19937_64 rng(draw.noise_seed);
    std::normal_distribution<double> noise(0.0, cfg.noise_std > 0.0 ? cfg.noise_std : 1.0);
    for (auto& v : out.first.data()) {
      double value = v + draw.brightness;
      if (cfg.noise_std > 0.0) value += noise(rng);
      v = static_cast<float>(std::clamp(value, 0.0, 1.0));
    }
  }
  return out;
}

SegSample augment_sample(const SegSample& sample, const AffineConfig& affine, const ElasticConfig& elastic,
                         std::uint64_t seed, bool elastic_first) {
  std::mt19937_64 rng(seed);
  const AffineDraw draw = draw_affine(affine, sample.mask.height, sample.mask.width, rng);
  ElasticConfig el = elastic;
  el.seed = rng();
  SegSample out = sample;
  auto apply_affine = [&] { std::tie(out.image, out.mask) = affine_transform(out.image, out.mask, affine, draw); };
  auto apply_elastic = [&] { std::tie(out.image, out.mask) = elastic_transform(out.image, out.mask, el); };
  if (elastic_first) {
    apply_elastic();
    apply_affine();
  } else {
    apply_affine();
    apply_elastic();
  }
  return out;
}

}  // namespace unetplus
