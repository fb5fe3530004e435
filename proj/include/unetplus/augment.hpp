#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "unetplus/mask.hpp"

namespace unetplus {

struct AffineConfig {
  double scale_lo = 1.0;
  double scale_hi = 1.0;
  double translate_frac = 0.0;  // max |shift| as a fraction of each dim
  double p_hflip = 0.0;
  double p_vflip = 0.0;
  double brightness_delta = 0.0;  // max additive shift
  double noise_std = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
  // Moderate training-time defaults.
  static AffineConfig standard();
};

struct ElasticConfig {
  double alpha = 8.0;  // displacement intensity, pixels
  double sigma = 6.0;  // smoothing, pixels
  std::uint64_t seed = 0;

  void validate() const;
};

struct AugmentConfig {
  bool enabled = true;
  AffineConfig affine = AffineConfig::standard();
  ElasticConfig elastic{};
  bool elastic_first = false;
};

// One realization of the affine pipeline.
struct AffineDraw {
  bool hflip = false;
  bool vflip = false;
  double scale = 1.0;
  double shift_x = 0.0;  // pixels
  double shift_y = 0.0;
  double brightness = 0.0;
  std::uint64_t noise_seed = 0;

  bool geometric_identity() const { return !hflip && !vflip && scale == 1.0 && shift_x == 0.0 && shift_y == 0.0; }
};

AffineDraw draw_affine(const AffineConfig& cfg, std::size_t height, std::size_t width, std::mt19937_64& rng);

struct DisplacementField {
  std::size_t height = 0, width = 0;
  std::vector<double> dx, dy;
};

// Two i.i.d. uniform [-1, 1] fields, deterministic per seed.
DisplacementField random_displacement_field(std::size_t height, std::size_t width, std::uint64_t seed);

// Separable normalized Gaussian, radius ceil(3 sigma), reflect-101 borders.
std::vector<double> gaussian_smooth(const std::vector<double>& field, std::size_t height, std::size_t width,
                                    double sigma);
std::vector<double> gaussian_kernel(double sigma);

// Image sampled bilinearly, mask by nearest neighbour; source coordinates
// clamp to the border. alpha == 0 returns the inputs unchanged.
std::pair<Tensor<float>, Mask> elastic_transform(const Tensor<float>& image, const Mask& mask,
                                                 const ElasticConfig& cfg);

// Single inverse-mapped resampling for flips/scale/shift, then brightness
// and noise on the image only (clamped to [0, 1]).
std::pair<Tensor<float>, Mask> affine_transform(const Tensor<float>& image, const Mask& mask,
                                                const AffineConfig& cfg, const AffineDraw& draw);

// Affine then elastic (or the reverse), all randomness derived from `seed`.
SegSample augment_sample(const SegSample& sample, const AffineConfig& affine, const ElasticConfig& elastic,
                         std::uint64_t seed, bool elastic_first = false);

}  // namespace unetplus
