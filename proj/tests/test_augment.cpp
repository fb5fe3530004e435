#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "unetplus/augment.hpp"
#include "unetplus/data.hpp"

using namespace unetplus;

namespace {

SegSample blob_sample(std::size_t size = 64) {
  SegSample s{Tensor<float>({3, size, size}), Mask(size, size)};
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<float> u(0.f, 1.f);
  for (auto& v : s.image.data()) v = u(rng);
  const std::size_t lo = size / 2 - size / 8, hi = size / 2 + size / 8;
  for (std::size_t i = lo; i < hi; ++i) {
    for (std::size_t j = lo; j < hi; ++j) s.mask.at(i, j) = (i + j) % 3 == 0 ? 2 : 1;
  }
  return s;
}

std::size_t foreground(const Mask& m) {
  return static_cast<std::size_t>(std::count_if(m.labels.begin(), m.labels.end(), [](auto v) { return v != 0; }));
}

double variance(const std::vector<double>& v) {
  double mean = 0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double s = 0;
  for (double x : v) s += (x - mean) * (x - mean);
  return s / static_cast<double>(v.size());
}

bool labels_subset(const Mask& after, const Mask& before) {
  const auto a = after.label_set(), b = before.label_set();
  return std::includes(b.begin(), b.end(), a.begin(), a.end());
}

}  // namespace

TEST(DisplacementField, BoundedDeterministicCentered) {
  const auto f = random_displacement_field(256, 256, 9);
  ASSERT_EQ(f.dx.size(), 256u * 256u);
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < f.dx.size(); ++i) {
    ASSERT_LE(std::abs(f.dx[i]), 1.0);
    ASSERT_LE(std::abs(f.dy[i]), 1.0);
    mx += f.dx[i];
    my += f.dy[i];
  }
  EXPECT_LT(std::abs(mx / f.dx.size()), 0.02);
  EXPECT_LT(std::abs(my / f.dy.size()), 0.02);
  const auto g = random_displacement_field(256, 256, 9);
  EXPECT_EQ(f.dx, g.dx);
  EXPECT_EQ(f.dy, g.dy);
  EXPECT_NE(f.dx, f.dy);
}

TEST(GaussianSmooth, ConstantFieldUnchanged) {
  const std::vector<double> c(15 * 11, 0.7);
  for (double v : gaussian_smooth(c, 15, 11, 2.5)) EXPECT_NEAR(v, 0.7, 1e-12);
}

TEST(GaussianSmooth, ImpulseGivesKernelProfile) {
  const std::size_t n = 21, mid = 10;
  std::vector<double> f(n * n, 0.0);
  f[mid * n + mid] = 1.0;
  const auto out = gaussian_smooth(f, n, n, 1.0);
  double norm = 0;
  for (int i = -3; i <= 3; ++i) norm += std::exp(-0.5 * i * i);
  auto k = [&](int i) { return std::exp(-0.5 * i * i) / norm; };
  EXPECT_NEAR(out[mid * n + mid], k(0) * k(0), 1e-12);
  EXPECT_NEAR(out[(mid + 1) * n + mid + 2], k(1) * k(2), 1e-12);
  EXPECT_NEAR(out[(mid + 4) * n + mid], 0.0, 1e-15);
  EXPECT_EQ(gaussian_kernel(1.0).size(), 7u);
}

TEST(GaussianSmooth, ReducesVariance) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto f = random_displacement_field(32, 32, seed);
    EXPECT_LT(variance(gaussian_smooth(f.dx, 32, 32, 2.0)), variance(f.dx) * 0.5);
  }
}

TEST(Elastic, ZeroAlphaIsExactNoOp) {
  const auto s = blob_sample();
  ElasticConfig cfg;
  cfg.alpha = 0.0;
  cfg.seed = 4;
  const auto [img, mask] = elastic_transform(s.image, s.mask, cfg);
  EXPECT_EQ(img, s.image);
  EXPECT_EQ(mask, s.mask);
}

TEST(Elastic, InvalidConfigAndMisalignment) {
  ElasticConfig cfg;
  cfg.sigma = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = ElasticConfig{};
  cfg.alpha = -1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  const auto s = blob_sample();
  EXPECT_THROW(elastic_transform(s.image, Mask(32, 64), ElasticConfig{}), ShapeError);
}

TEST(Elastic, DeformsButKeepsLabelsAndShape) {
  DatasetConfig dc;
  dc.n_samples = 20;
  dc.seed = 31;
  const auto samples = gen_synthetic(dc);
  std::vector<double> change;
  std::size_t moved = 0;
  for (std::size_t k = 0; k < samples.size(); ++k) {
    ElasticConfig cfg;
    cfg.seed = 100 + k;
    const auto [img, mask] = elastic_transform(samples[k].image, samples[k].mask, cfg);
    EXPECT_TRUE(labels_subset(mask, samples[k].mask));
    moved += !(mask == samples[k].mask);
    const double before = static_cast<double>(foreground(samples[k].mask));
    change.push_back(std::abs(static_cast<double>(foreground(mask)) - before) / before);
  }
  std::nth_element(change.begin(), change.begin() + 10, change.end());
  EXPECT_LT(change[10], 0.15);
  EXPECT_GT(moved, 0u);
}

// The default field moves pixels by a fraction of a pixel; a large alpha
// shows the deformation itself.
TEST(Elastic, LargeAlphaDeformsVisibly) {
  const auto s = blob_sample();
  ElasticConfig cfg;
  cfg.alpha = 150.0;
  cfg.seed = 8;
  const auto [img, mask] = elastic_transform(s.image, s.mask, cfg);
  std::size_t changed = 0;
  for (std::size_t q = 0; q < mask.size(); ++q) changed += mask.labels[q] != s.mask.labels[q];
  EXPECT_GT(changed, 20u);
  EXPECT_TRUE(labels_subset(mask, s.mask));
}

TEST(Affine, IdentityConfigIsExactNoOp) {
  const auto s = blob_sample();
  const AffineConfig cfg;
  std::mt19937_64 rng(1);
  const auto draw = draw_affine(cfg, 64, 64, rng);
  EXPECT_TRUE(draw.geometric_identity());
  const auto [img, mask] = affine_transform(s.image, s.mask, cfg, draw);
  EXPECT_EQ(img, s.image);
  EXPECT_EQ(mask, s.mask);
}

TEST(Affine, NonPositiveScaleRejected) {
  AffineConfig cfg;
  cfg.scale_lo = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = AffineConfig{};
  cfg.p_hflip = 1.5;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Affine, DoubleHflipIsIdentity) {
  const auto s = blob_sample();
  const AffineConfig cfg;
  AffineDraw flip;
  flip.hflip = true;
  const auto once = affine_transform(s.image, s.mask, cfg, flip);
  const auto twice = affine_transform(once.first, once.second, cfg, flip);
  EXPECT_EQ(twice.first, s.image);
  EXPECT_EQ(twice.second, s.mask);
}

TEST(Affine, HflipReversesColumnMeans) {
  const auto s = blob_sample(16);
  AffineDraw flip;
  flip.hflip = true;
  const auto [img, mask] = affine_transform(s.image, s.mask, AffineConfig{}, flip);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t j = 0; j < 16; ++j) {
      double before = 0, after = 0;
      for (std::size_t i = 0; i < 16; ++i) {
        before += s.image[(c * 16 + i) * 16 + (15 - j)];
        after += img[(c * 16 + i) * 16 + j];
      }
      EXPECT_NEAR(after, before, 1e-5);
    }
  }
}

TEST(Affine, BorderStaysBackgroundAfterTranslation) {
  const auto s = blob_sample();
  const AffineConfig cfg = AffineConfig::standard();
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::mt19937_64 rng(seed);
    const auto draw = draw_affine(cfg, 64, 64, rng);
    const auto [img, mask] = affine_transform(s.image, s.mask, cfg, draw);
    for (std::size_t k = 0; k < 64; ++k) {
      ASSERT_EQ(mask.at(0, k), 0);
      ASSERT_EQ(mask.at(63, k), 0);
      ASSERT_EQ(mask.at(k, 0), 0);
      ASSERT_EQ(mask.at(k, 63), 0);
    }
    for (float v : img.data()) ASSERT_TRUE(v >= 0.f && v <= 1.f);
  }
}

TEST(Affine, ImageAndMaskShareCoordinateMap) {
  SegSample s = blob_sample();
  for (std::size_t q = 0; q < 64 * 64; ++q) {
    for (std::size_t c = 0; c < 3; ++c) s.image[c * 64 * 64 + q] = s.mask.labels[q] ? 1.f : 0.f;
  }
  AffineConfig cfg = AffineConfig::standard();
  cfg.brightness_delta = 0.0;
  cfg.noise_std = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    const auto draw = draw_affine(cfg, 64, 64, rng);
    const auto [img, mask] = affine_transform(s.image, s.mask, cfg, draw);
    std::size_t disagree = 0;
    for (std::size_t q = 0; q < 64 * 64; ++q) disagree += (img[q] > 0.5f) != (mask.labels[q] != 0);
    EXPECT_LT(disagree, 64u) << "seed " << seed;
  }
}

TEST(AugmentSample, IdentityConfigsLeaveSampleUnchanged) {
  const auto s = blob_sample();
  ElasticConfig still;
  still.alpha = 0.0;
  const auto out = augment_sample(s, AffineConfig{}, still, 77);
  EXPECT_EQ(out.image, s.image);
  EXPECT_EQ(out.mask, s.mask);
}

TEST(AugmentSample, ReseedingDiffersAcrossEpochsAndRepeatsAcrossRuns) {
  const auto s = blob_sample();
  const auto a = augment_sample(s, AffineConfig::standard(), ElasticConfig{}, 1);
  const auto b = augment_sample(s, AffineConfig::standard(), ElasticConfig{}, 2);
  const auto a2 = augment_sample(s, AffineConfig::standard(), ElasticConfig{}, 1);
  EXPECT_FALSE(a.image == b.image);
  EXPECT_EQ(a.image, a2.image);
  EXPECT_EQ(a.mask, a2.mask);
}

TEST(AugmentSample, NeverInventsLabels) {
  DatasetConfig dc;
  dc.n_samples = 10;
  dc.mode = LabelMode::Parts;
  dc.seed = 3;
  const auto samples = gen_synthetic(dc);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto& s = samples[seed % samples.size()];
    const auto out = augment_sample(s, AffineConfig::standard(), ElasticConfig{}, seed, seed % 2 == 1);
    ASSERT_TRUE(labels_subset(out.mask, s.mask)) << seed;
  }
}
