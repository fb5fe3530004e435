#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "unetplus/mask.hpp"

namespace unetplus {

enum class LabelMode { Binary, Parts, Type };

std::string to_string(LabelMode mode);
LabelMode parse_label_mode(const std::string& text);

// Distinct label values (background included) a mode produces.
std::size_t mode_label_count(LabelMode mode);

inline constexpr std::size_t kInstrumentTypes = 3;

// Part labels in parts mode.
enum Part : std::uint8_t { kBackground = 0, kShaft = 1, kWrist = 2, kClaspers = 3 };

struct DatasetConfig {
  std::size_t n_samples = 20;
  std::size_t image_size = 64;
  LabelMode mode = LabelMode::Binary;
  std::size_t min_instruments = 1;
  std::size_t max_instruments = 3;
  double texture_noise = 0.05;
  std::uint64_t seed = 0;

  void validate() const;
};

// Procedural stand-in for endoscopic frames: textured tissue background with
// 1..3 instruments, each a rotated shaft entering from the border, an
// elliptical wrist and two clasper jaws. Every part of every instrument is
// visible. Image values are multiples of 1/255 so 8-bit files round trip.
// When `instrument_counts` is given it receives the instruments per sample.
std::vector<SegSample> gen_synthetic(const DatasetConfig& cfg, std::vector<std::size_t>* instrument_counts = nullptr);

// Binary PPM (P6, 3 channels) / PGM (P5, 1 channel), maxval 255. Images are
// scaled to [0, 1] on read and quantized to 8 bits on write.
Tensor<float> read_image(const std::string& path);
void write_image(const std::string& path, const Tensor<float>& image);
// Masks are PGM files holding raw class ids.
Mask read_mask(const std::string& path);
void write_mask(const std::string& path, const Mask& mask);

// In-memory codecs used by the file functions.
std::vector<std::uint8_t> encode_pnm(const Tensor<float>& image);
Tensor<float> decode_pnm(const std::vector<std::uint8_t>& bytes);

// Per-channel (x - mean) / max(std, 1e-6).
Tensor<float> normalize_zscore(const Tensor<float>& image);

struct ChannelStats {
  std::vector<double> mean, std;
};
ChannelStats corpus_stats(const std::vector<SegSample>& samples);
Tensor<float> normalize_with(const Tensor<float>& image, const ChannelStats& stats);

struct Rect {
  std::size_t top = 0, left = 0, height = 0, width = 0;
  friend bool operator==(const Rect&, const Rect&) = default;
};

std::pair<Tensor<float>, Mask> crop_border(const Tensor<float>& image, const Mask& mask, const Rect& rect);
// Bounding box of pixels where any channel exceeds `threshold`.
Rect detect_content_rect(const Tensor<float>& image, float threshold = 0.0f);
// Surrounds a sample with a black (0) image border and background mask.
SegSample pad_black_border(const SegSample& sample, std::size_t top, std::size_t bottom, std::size_t left,
                           std::size_t right);

// Dataset manifest: one "image_path mask_path" pair per line. Relative
// paths resolve against the manifest's directory.
std::vector<std::pair<std::string, std::string>> read_manifest(const std::string& path);
void write_manifest(const std::string& path, const std::vector<std::pair<std::string, std::string>>& entries);
std::vector<SegSample> load_dataset(const std::string& manifest_path);
// Writes images/masks plus manifest.txt into `dir`; returns the manifest path.
std::string save_dataset(const std::string& dir, const std::vector<SegSample>& samples);

// FNV-1a over image bits and mask labels.
std::uint64_t dataset_hash(const std::vector<SegSample>& samples);

}  // namespace unetplus
