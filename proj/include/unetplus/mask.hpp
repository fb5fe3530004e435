#pragma once

#include <cstdint>
#include <set>
#include <vector>

#include "unetplus/tensor.hpp"

namespace unetplus {

// Integer label map, row-major [height, width]. 0 is background.
struct Mask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> labels;

  Mask() = default;
  Mask(std::size_t h, std::size_t w, std::uint8_t fill = 0) : height(h), width(w), labels(h * w, fill) {}

  std::uint8_t& at(std::size_t i, std::size_t j) { return labels[i * width + j]; }
  std::uint8_t at(std::size_t i, std::size_t j) const { return labels[i * width + j]; }
  std::size_t size() const noexcept { return labels.size(); }

  std::set<std::uint8_t> label_set() const { return {labels.begin(), labels.end()}; }

  friend bool operator==(const Mask&, const Mask&) = default;
};

// Image [C, H, W] (raw [0, 1] or normalized) with its aligned label map.
struct SegSample {
  Tensor<float> image;
  Mask mask;
};

// Targets for a batch of masks: [N, 1, H, W] foreground indicator when
// num_classes == 1, otherwise one-hot [N, num_classes, H, W].
template <typename T>
Tensor<T> encode_targets(const std::vector<Mask>& masks, std::size_t num_classes);

}  // namespace unetplus
