#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "unetplus/model.hpp"

namespace unetplus {

// Weight file layout, little-endian throughout:
//   "UNPW" | u32 version | u32 count
//   count x ( u16 name_len | name | u8 ndim | u32 dims[ndim] | f32 data[prod(dims)] )
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const std::vector<NamedArray<float>>& arrays);
// Throws CheckpointError naming the entry being parsed when the bytes are
// inconsistent (bad magic, truncation, implausible header, trailing bytes).
std::vector<NamedArray<float>> decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void checkpoint_write(const std::string& path, const std::vector<NamedArray<float>>& arrays);
std::vector<NamedArray<float>> checkpoint_read(const std::string& path);

// Full model state (parameters and running statistics), stored as float32.
template <typename T>
void save_model(const std::string& path, const Model<T>& model);
template <typename T>
void load_model(const std::string& path, Model<T>& model, LoadScope scope = LoadScope::All);

}  // namespace unetplus
