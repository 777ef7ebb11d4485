#pragma once

// Named-tensor checkpoint file:
//   "SASC" u32 version, u32 element_bytes (4 or 8), u32 count, then per tensor
//   u32 name_len, name, u32 ndim, u32 dims[ndim], little-endian floats.

#include "sasreid/autograd.hpp"
#include "sasreid/nn.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace sasreid::checkpoint {

struct NamedTensor {
  std::string name;
  ag::Matrix value;  // stored as 2-d (rows, cols)
};

enum class Precision { kFloat32 = 4, kFloat64 = 8 };

void write_tensors(std::span<const NamedTensor> tensors, const std::filesystem::path& path,
                   Precision precision = Precision::kFloat32);
std::vector<NamedTensor> read_tensors(const std::filesystem::path& path);

/// nullptr if absent.
const NamedTensor* find(std::span<const NamedTensor> tensors, std::string_view name);

/// Copies every registry parameter from `tensors`. Throws DataError naming the
/// first missing parameter or shape mismatch.
void load_into(std::span<const nn::NamedParam> params, std::span<const NamedTensor> tensors);

std::vector<NamedTensor> snapshot(std::span<const nn::NamedParam> params, const std::string& prefix = "");

}  // namespace sasreid::checkpoint
