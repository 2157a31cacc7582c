#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cfrag/tensor.hpp"

namespace cfrag::checkpoint {

// Versioned binary container for named f64 weight blobs.
// Layout: 8-byte magic, u32 version, u32 d, u32 blob count, then per blob:
// u16 name length, name, u32 rows, u32 cols, rows*cols little-endian f64.
struct Checkpoint {
  std::string magic;  // exactly 8 bytes
  std::uint32_t version = 1;
  std::uint32_t d = 0;
  std::vector<std::pair<std::string, tensor::Tensor>> blobs;

  const tensor::Tensor& blob(const std::string& name) const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path, const std::string& expected_magic);

}  // namespace cfrag::checkpoint
