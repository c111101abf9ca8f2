#pragma once

#include <map>
#include <string>

#include "core/tensor.hpp"

namespace cantm::core {

// A key -> tensor archive with optional string entries, stored as a single
// binary file. Tensors are raw little-endian float64, so a save/load round
// trip is bitwise exact. Layout:
//
//   magic "CNTMARC1"
//   u64 entry_count
//   per entry: u8 kind (0 tensor, 1 string), u32 key_len, key bytes,
//     tensor: u64 rows, u64 cols, rows*cols f64
//     string: u64 byte_len, bytes
struct Archive {
  std::map<std::string, Tensor> tensors;
  std::map<std::string, std::string> strings;

  void save(const std::string& path) const;
  // Throws std::runtime_error on missing file, bad magic, or truncation;
  // never leaves a partially filled archive in the caller's hands.
  static Archive load(const std::string& path);

  const Tensor& tensor(const std::string& key) const;
  const std::string& string(const std::string& key) const;
  // Validates that `key` exists with the given shape; throws otherwise.
  const Tensor& tensor_checked(const std::string& key, int rows,
                               int cols) const;
};

}  // namespace cantm::core
