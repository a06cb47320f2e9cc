// SPDX-License-Identifier: Apache-2.0
#pragma once

// Checkpoint container layout (all integers little-endian):
//
//   offset  size  field
//   0       8     magic "SPKCKPT\0"
//   8       4     u32 format version (1)
//   12      4     u32 entry count N
//   then N entries, in insertion order:
//           4     u32 name length L
//           L     name bytes (UTF-8, not NUL terminated)
//           4     u32 rank R
//           8*R   u64 dimension sizes
//           8*P   IEEE-754 binary64 values, row-major, P = product of dims
//
// Names are unique within a file.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "spikesal/tensor.hpp"

namespace spikesal {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

inline constexpr char kCheckpointMagic[8] = {'S', 'P', 'K', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& out, const NamedTensors& entries);
NamedTensors read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const NamedTensors& entries);
NamedTensors load_checkpoint(const std::filesystem::path& path);

}  // namespace spikesal
