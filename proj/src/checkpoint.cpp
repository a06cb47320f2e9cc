// SPDX-License-Identifier: Apache-2.0
#include "spikesal/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>

namespace spikesal {

namespace {

template <typename T>
void put_le(std::ostream& out, T value) {
  unsigned char bytes[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<unsigned char>(value >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(std::istream& in, const char* what) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) {
    throw CheckpointError(std::string("truncated checkpoint while reading ") + what);
  }
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(bytes[i]) << (8 * i);
  return value;
}

constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 34;

}  // namespace

void write_checkpoint(std::ostream& out, const NamedTensors& entries) {
  std::set<std::string> names;
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, tensor] : entries) {
    if (!names.insert(name).second) throw CheckpointError("duplicate checkpoint entry '" + name + "'");
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.ndim()));
    for (std::size_t d : tensor.shape()) put_le<std::uint64_t>(out, d);
    for (double v : tensor.data()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  if (!out) throw CheckpointError("failed writing checkpoint");
}

NamedTensors read_checkpoint(std::istream& in) {
  char magic[sizeof(kCheckpointMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw CheckpointError("bad checkpoint magic");
  }
  const auto version = get_le<std::uint32_t>(in, "version");
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = get_le<std::uint32_t>(in, "entry count");
  NamedTensors entries;
  std::set<std::string> names;
  for (std::uint32_t e = 0; e < count; ++e) {
    const auto len = get_le<std::uint32_t>(in, "name length");
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw CheckpointError("truncated checkpoint while reading name");
    if (!names.insert(name).second) throw CheckpointError("duplicate checkpoint entry '" + name + "'");
    const auto rank = get_le<std::uint32_t>(in, "rank");
    if (rank > 16) throw CheckpointError("entry '" + name + "' has implausible rank " + std::to_string(rank));
    Shape shape(rank);
    std::uint64_t total = 1;
    for (auto& d : shape) {
      const auto dim = get_le<std::uint64_t>(in, "dimension");
      if (dim != 0 && total > kMaxElements / dim) throw CheckpointError("entry '" + name + "' is too large");
      total *= dim;
      d = static_cast<std::size_t>(dim);
    }
    std::vector<double> values(total);
    for (auto& v : values) v = std::bit_cast<double>(get_le<std::uint64_t>(in, "values"));
    entries.emplace_back(name, Tensor::from(std::move(shape), std::move(values)));
  }
  return entries;
}

void save_checkpoint(const std::filesystem::path& path, const NamedTensors& entries) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot open " + path.string() + " for writing");
  write_checkpoint(out, entries);
}

NamedTensors load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  return read_checkpoint(in);
}

}  // namespace spikesal
