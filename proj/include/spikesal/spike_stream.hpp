// SPDX-License-Identifier: Apache-2.0
#pragma once

// Spike-camera model: integrate-to-threshold simulation, the .spk stream
// format, and texture-from-interval reconstruction.
//
// .spk layout (integers little-endian):
//
//   offset  size  field
//   0       4     magic "SPKS"
//   4       1     format version (1)
//   5       4     u32 width
//   9       4     u32 height
//   13      4     u32 num_ticks
//   17      ...   payload: one bit per (tick, row, column), tick-major then
//                 row-major, packed LSB-first into bytes. Bit i of the
//                 payload lives in byte i / 8 at bit position i % 8. Only
//                 the final byte is zero-padded.
//
// Frame t therefore starts at payload bit t * width * height, so any frame
// can be located with one seek.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace spikesal {

class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Per-pixel luminance in [0, 1] for each tick, tick-major then row-major.
struct IntensityClip {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t num_ticks = 0;
  std::vector<double> luminance;

  IntensityClip() = default;
  IntensityClip(std::size_t w, std::size_t h, std::size_t ticks, double fill = 0.0);

  double& at(std::size_t tick, std::size_t y, std::size_t x) {
    return luminance[(tick * height + y) * width + x];
  }
  double at(std::size_t tick, std::size_t y, std::size_t x) const {
    return luminance[(tick * height + y) * width + x];
  }
  /// Throws ParameterError unless sizes agree and every value is in [0, 1].
  void validate() const;
};

/// Binary spike stream, stored packed exactly as the .spk payload.
class SpikeStream {
 public:
  SpikeStream() = default;
  SpikeStream(std::size_t width, std::size_t height, std::size_t num_ticks);

  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }
  std::size_t num_ticks() const { return num_ticks_; }
  std::size_t frame_bits() const { return width_ * height_; }

  bool get(std::size_t tick, std::size_t y, std::size_t x) const;
  void set(std::size_t tick, std::size_t y, std::size_t x, bool spike);

  std::span<const std::uint8_t> packed() const { return bits_; }
  std::span<std::uint8_t> packed_mutable() { return bits_; }

  /// One byte (0 or 1) per pixel for a single tick, row-major.
  std::vector<std::uint8_t> frame(std::size_t tick) const;
  std::size_t count(std::size_t y, std::size_t x) const;

  friend bool operator==(const SpikeStream&, const SpikeStream&) = default;

 private:
  std::size_t width_ = 0, height_ = 0, num_ticks_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Accumulates luminance per pixel; emits a spike and subtracts theta
/// whenever the accumulator reaches theta. The remainder carries over.
/// If `residual` is non-null it receives the final accumulator per pixel.
SpikeStream simulate_spikes(const IntensityClip& clip, double theta, std::vector<double>* residual = nullptr);

struct ReconstructedFrame {
  std::size_t width = 0;
  std::size_t height = 0;
  double max_gray = 255.0;
  std::vector<double> values;  // row-major, in [0, max_gray]
};

/// Texture-from-interval reconstruction at `tick`: value = max_gray / dt,
/// where dt is the inter-spike interval bracketing the tick (last spike at
/// or before it, first spike after it). Before the first spike the first
/// interval is used, from the last spike onward the last interval is used.
/// Pixels with fewer than two spikes in the stream reconstruct to 0.
ReconstructedFrame tfi_reconstruct(const SpikeStream& stream, std::size_t tick, double max_gray = 255.0);

/// Same as tfi_reconstruct for several ticks, scanning the stream once.
std::vector<ReconstructedFrame> tfi_reconstruct_many(const SpikeStream& stream, std::span<const std::size_t> ticks,
                                                     double max_gray = 255.0);

// ---------------------------------------------------------------------------
// Codec.

inline constexpr char kSpikeMagic[4] = {'S', 'P', 'K', 'S'};
inline constexpr std::uint8_t kSpikeFormatVersion = 1;
inline constexpr std::size_t kSpikeHeaderSize = 17;

enum class DecodeErrorKind {
  kBadMagic,
  kUnsupportedVersion,
  kTruncated,
  kZeroTicks,
  kZeroSize,
  kDimensionOverflow,
  kTrailingData,
  kOutOfRange,
};

class StreamDecodeError : public std::runtime_error {
 public:
  StreamDecodeError(DecodeErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}
  DecodeErrorKind kind() const { return kind_; }

 private:
  DecodeErrorKind kind_;
};

struct SpikeHeader {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::uint32_t num_ticks = 0;

  std::uint64_t payload_bits() const;
  std::uint64_t payload_bytes() const;
};

std::vector<std::uint8_t> encode_header(const SpikeHeader& header);
/// Parses and validates the 17-byte header.
SpikeHeader decode_header(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_stream(const SpikeStream& stream);
SpikeStream decode_stream(std::span<const std::uint8_t> bytes);

/// Writes a stream one frame at a time without holding the payload.
class SpikeStreamWriter {
 public:
  SpikeStreamWriter(std::ostream& out, SpikeHeader header);
  /// One byte per pixel (nonzero = spike), row-major.
  void write_frame(std::span<const std::uint8_t> pixels);
  /// Flushes the final partial byte. Throws if fewer frames than declared.
  void finish();
  std::size_t frames_written() const { return frames_; }

 private:
  std::ostream& out_;
  SpikeHeader header_;
  std::size_t frames_ = 0;
  std::uint8_t pending_ = 0;
  unsigned pending_bits_ = 0;
  bool finished_ = false;
};

/// Reads frames from a seekable .spk stream on demand.
class SpikeStreamReader {
 public:
  explicit SpikeStreamReader(std::istream& in);
  const SpikeHeader& header() const { return header_; }
  /// Random access to frame `tick` (one seek plus one read).
  std::vector<std::uint8_t> read_frame(std::size_t tick);

 private:
  std::istream& in_;
  SpikeHeader header_;
  std::streamoff payload_start_ = 0;
};

void save_spike_stream(const std::string& path, const SpikeStream& stream);
SpikeStream load_spike_stream(const std::string& path);

}  // namespace spikesal
