// SPDX-License-Identifier: Apache-2.0
#include "spikesal/spike_stream.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

namespace spikesal {

IntensityClip::IntensityClip(std::size_t w, std::size_t h, std::size_t ticks, double fill)
    : width(w), height(h), num_ticks(ticks), luminance(w * h * ticks, fill) {}

void IntensityClip::validate() const {
  if (num_ticks == 0) throw ParameterError("intensity clip: num_ticks must be at least 1");
  if (width == 0 || height == 0) throw ParameterError("intensity clip: width and height must be positive");
  if (luminance.size() != width * height * num_ticks) {
    throw ParameterError("intensity clip: expected " + std::to_string(width * height * num_ticks) +
                         " luminance values, got " + std::to_string(luminance.size()));
  }
  for (std::size_t i = 0; i < luminance.size(); ++i) {
    const double v = luminance[i];
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ParameterError("intensity clip: luminance[" + std::to_string(i) + "] = " + std::to_string(v) +
                           " outside [0, 1]");
    }
  }
}

SpikeStream::SpikeStream(std::size_t width, std::size_t height, std::size_t num_ticks)
    : width_(width), height_(height), num_ticks_(num_ticks), bits_((width * height * num_ticks + 7) / 8, 0) {}

bool SpikeStream::get(std::size_t tick, std::size_t y, std::size_t x) const {
  const std::size_t i = (tick * height_ + y) * width_ + x;
  return (bits_[i >> 3] >> (i & 7)) & 1u;
}

void SpikeStream::set(std::size_t tick, std::size_t y, std::size_t x, bool spike) {
  const std::size_t i = (tick * height_ + y) * width_ + x;
  const auto mask = static_cast<std::uint8_t>(1u << (i & 7));
  if (spike) {
    bits_[i >> 3] |= mask;
  } else {
    bits_[i >> 3] &= static_cast<std::uint8_t>(~mask);
  }
}

std::vector<std::uint8_t> SpikeStream::frame(std::size_t tick) const {
  std::vector<std::uint8_t> out(frame_bits());
  const std::size_t base = tick * frame_bits();
  for (std::size_t p = 0; p < out.size(); ++p) {
    const std::size_t i = base + p;
    out[p] = (bits_[i >> 3] >> (i & 7)) & 1u;
  }
  return out;
}

std::size_t SpikeStream::count(std::size_t y, std::size_t x) const {
  std::size_t n = 0;
  for (std::size_t t = 0; t < num_ticks_; ++t) n += get(t, y, x);
  return n;
}

SpikeStream simulate_spikes(const IntensityClip& clip, double theta, std::vector<double>* residual) {
  if (!(theta > 0.0)) throw ParameterError("simulate_spikes: theta must be positive, got " + std::to_string(theta));
  clip.validate();
  const std::size_t n = clip.width * clip.height;
  SpikeStream out(clip.width, clip.height, clip.num_ticks);
  std::vector<double> acc(n, 0.0);
  auto bits = out.packed_mutable();
  for (std::size_t t = 0; t < clip.num_ticks; ++t) {
    const double* lum = clip.luminance.data() + t * n;
    for (std::size_t p = 0; p < n; ++p) {
      acc[p] += lum[p];
      if (acc[p] >= theta) {
        acc[p] -= theta;
        const std::size_t i = t * n + p;
        bits[i >> 3] |= static_cast<std::uint8_t>(1u << (i & 7));
      }
    }
  }
  if (residual) *residual = std::move(acc);
  return out;
}

namespace {

double tfi_value(const std::vector<std::uint32_t>& times, std::size_t tick, double max_gray) {
  if (times.size() < 2) return 0.0;
  // First spike strictly after `tick`.
  auto after = std::upper_bound(times.begin(), times.end(), static_cast<std::uint32_t>(tick));
  std::size_t hi;
  if (after == times.begin()) {
    hi = 1;
  } else if (after == times.end()) {
    hi = times.size() - 1;
  } else {
    hi = static_cast<std::size_t>(after - times.begin());
  }
  const double dt = static_cast<double>(times[hi] - times[hi - 1]);
  return max_gray / dt;
}

}  // namespace

std::vector<ReconstructedFrame> tfi_reconstruct_many(const SpikeStream& stream, std::span<const std::size_t> ticks,
                                                     double max_gray) {
  for (std::size_t t : ticks) {
    if (t >= stream.num_ticks()) {
      throw ParameterError("tfi_reconstruct: tick " + std::to_string(t) + " outside [0, " +
                           std::to_string(stream.num_ticks()) + ")");
    }
  }
  const std::size_t n = stream.frame_bits();
  std::vector<std::vector<std::uint32_t>> times(n);
  auto bits = stream.packed();
  for (std::size_t t = 0; t < stream.num_ticks(); ++t) {
    for (std::size_t p = 0; p < n; ++p) {
      const std::size_t i = t * n + p;
      if ((bits[i >> 3] >> (i & 7)) & 1u) times[p].push_back(static_cast<std::uint32_t>(t));
    }
  }
  std::vector<ReconstructedFrame> out;
  out.reserve(ticks.size());
  for (std::size_t t : ticks) {
    ReconstructedFrame f{stream.width(), stream.height(), max_gray, std::vector<double>(n)};
    for (std::size_t p = 0; p < n; ++p) f.values[p] = tfi_value(times[p], t, max_gray);
    out.push_back(std::move(f));
  }
  return out;
}

ReconstructedFrame tfi_reconstruct(const SpikeStream& stream, std::size_t tick, double max_gray) {
  const std::size_t ticks[] = {tick};
  return std::move(tfi_reconstruct_many(stream, ticks, max_gray).front());
}

// ---------------------------------------------------------------------------

std::uint64_t SpikeHeader::payload_bits() const {
  return static_cast<std::uint64_t>(width) * height * num_ticks;
}

std::uint64_t SpikeHeader::payload_bytes() const { return (payload_bits() + 7) / 8; }

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

SpikeHeader header_of(const SpikeStream& s) {
  constexpr auto kMax = std::numeric_limits<std::uint32_t>::max();
  if (s.width() > kMax || s.height() > kMax || s.num_ticks() > kMax) {
    throw ParameterError("encode_stream: dimensions exceed 32 bits");
  }
  return {static_cast<std::uint32_t>(s.width()), static_cast<std::uint32_t>(s.height()),
          static_cast<std::uint32_t>(s.num_ticks())};
}

}  // namespace

std::vector<std::uint8_t> encode_header(const SpikeHeader& header) {
  std::vector<std::uint8_t> out(kSpikeMagic, kSpikeMagic + 4);
  out.push_back(kSpikeFormatVersion);
  put_u32(out, header.width);
  put_u32(out, header.height);
  put_u32(out, header.num_ticks);
  return out;
}

SpikeHeader decode_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kSpikeHeaderSize) {
    throw StreamDecodeError(DecodeErrorKind::kTruncated, "truncated header: " + std::to_string(bytes.size()) +
                                                             " of " + std::to_string(kSpikeHeaderSize) + " bytes");
  }
  if (std::memcmp(bytes.data(), kSpikeMagic, 4) != 0) throw StreamDecodeError(DecodeErrorKind::kBadMagic, "bad magic");
  if (bytes[4] != kSpikeFormatVersion) {
    throw StreamDecodeError(DecodeErrorKind::kUnsupportedVersion,
                            "unsupported version " + std::to_string(static_cast<int>(bytes[4])));
  }
  SpikeHeader h{get_u32(bytes.data() + 5), get_u32(bytes.data() + 9), get_u32(bytes.data() + 13)};
  if (h.num_ticks == 0) throw StreamDecodeError(DecodeErrorKind::kZeroTicks, "zero ticks");
  if (h.width == 0 || h.height == 0) throw StreamDecodeError(DecodeErrorKind::kZeroSize, "zero frame size");
  // Width * height * ticks fits in 96 bits; reject anything whose byte count
  // cannot be addressed as a file offset.
  const unsigned __int128 bits = static_cast<unsigned __int128>(h.width) * h.height * h.num_ticks;
  if (bits > static_cast<unsigned __int128>(std::numeric_limits<std::int64_t>::max() - 64)) {
    throw StreamDecodeError(DecodeErrorKind::kDimensionOverflow, "dimension overflow: payload too large");
  }
  return h;
}

std::vector<std::uint8_t> encode_stream(const SpikeStream& stream) {
  auto out = encode_header(header_of(stream));
  auto payload = stream.packed();
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

SpikeStream decode_stream(std::span<const std::uint8_t> bytes) {
  const SpikeHeader h = decode_header(bytes);
  const std::uint64_t need = h.payload_bytes();
  if (need > std::numeric_limits<std::size_t>::max() / 2) {
    throw StreamDecodeError(DecodeErrorKind::kDimensionOverflow, "dimension overflow: payload too large for memory");
  }
  const std::size_t have = bytes.size() - kSpikeHeaderSize;
  if (have < need) {
    throw StreamDecodeError(DecodeErrorKind::kTruncated, "truncated payload: " + std::to_string(have) + " of " +
                                                             std::to_string(need) + " bytes");
  }
  if (have > need) {
    throw StreamDecodeError(DecodeErrorKind::kTrailingData,
                            "trailing data: " + std::to_string(have - need) + " extra bytes");
  }
  SpikeStream s(h.width, h.height, h.num_ticks);
  std::copy(bytes.begin() + kSpikeHeaderSize, bytes.end(), s.packed_mutable().begin());
  // Padding bits beyond the payload are ignored; clear them so equality is bitwise.
  const std::uint64_t tail = h.payload_bits() % 8;
  if (tail != 0) s.packed_mutable().back() &= static_cast<std::uint8_t>((1u << tail) - 1);
  return s;
}

SpikeStreamWriter::SpikeStreamWriter(std::ostream& out, SpikeHeader header) : out_(out), header_(header) {
  if (header.num_ticks == 0) throw ParameterError("spike writer: zero ticks");
  if (header.width == 0 || header.height == 0) throw ParameterError("spike writer: zero frame size");
  auto bytes = encode_header(header);
  out_.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void SpikeStreamWriter::write_frame(std::span<const std::uint8_t> pixels) {
  if (finished_) throw ParameterError("spike writer: write after finish");
  const std::size_t n = static_cast<std::size_t>(header_.width) * header_.height;
  if (pixels.size() != n) {
    throw ParameterError("spike writer: frame has " + std::to_string(pixels.size()) + " pixels, expected " +
                         std::to_string(n));
  }
  if (frames_ >= header_.num_ticks) throw ParameterError("spike writer: more frames than declared");
  std::vector<std::uint8_t> buf;
  buf.reserve(n / 8 + 1);
  for (auto px : pixels) {
    if (px) pending_ |= static_cast<std::uint8_t>(1u << pending_bits_);
    if (++pending_bits_ == 8) {
      buf.push_back(pending_);
      pending_ = 0;
      pending_bits_ = 0;
    }
  }
  out_.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  ++frames_;
}

void SpikeStreamWriter::finish() {
  if (finished_) return;
  if (frames_ != header_.num_ticks) {
    throw ParameterError("spike writer: wrote " + std::to_string(frames_) + " of " +
                         std::to_string(header_.num_ticks) + " frames");
  }
  if (pending_bits_ > 0) out_.put(static_cast<char>(pending_));
  pending_ = 0;
  pending_bits_ = 0;
  finished_ = true;
  out_.flush();
}

SpikeStreamReader::SpikeStreamReader(std::istream& in) : in_(in) {
  std::uint8_t raw[kSpikeHeaderSize];
  in_.read(reinterpret_cast<char*>(raw), kSpikeHeaderSize);
  header_ = decode_header(std::span<const std::uint8_t>(raw, static_cast<std::size_t>(in_.gcount())));
  payload_start_ = in_.tellg();
}

std::vector<std::uint8_t> SpikeStreamReader::read_frame(std::size_t tick) {
  if (tick >= header_.num_ticks) {
    throw StreamDecodeError(DecodeErrorKind::kOutOfRange, "tick " + std::to_string(tick) + " outside [0, " +
                                                              std::to_string(header_.num_ticks) + ")");
  }
  const std::uint64_t n = static_cast<std::uint64_t>(header_.width) * header_.height;
  const std::uint64_t first_bit = tick * n;
  const std::uint64_t first_byte = first_bit / 8;
  const std::uint64_t last_byte = (first_bit + n - 1) / 8;
  std::vector<std::uint8_t> raw(last_byte - first_byte + 1);
  in_.clear();
  in_.seekg(payload_start_ + static_cast<std::streamoff>(first_byte));
  in_.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in_.gcount()) != raw.size()) {
    throw StreamDecodeError(DecodeErrorKind::kTruncated, "truncated payload at tick " + std::to_string(tick));
  }
  std::vector<std::uint8_t> out(n);
  const std::uint64_t shift = first_bit % 8;
  for (std::uint64_t p = 0; p < n; ++p) {
    const std::uint64_t i = p + shift;
    out[p] = (raw[i >> 3] >> (i & 7)) & 1u;
  }
  return out;
}

void save_spike_stream(const std::string& path, const SpikeStream& stream) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  SpikeStreamWriter w(out, header_of(stream));
  for (std::size_t t = 0; t < stream.num_ticks(); ++t) w.write_frame(stream.frame(t));
  w.finish();
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

SpikeStream load_spike_stream(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  SpikeStreamReader r(in);
  const auto& h = r.header();
  SpikeStream s(h.width, h.height, h.num_ticks);
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::uint64_t>(in.tellg());
  const std::uint64_t expect = kSpikeHeaderSize + h.payload_bytes();
  if (size < expect) {
    throw StreamDecodeError(DecodeErrorKind::kTruncated, "truncated payload: " + std::to_string(size) + " of " +
                                                             std::to_string(expect) + " bytes");
  }
  if (size > expect) throw StreamDecodeError(DecodeErrorKind::kTrailingData, "trailing data after payload");
  for (std::size_t t = 0; t < h.num_ticks; ++t) {
    auto f = r.read_frame(t);
    for (std::size_t p = 0; p < f.size(); ++p)
      if (f[p]) s.set(t, p / h.width, p % h.width, true);
  }
  return s;
}

}  // namespace spikesal
