// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "spikesal/spike_stream.hpp"

namespace spikesal {

class ImageIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 8-bit grayscale image, row-major.
struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;
};

/// Reads binary (P5) or ASCII (P2) PGM, or PNG (any colour type is converted
/// to 8-bit gray). The format is detected from the file contents.
GrayImage read_gray_image(const std::string& path);
void write_pgm(const std::string& path, const GrayImage& image);
void write_png(const std::string& path, const GrayImage& image);
/// Picks PNG for a ".png" suffix and PGM otherwise.
void write_gray_image(const std::string& path, const GrayImage& image);

/// Loads every .pgm/.png file in `dir` in lexicographic order as one tick
/// each, scaled to [0, 1]. All frames must share one size.
IntensityClip load_clip_dir(const std::string& dir);

/// Loads a mask image as 0/1 (any nonzero pixel counts as foreground).
GrayImage load_mask(const std::string& path);

/// Converts values in [0, max] to 8-bit with rounding and clamping.
GrayImage to_gray8(std::size_t width, std::size_t height, const std::vector<double>& values, double max);

}  // namespace spikesal
