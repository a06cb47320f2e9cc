// SPDX-License-Identifier: Apache-2.0
#include "spikesal/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>

namespace spikesal {
namespace {

namespace fs = std::filesystem;

bool ends_with_ci(const std::string& s, const std::string& suffix) {
  if (s.size() < suffix.size()) return false;
  for (std::size_t i = 0; i < suffix.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(s[s.size() - suffix.size() + i])) != suffix[i]) return false;
  }
  return true;
}

// Reads the next whitespace-separated PGM header token, skipping comments.
std::string pgm_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

std::size_t pgm_number(std::istream& in, const std::string& path) {
  const std::string tok = pgm_token(in);
  if (tok.empty() || !std::all_of(tok.begin(), tok.end(), [](char ch) { return std::isdigit(ch); })) {
    throw ImageIoError(path + ": malformed PGM header");
  }
  return std::stoul(tok);
}

GrayImage read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageIoError("cannot open '" + path + "'");
  const std::string magic = pgm_token(in);
  if (magic != "P5" && magic != "P2") throw ImageIoError(path + ": not a PGM file");
  GrayImage img;
  img.width = pgm_number(in, path);
  img.height = pgm_number(in, path);
  const std::size_t maxval = pgm_number(in, path);
  if (img.width == 0 || img.height == 0 || maxval == 0 || maxval > 65535) {
    throw ImageIoError(path + ": invalid PGM dimensions or maxval");
  }
  const std::size_t n = img.width * img.height;
  img.pixels.resize(n);
  auto scale = [&](std::size_t v) {
    return static_cast<std::uint8_t>(std::lround(255.0 * static_cast<double>(std::min(v, maxval)) / maxval));
  };
  if (magic == "P2") {
    for (std::size_t i = 0; i < n; ++i) img.pixels[i] = scale(pgm_number(in, path));
    return img;
  }
  const std::size_t bpp = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> raw(n * bpp);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) throw ImageIoError(path + ": truncated PGM data");
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t v = bpp == 1 ? raw[i] : (static_cast<std::size_t>(raw[2 * i]) << 8 | raw[2 * i + 1]);
    img.pixels[i] = scale(v);
  }
  return img;
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

GrayImage read_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw ImageIoError("cannot open '" + path + "'");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ImageIoError(path + ": libpng initialisation failed");
  }
  GrayImage img;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ImageIoError(path + ": corrupt PNG");
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  const auto color = png_get_color_type(png, info);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA || color == PNG_COLOR_TYPE_PALETTE) {
    png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  }
  png_read_update_info(png, info);
  img.width = png_get_image_width(png, info);
  img.height = png_get_image_height(png, info);
  if (png_get_rowbytes(png, info) != img.width) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ImageIoError(path + ": unsupported PNG layout");
  }
  img.pixels.resize(img.width * img.height);
  rows.resize(img.height);
  for (std::size_t y = 0; y < img.height; ++y) rows[y] = img.pixels.data() + y * img.width;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

}  // namespace

GrayImage read_gray_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageIoError("cannot open '" + path + "'");
  unsigned char sig[8] = {};
  in.read(reinterpret_cast<char*>(sig), 8);
  if (in.gcount() == 8 && png_sig_cmp(sig, 0, 8) == 0) return read_png(path);
  return read_pgm(path);
}

void write_pgm(const std::string& path, const GrayImage& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ImageIoError("cannot open '" + path + "' for writing");
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw ImageIoError("write to '" + path + "' failed");
}

void write_png(const std::string& path, const GrayImage& image) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw ImageIoError("cannot open '" + path + "' for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw ImageIoError(path + ": libpng initialisation failed");
  }
  std::vector<png_bytep> rows(image.height);
  for (std::size_t y = 0; y < image.height; ++y) {
    rows[y] = const_cast<png_bytep>(image.pixels.data() + y * image.width);
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw ImageIoError(path + ": PNG write failed");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void write_gray_image(const std::string& path, const GrayImage& image) {
  if (ends_with_ci(path, ".png")) {
    write_png(path, image);
  } else {
    write_pgm(path, image);
  }
}

IntensityClip load_clip_dir(const std::string& dir) {
  if (!fs::is_directory(dir)) throw ImageIoError("'" + dir + "' is not a directory");
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string p = entry.path().string();
    if (entry.is_regular_file() && (ends_with_ci(p, ".pgm") || ends_with_ci(p, ".png"))) files.push_back(p);
  }
  if (files.empty()) throw ImageIoError("'" + dir + "' contains no .pgm or .png frames");
  std::sort(files.begin(), files.end());
  IntensityClip clip;
  for (std::size_t t = 0; t < files.size(); ++t) {
    GrayImage img = read_gray_image(files[t]);
    if (t == 0) {
      clip = IntensityClip(img.width, img.height, files.size());
    } else if (img.width != clip.width || img.height != clip.height) {
      throw ImageIoError(files[t] + ": frame size " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                         " differs from " + std::to_string(clip.width) + "x" + std::to_string(clip.height));
    }
    const std::size_t n = clip.width * clip.height;
    for (std::size_t p = 0; p < n; ++p) clip.luminance[t * n + p] = img.pixels[p] / 255.0;
  }
  return clip;
}

GrayImage load_mask(const std::string& path) {
  GrayImage img = read_gray_image(path);
  for (auto& p : img.pixels) p = p ? 1 : 0;
  return img;
}

GrayImage to_gray8(std::size_t width, std::size_t height, const std::vector<double>& values, double max) {
  GrayImage img{width, height, std::vector<std::uint8_t>(width * height)};
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const double v = std::clamp(values[i] / max, 0.0, 1.0);
    img.pixels[i] = static_cast<std::uint8_t>(std::lround(255.0 * v));
  }
  return img;
}

}  // namespace spikesal
