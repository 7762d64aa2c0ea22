// Copyright 2026 The splatloc Authors
// SPDX-License-Identifier: Apache-2.0

#include "splatloc/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>

#include <fmt/format.h>
#include <png.h>

namespace splatloc {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void skip_pnm_whitespace(std::istream& in) {
  while (true) {
    int c = in.peek();
    if (c == '#') {
      std::string comment;
      std::getline(in, comment);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      return;
    }
  }
}

Image8 read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open '{}'", path.string()));
  std::string magic;
  in >> magic;
  if (magic != "P6") {
    throw UnsupportedFormatError(
        fmt::format("'{}': only binary PPM (P6) is supported", path.string()));
  }
  int w = 0, h = 0, maxval = 0;
  skip_pnm_whitespace(in);
  in >> w;
  skip_pnm_whitespace(in);
  in >> h;
  skip_pnm_whitespace(in);
  in >> maxval;
  in.get();
  if (!in || w <= 0 || h <= 0 || maxval != 255) {
    throw FormatError(fmt::format("'{}': bad PPM header", path.string()));
  }
  Image8 img(w, h);
  in.read(reinterpret_cast<char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
  if (static_cast<std::size_t>(in.gcount()) != img.data.size()) {
    throw IoError(fmt::format("'{}': truncated PPM payload", path.string()));
  }
  return img;
}

Image8 read_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError(fmt::format("cannot open '{}'", path.string()));
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng initialization failed");
  }
  Image8 img;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError(fmt::format("'{}': invalid PNG", path.string()));
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  const auto color = png_get_color_type(png, info);
  const auto depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) {
    png_set_gray_to_rgb(png);
  }
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  img = Image8(static_cast<int>(png_get_image_width(png, info)),
               static_cast<int>(png_get_image_height(png, info)));
  if (png_get_rowbytes(png, info) != static_cast<std::size_t>(img.width) * 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw UnsupportedFormatError(fmt::format("'{}': unsupported PNG layout", path.string()));
  }
  rows.resize(static_cast<std::size_t>(img.height));
  for (int y = 0; y < img.height; ++y) {
    rows[static_cast<std::size_t>(y)] =
        img.data.data() + static_cast<std::size_t>(y) * img.width * 3;
  }
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

}  // namespace

ImageF to_float(const Image8& image) {
  ImageF out(image.width, image.height, 3);
  for (std::size_t i = 0; i < image.data.size(); ++i) out.data[i] = image.data[i] / 255.0;
  return out;
}

Image8 to_8bit(const ImageF& image) {
  if (image.channels != 3) throw ArgumentError("to_8bit: expected 3 channels");
  Image8 out(image.width, image.height);
  for (std::size_t i = 0; i < image.data.size(); ++i) {
    out.data[i] =
        static_cast<std::uint8_t>(std::lround(std::clamp(image.data[i], 0.0, 1.0) * 255.0));
  }
  return out;
}

double sample_bilinear(const ImageF& image, double x, double y, int channel) {
  x = std::clamp(x, 0.0, static_cast<double>(image.width - 1));
  y = std::clamp(y, 0.0, static_cast<double>(image.height - 1));
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, image.width - 1);
  const int y1 = std::min(y0 + 1, image.height - 1);
  const double ax = x - x0, ay = y - y0;
  const double top = (1 - ax) * image.at(x0, y0, channel) + ax * image.at(x1, y0, channel);
  const double bottom = (1 - ax) * image.at(x0, y1, channel) + ax * image.at(x1, y1, channel);
  return (1 - ay) * top + ay * bottom;
}

ImageF resize_bilinear(const ImageF& image, int width, int height) {
  if (image.empty() || width <= 0 || height <= 0) {
    throw ArgumentError("resize_bilinear: zero-sized image");
  }
  if (width == image.width && height == image.height) return image;
  ImageF out(width, height, image.channels);
  const double sx = static_cast<double>(image.width) / width;
  const double sy = static_cast<double>(image.height) / height;
  for (int y = 0; y < height; ++y) {
    const double src_y = (y + 0.5) * sy - 0.5;
    for (int x = 0; x < width; ++x) {
      const double src_x = (x + 0.5) * sx - 0.5;
      for (int c = 0; c < image.channels; ++c) {
        out.at(x, y, c) = sample_bilinear(image, src_x, src_y, c);
      }
    }
  }
  return out;
}

Image8 read_image(const std::filesystem::path& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw IoError(fmt::format("cannot open image '{}'", path.string()));
  unsigned char sig[8] = {};
  probe.read(reinterpret_cast<char*>(sig), 8);
  probe.close();
  if (png_sig_cmp(sig, 0, 8) == 0) return read_png(path);
  if (sig[0] == 'P') return read_ppm(path);
  throw UnsupportedFormatError(fmt::format("'{}': unrecognized image format", path.string()));
}

void write_png(const std::filesystem::path& path, const Image8& image) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError(fmt::format("cannot write '{}'", path.string()));
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError(fmt::format("'{}': PNG encoding failed", path.string()));
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width),
               static_cast<png_uint_32>(image.height), 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < image.height; ++y) {
    png_write_row(png, const_cast<png_bytep>(image.data.data() +
                                             static_cast<std::size_t>(y) * image.width * 3));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void write_ppm(const std::filesystem::path& path, const Image8& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
  out << "P6\n" << image.width << " " << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.data.data()),
            static_cast<std::streamsize>(image.data.size()));
}

void write_pgm16(const std::filesystem::path& path, int width, int height,
                 const std::vector<std::uint16_t>& values) {
  if (values.size() != static_cast<std::size_t>(width) * height) {
    throw ArgumentError("write_pgm16: size mismatch");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
  out << "P5\n" << width << " " << height << "\n65535\n";
  for (std::uint16_t v : values) {
    const unsigned char be[2] = {static_cast<unsigned char>(v >> 8),
                                 static_cast<unsigned char>(v & 0xff)};
    out.write(reinterpret_cast<const char*>(be), 2);
  }
}

std::vector<std::uint16_t> read_pgm16(const std::filesystem::path& path, int& width, int& height) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open '{}'", path.string()));
  std::string magic;
  int maxval = 0;
  in >> magic;
  skip_pnm_whitespace(in);
  in >> width;
  skip_pnm_whitespace(in);
  in >> height;
  skip_pnm_whitespace(in);
  in >> maxval;
  in.get();
  if (magic != "P5" || maxval != 65535 || width <= 0 || height <= 0) {
    throw FormatError(fmt::format("'{}': expected 16-bit P5 PGM", path.string()));
  }
  std::vector<std::uint16_t> values(static_cast<std::size_t>(width) * height);
  for (auto& v : values) {
    unsigned char be[2];
    if (!in.read(reinterpret_cast<char*>(be), 2)) {
      throw IoError(fmt::format("'{}': truncated PGM payload", path.string()));
    }
    v = static_cast<std::uint16_t>((be[0] << 8) | be[1]);
  }
  return values;
}

}  // namespace splatloc
