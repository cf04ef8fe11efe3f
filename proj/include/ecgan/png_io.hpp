#pragma once

#include <cstdint>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include <png.h>

#include "ecgan/errors.hpp"
#include "ecgan/tensor.hpp"

// Thin libpng wrapper. Byte images are {channels, height, width} planar
// tensors, channels 3 (RGB) or 1 (grayscale), 8 bits per sample. Float images
// in [-1,1] map onto the byte grid with round((v+1)*127.5), so a tensor whose
// values already sit on that grid survives a save/load round trip exactly.

namespace ecgan {

using ByteImage = TensorT<std::uint8_t>;

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace detail

inline void write_png(const std::string& path, const ByteImage& img) {
  if (img.ndim() != 3 || (img.dim(0) != 1 && img.dim(0) != 3))
    throw std::invalid_argument("write_png: expected {1|3, H, W} image, got " +
                                std::to_string(img.ndim()) + " dims");
  const std::size_t ch = img.dim(0), h = img.dim(1), w = img.dim(2);
  detail::FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw FormatError("write_png: cannot open " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw FormatError("write_png: libpng init failed for " + path);
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw FormatError("write_png: libpng info init failed for " + path);
  }
  std::vector<png_byte> row(w * ch);
  std::vector<png_bytep> rows;  // declared before setjmp so cleanup is defined
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw FormatError("write_png: libpng error writing " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
               ch == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c)
      for (std::size_t k = 0; k < ch; ++k)
        row[c * ch + k] = img[(k * h + r) * w + c];
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

inline ByteImage read_png(const std::string& path) {
  detail::FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw FormatError("read_png: cannot open " + path);
  png_byte header[8];
  if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8))
    throw FormatError("read_png: " + path + " is not a PNG file");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw FormatError("read_png: libpng init failed for " + path);
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw FormatError("read_png: libpng info init failed for " + path);
  }
  std::vector<png_byte> interleaved;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("read_png: libpng error reading " + path);
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_packing(png);
  const int color_type = png_get_color_type(png, info);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8)
    png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);

  const std::size_t h = png_get_image_height(png, info);
  const std::size_t w = png_get_image_width(png, info);
  const std::size_t ch = png_get_channels(png, info);
  if (ch != 1 && ch != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("read_png: " + path + " has unsupported channel count " +
                      std::to_string(ch));
  }
  interleaved.assign(h * w * ch, 0);
  rows.resize(h);
  for (std::size_t r = 0; r < h; ++r) rows[r] = interleaved.data() + r * w * ch;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  ByteImage img({ch, h, w});
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c)
      for (std::size_t k = 0; k < ch; ++k)
        img[(k * h + r) * w + c] = interleaved[(r * w + c) * ch + k];
  return img;
}

// ---------------------------------------------------------------------------
// [-1,1] float image <-> byte image
// ---------------------------------------------------------------------------

inline ByteImage image_to_bytes(const Tensor& img) {
  ByteImage out(img.shape());
  for (std::size_t i = 0; i < img.size(); ++i) {
    double v = std::lround((img[i] + 1.0) * 127.5);
    if (v < 0.0) v = 0.0;
    if (v > 255.0) v = 255.0;
    out[i] = static_cast<std::uint8_t>(v);
  }
  return out;
}

inline Tensor bytes_to_image(const ByteImage& b) {
  Tensor out(b.shape());
  for (std::size_t i = 0; i < b.size(); ++i)
    out[i] = static_cast<double>(b[i]) / 255.0 * 2.0 - 1.0;
  return out;
}

// Binary {0,1} mask <-> 0/255 grayscale bytes. Reading binarizes at 128 so
// externally produced antialiased masks degrade predictably.

inline ByteImage mask_to_bytes(const Tensor& mask) {
  ByteImage out({std::size_t{1}, mask.dim(0), mask.dim(1)});
  for (std::size_t i = 0; i < mask.size(); ++i)
    out[i] = mask[i] != 0.0 ? 255 : 0;
  return out;
}

inline Tensor bytes_to_mask(const ByteImage& b) {
  if (b.dim(0) != 1)
    throw FormatError("mask image must be grayscale, got " +
                      std::to_string(b.dim(0)) + " channels");
  Tensor out({b.dim(1), b.dim(2)});
  for (std::size_t i = 0; i < b.size(); ++i) out[i] = b[i] >= 128 ? 1.0 : 0.0;
  return out;
}

}  // namespace ecgan
