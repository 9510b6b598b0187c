#pragma once

#include <png.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "forge/error.hpp"
#include "forge/image.hpp"

namespace forge {

// Raw decoded PNG: samples widened to 16 bits, no gamma or color conversion.
struct DecodedPng {
  int bit_depth = 0;  // 8 or 16
  Image<std::uint16_t> samples;
};

namespace detail {

struct PngReadBuffer {
  const std::uint8_t* data;
  std::size_t size;
  std::size_t offset;
};

inline void png_read_mem(png_structp png, png_bytep out, png_size_t len) {
  auto* buf = static_cast<PngReadBuffer*>(png_get_io_ptr(png));
  if (buf->offset + len > buf->size) png_error(png, "truncated PNG stream");
  std::memcpy(out, buf->data + buf->offset, len);
  buf->offset += len;
}

inline void png_write_mem(png_structp png, png_bytep in, png_size_t len) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), in, in + len);
}

inline void png_flush_noop(png_structp) {}

inline void png_error_throw(png_structp, png_const_charp msg) { throw IoError(std::string("PNG: ") + msg); }
inline void png_warning_ignore(png_structp, png_const_charp) {}

template <typename T>
std::vector<std::uint8_t> encode_png_impl(const Image<T>& img, int bit_depth) {
  int color_type = 0;
  switch (img.channels()) {
    case 1: color_type = PNG_COLOR_TYPE_GRAY; break;
    case 3: color_type = PNG_COLOR_TYPE_RGB; break;
    case 4: color_type = PNG_COLOR_TYPE_RGBA; break;
    default: throw InvalidArgument("encode_png: unsupported channel count");
  }
  if (img.empty()) throw InvalidArgument("encode_png: empty image");
  std::vector<std::uint8_t> out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_throw, png_warning_ignore);
  png_infop info = png_create_info_struct(png);
  try {
    png_set_write_fn(png, &out, png_write_mem, png_flush_noop);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width()), static_cast<png_uint_32>(img.height()), bit_depth,
                 color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_set_compression_level(png, 6);
    png_write_info(png, info);
    const std::size_t row_samples = static_cast<std::size_t>(img.width()) * img.channels();
    std::vector<std::uint8_t> row(row_samples * (bit_depth / 8));
    for (int y = 0; y < img.height(); ++y) {
      auto src = img.row(y);
      if (bit_depth == 8) {
        for (std::size_t i = 0; i < row_samples; ++i) row[i] = static_cast<std::uint8_t>(src[i]);
      } else {
        for (std::size_t i = 0; i < row_samples; ++i) {
          const auto v = static_cast<std::uint16_t>(src[i]);
          row[2 * i] = static_cast<std::uint8_t>(v >> 8);  // PNG is big-endian
          row[2 * i + 1] = static_cast<std::uint8_t>(v & 0xFF);
        }
      }
      png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
  } catch (...) {
    png_destroy_write_struct(&png, &info);
    throw;
  }
  png_destroy_write_struct(&png, &info);
  return out;
}

}  // namespace detail

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline DecodedPng decode_png(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) throw IoError("not a PNG stream");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, detail::png_error_throw,
                                           detail::png_warning_ignore);
  png_infop info = png_create_info_struct(png);
  DecodedPng result;
  try {
    detail::PngReadBuffer buf{bytes.data(), bytes.size(), 0};
    png_set_read_fn(png, &buf, detail::png_read_mem);
    png_read_info(png, info);
    const int color_type = png_get_color_type(png, info);
    int depth = png_get_bit_depth(png, info);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (depth == 16) png_set_swap(png);  // to host little-endian order
    png_read_update_info(png, info);
    depth = png_get_bit_depth(png, info);
    const int channels = png_get_channels(png, info);
    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    const std::size_t rowbytes = png_get_rowbytes(png, info);
    std::vector<std::uint8_t> raw(rowbytes * h);
    std::vector<png_bytep> rows(h);
    for (int y = 0; y < h; ++y) rows[y] = raw.data() + rowbytes * y;
    png_read_image(png, rows.data());
    result.bit_depth = depth;
    result.samples = Image<std::uint16_t>(w, h, channels);
    auto& dst = result.samples.data();
    for (int y = 0; y < h; ++y) {
      const std::size_t n = static_cast<std::size_t>(w) * channels;
      for (std::size_t i = 0; i < n; ++i) {
        std::uint16_t v = 0;
        if (depth == 16) {
          std::memcpy(&v, rows[y] + 2 * i, 2);
        } else {
          v = rows[y][i];
        }
        dst[static_cast<std::size_t>(y) * n + i] = v;
      }
    }
  } catch (...) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return result;
}

inline std::vector<std::uint8_t> encode_png(const Image<std::uint8_t>& img) { return detail::encode_png_impl(img, 8); }
inline std::vector<std::uint8_t> encode_png(const Image<std::uint16_t>& img) {
  return detail::encode_png_impl(img, 16);
}

// 8-bit RGB. Gray inputs are broadcast; an alpha channel is dropped.
inline RgbImage decode_rgb8(const std::vector<std::uint8_t>& bytes) {
  const DecodedPng d = decode_png(bytes);
  if (d.bit_depth != 8) throw IoError("expected an 8-bit PNG");
  const auto& s = d.samples;
  RgbImage out(s.width(), s.height(), 3);
  for (int y = 0; y < s.height(); ++y)
    for (int x = 0; x < s.width(); ++x)
      for (int c = 0; c < 3; ++c) {
        const int src_c = s.channels() >= 3 ? c : 0;
        out.at(x, y, c) = static_cast<std::uint8_t>(s.at(x, y, src_c));
      }
  return out;
}

inline GrayImage decode_gray8(const std::vector<std::uint8_t>& bytes) {
  const DecodedPng d = decode_png(bytes);
  if (d.bit_depth != 8 || d.samples.channels() != 1) throw IoError("expected an 8-bit grayscale PNG");
  GrayImage out(d.samples.width(), d.samples.height(), 1);
  std::transform(d.samples.data().begin(), d.samples.data().end(), out.data().begin(),
                 [](std::uint16_t v) { return static_cast<std::uint8_t>(v); });
  return out;
}

inline Gray16Image decode_gray16(const std::vector<std::uint8_t>& bytes) {
  DecodedPng d = decode_png(bytes);
  if (d.bit_depth != 16 || d.samples.channels() != 1) throw IoError("expected a 16-bit grayscale PNG");
  return std::move(d.samples);
}

inline RgbImage read_rgb8(const std::filesystem::path& p) { return decode_rgb8(read_file_bytes(p)); }
inline GrayImage read_gray8(const std::filesystem::path& p) { return decode_gray8(read_file_bytes(p)); }
inline Gray16Image read_gray16(const std::filesystem::path& p) { return decode_gray16(read_file_bytes(p)); }

inline void write_png(const std::filesystem::path& p, const Image<std::uint8_t>& img) {
  write_file_bytes(p, encode_png(img));
}
inline void write_png(const std::filesystem::path& p, const Image<std::uint16_t>& img) {
  write_file_bytes(p, encode_png(img));
}

}  // namespace forge
