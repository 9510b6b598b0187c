#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "forge/error.hpp"

namespace forge {

// Row-major, channel-interleaved raster. Row 0 is the top of the image.
template <typename T>
class Image {
 public:
  using value_type = T;

  Image() = default;
  Image(int width, int height, int channels, T fill = T{})
      : width_(width), height_(height), channels_(channels) {
    if (width < 0 || height < 0 || channels <= 0)
      throw InvalidArgument("Image: negative size or zero channels");
    data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  bool empty() const { return data_.empty(); }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }

  bool same_shape(const Image& o) const {
    return width_ == o.width_ && height_ == o.height_ && channels_ == o.channels_;
  }
  template <typename U>
  bool same_size(const Image<U>& o) const {
    return width_ == o.width() && height_ == o.height();
  }

  T& at(int x, int y, int c = 0) { return data_[index(x, y, c)]; }
  const T& at(int x, int y, int c = 0) const { return data_[index(x, y, c)]; }

  std::span<T> pixel(int x, int y) {
    return {data_.data() + index(x, y, 0), static_cast<std::size_t>(channels_)};
  }
  std::span<const T> pixel(int x, int y) const {
    return {data_.data() + index(x, y, 0), static_cast<std::size_t>(channels_)};
  }
  std::span<T> row(int y) {
    return {data_.data() + index(0, y, 0), static_cast<std::size_t>(width_) * channels_};
  }
  std::span<const T> row(int y) const {
    return {data_.data() + index(0, y, 0), static_cast<std::size_t>(width_) * channels_};
  }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool operator==(const Image&) const = default;

 private:
  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<T> data_;
};

using RgbImage = Image<std::uint8_t>;   // 3 channels
using GrayImage = Image<std::uint8_t>;  // 1 channel
using Gray16Image = Image<std::uint16_t>;
using FloatImage = Image<float>;

using Rgb = std::array<std::uint8_t, 3>;

inline Rgb get_rgb(const RgbImage& img, int x, int y) {
  auto p = img.pixel(x, y);
  return {p[0], p[1], p[2]};
}
inline void set_rgb(RgbImage& img, int x, int y, Rgb c) {
  auto p = img.pixel(x, y);
  p[0] = c[0];
  p[1] = c[1];
  p[2] = c[2];
}

inline std::uint8_t to_u8(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

// Bilinear sample at continuous pixel coordinates where pixel (i, j) covers
// [i, i+1) x [j, j+1), so its center is (i + 0.5, j + 0.5). Edges clamp.
// `out` receives one value per channel.
template <typename T>
void sample_bilinear(const Image<T>& img, double x, double y, std::span<double> out) {
  const double fx = x - 0.5;
  const double fy = y - 0.5;
  const double x0f = std::floor(fx);
  const double y0f = std::floor(fy);
  const double ax = fx - x0f;
  const double ay = fy - y0f;
  const int w = img.width();
  const int h = img.height();
  const int x0 = std::clamp(static_cast<int>(x0f), 0, w - 1);
  const int x1 = std::clamp(static_cast<int>(x0f) + 1, 0, w - 1);
  const int y0 = std::clamp(static_cast<int>(y0f), 0, h - 1);
  const int y1 = std::clamp(static_cast<int>(y0f) + 1, 0, h - 1);
  for (int c = 0; c < img.channels(); ++c) {
    const double top = (1.0 - ax) * img.at(x0, y0, c) + ax * img.at(x1, y0, c);
    const double bot = (1.0 - ax) * img.at(x0, y1, c) + ax * img.at(x1, y1, c);
    out[c] = (1.0 - ay) * top + ay * bot;
  }
}

inline Rgb sample_rgb(const RgbImage& img, double x, double y) {
  std::array<double, 3> v{};
  sample_bilinear(img, x, y, v);
  return {to_u8(v[0]), to_u8(v[1]), to_u8(v[2])};
}

// Bilinear resize by sampling at destination pixel centers.
template <typename T>
Image<T> resize_bilinear(const Image<T>& src, int width, int height) {
  Image<T> dst(width, height, src.channels());
  std::vector<double> v(static_cast<std::size_t>(src.channels()));
  const double sx = static_cast<double>(src.width()) / width;
  const double sy = static_cast<double>(src.height()) / height;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      sample_bilinear(src, (x + 0.5) * sx, (y + 0.5) * sy, v);
      for (int c = 0; c < src.channels(); ++c) {
        if constexpr (std::is_floating_point_v<T>) {
          dst.at(x, y, c) = static_cast<T>(v[c]);
        } else {
          dst.at(x, y, c) = static_cast<T>(std::lround(v[c]));
        }
      }
    }
  }
  return dst;
}

}  // namespace forge
