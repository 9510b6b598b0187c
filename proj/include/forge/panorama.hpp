#pragma once

#include <cmath>
#include <numbers>
#include <type_traits>
#include <vector>

#include "forge/camera.hpp"
#include "forge/error.hpp"
#include "forge/image.hpp"

namespace forge {

// A 360-degree central-cylindrical panorama: column is linear in azimuth
// (azimuth 0 at the center column, increasing to the right) and row is
// linear in tan(elevation) with square pixels, so the cylinder radius in
// pixels is width / 2pi and elevation 0 lies on the center row.
struct CylindricalPanorama {
  int width = 0;
  int height = 0;

  double radius() const { return width / (2.0 * std::numbers::pi); }

  // Continuous pixel coordinates of a viewing direction.
  Vec2 to_pixel(double azimuth_rad, double tan_elevation) const {
    return {0.5 * width + azimuth_rad * radius(), 0.5 * height - tan_elevation * radius()};
  }
};

template <typename T>
struct PerspectiveView {
  Image<T> image;
  double yaw_offset_deg = 0.0;  // clockwise from the panorama center direction
  Intrinsics intrinsics;
};

// Panorama position seen by continuous pixel (x, y) of a sub-view with the
// given intrinsics and clockwise yaw offset.
inline Vec2 subview_to_panorama(double x, double y, const Intrinsics& k, double yaw_offset_rad,
                                const CylindricalPanorama& pano) {
  const double xn = (x - k.cx) / k.fx;
  const double yn = (y - k.cy) / k.fy;
  double az = yaw_offset_rad + std::atan(xn);
  az = std::remainder(az, 2.0 * std::numbers::pi);  // (-pi, pi]
  const double tan_el = -yn / std::sqrt(1.0 + xn * xn);
  return pano.to_pixel(az, tan_el);
}

namespace detail {

// Bilinear sample wrapping horizontally, clamping vertically.
template <typename T>
void sample_wrap_x(const Image<T>& img, double x, double y, std::span<double> out) {
  const double fx = x - 0.5, fy = y - 0.5;
  const double x0f = std::floor(fx), y0f = std::floor(fy);
  const double ax = fx - x0f, ay = fy - y0f;
  const int w = img.width(), h = img.height();
  const auto wrap = [w](long i) { return static_cast<int>(((i % w) + w) % w); };
  const int x0 = wrap(static_cast<long>(x0f));
  const int x1 = wrap(static_cast<long>(x0f) + 1);
  const int y0 = std::clamp(static_cast<int>(y0f), 0, h - 1);
  const int y1 = std::clamp(static_cast<int>(y0f) + 1, 0, h - 1);
  for (int c = 0; c < img.channels(); ++c) {
    const double top = (1 - ax) * img.at(x0, y0, c) + ax * img.at(x1, y0, c);
    const double bot = (1 - ax) * img.at(x0, y1, c) + ax * img.at(x1, y1, c);
    out[c] = (1 - ay) * top + ay * bot;
  }
}

}  // namespace detail

// Split a cylindrical panorama into `count` pinhole views at yaw offsets
// i * 360 / count. Output width defaults to the panorama's pixel density.
template <typename T>
std::vector<PerspectiveView<T>> cylindrical_to_perspective(const Image<T>& pano, int count, double hfov_deg,
                                                           double vfov_deg, int out_width = 0) {
  if (count < 4 || count > 6) throw InvalidArgument("cylindrical_to_perspective: view count must be in 4..6");
  if (!(hfov_deg > 0.0 && hfov_deg < 180.0) || !(vfov_deg > 0.0 && vfov_deg < 180.0))
    throw InvalidArgument("cylindrical_to_perspective: field of view must be in (0, 180) degrees");
  if (pano.empty()) throw InvalidArgument("cylindrical_to_perspective: empty panorama");

  const CylindricalPanorama geom{pano.width(), pano.height()};
  const int w = out_width > 0 ? out_width : std::max(1, static_cast<int>(std::lround(pano.width() * hfov_deg / 360.0)));
  const double f = 0.5 * w / std::tan(deg2rad(0.5 * hfov_deg));
  const int h = std::max(1, static_cast<int>(std::lround(2.0 * f * std::tan(deg2rad(0.5 * vfov_deg)))));
  const Intrinsics k{f, f, 0.5 * w, 0.5 * h, w, h};

  std::vector<PerspectiveView<T>> views;
  std::vector<double> v(static_cast<std::size_t>(pano.channels()));
  for (int i = 0; i < count; ++i) {
    const double yaw_deg = i * 360.0 / count;
    PerspectiveView<T> view{Image<T>(w, h, pano.channels()), yaw_deg, k};
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const Vec2 p = subview_to_panorama(x + 0.5, y + 0.5, k, deg2rad(yaw_deg), geom);
        detail::sample_wrap_x(pano, p.x(), p.y(), v);
        for (int c = 0; c < pano.channels(); ++c) {
          if constexpr (std::is_floating_point_v<T>) {
            view.image.at(x, y, c) = static_cast<T>(v[c]);
          } else {
            view.image.at(x, y, c) = static_cast<T>(std::lround(v[c]));
          }
        }
      }
    }
    views.push_back(std::move(view));
  }
  return views;
}

}  // namespace forge
