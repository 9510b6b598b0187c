// Shared fixtures and independent oracles for the test suite.
#pragma once

#include <cstdlib>
#include <filesystem>
#include <limits>
#include <optional>
#include <random>
#include <string>

#include "forge/camera.hpp"
#include "forge/image.hpp"
#include "forge/raster.hpp"
#include "forge/terrain.hpp"

namespace forge::testkit {

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("forge_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline HeightField flat_field(int w, int h, double cell, double z = 0.0) {
  HeightField hf;
  hf.width = w;
  hf.height = h;
  hf.cell_size = cell;
  hf.origin = {46.6, 8.0, 0.0};
  hf.z.assign(static_cast<std::size_t>(w) * h, z);
  return hf;
}

inline HeightField random_field(int w, int h, double cell, double amplitude, std::mt19937_64& rng) {
  HeightField hf = flat_field(w, h, cell);
  std::uniform_real_distribution<double> u(0.0, amplitude);
  for (auto& z : hf.z) z = u(rng);
  return hf;
}

struct RayHit {
  FaceId face;
  double t;  // along the unnormalized ray
};

// Möller–Trumbore intersection, two-sided.
inline std::optional<double> ray_triangle(const Vec3& o, const Vec3& d, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 e1 = b - a, e2 = c - a;
  const Vec3 p = d.cross(e2);
  const double det = e1.dot(p);
  if (std::abs(det) < 1e-14) return std::nullopt;
  const double inv = 1.0 / det;
  const Vec3 s = o - a;
  const double u = s.dot(p) * inv;
  if (u < 0.0 || u > 1.0) return std::nullopt;
  const Vec3 q = s.cross(e1);
  const double v = d.dot(q) * inv;
  if (v < 0.0 || u + v > 1.0) return std::nullopt;
  const double t = e2.dot(q) * inv;
  if (t <= 0.0) return std::nullopt;
  return t;
}

// Nearest face hit by the pixel-center ray, honoring backface culling and
// the near plane; depth is the camera-frame z of the hit.
inline std::optional<std::pair<FaceId, double>> cast_pixel(const TerrainMesh& mesh, const Intrinsics& k,
                                                            const Pose& pose, int px, int py, double near,
                                                            bool cull) {
  const Mat3 r = pose.rotation();
  const Vec3 dir_cam((px + 0.5 - k.cx) / k.fx, (py + 0.5 - k.cy) / k.fy, 1.0);
  const Vec3 dir = r.transpose() * dir_cam;  // z component in camera frame is 1
  std::optional<std::pair<FaceId, double>> best;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const auto& fc = mesh.faces[f];
    const Vec3 &a = mesh.vertices[fc[0]], &b = mesh.vertices[fc[1]], &c = mesh.vertices[fc[2]];
    if (cull) {
      const Vec3 n = (b - a).cross(c - a);
      if (n.dot(a - pose.position) >= 0.0) continue;
    }
    const auto t = ray_triangle(pose.position, dir, a, b, c);
    if (!t || *t < near) continue;
    if (!best || *t < best->second) best = std::pair{static_cast<FaceId>(f), *t};
  }
  return best;
}

inline RgbImage random_rgb(int w, int h, std::mt19937_64& rng) {
  RgbImage img(w, h, 3);
  std::uniform_int_distribution<int> d(0, 255);
  for (auto& v : img.data()) v = static_cast<std::uint8_t>(d(rng));
  return img;
}

}  // namespace forge::testkit
