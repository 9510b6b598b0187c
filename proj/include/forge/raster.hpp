#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <limits>
#include <optional>
#include <vector>

#include "forge/camera.hpp"
#include "forge/error.hpp"
#include "forge/image.hpp"
#include "forge/image_io.hpp"
#include "forge/parallel.hpp"
#include "forge/terrain.hpp"
#include "forge/texture.hpp"

namespace forge {

using FaceId = std::uint32_t;
inline constexpr FaceId kNoFace = 0xFFFFFFFFu;

struct RenderSettings {
  double near = 0.5;  // meters
  double far = 1e6;
  Rgb background = kSentinel;
  bool cull_backfaces = true;
  // Show unpainted texels as the background color instead of the baked
  // base color. The inpainting loop renders this way so that holes in the
  // paint are detected by background_mask.
  bool unpainted_as_background = false;
  unsigned threads = 0;  // 0 = hardware concurrency
  int tile_size = 32;

  void validate() const {
    if (!(near > 0.0) || !(far > near)) throw InvalidArgument("RenderSettings: need 0 < near < far");
    if (tile_size <= 0) throw InvalidArgument("RenderSettings: tile_size must be positive");
  }
};

// Output of one render: color, camera-frame depth, and front-most face id.
// Uncovered pixels hold +inf depth, kNoFace and the background color.
struct RenderBuffers {
  RgbImage rgb;
  FloatImage depth;
  Image<FaceId> face_index;

  int width() const { return depth.width(); }
  int height() const { return depth.height(); }
  bool covered(int x, int y) const { return face_index.at(x, y) != kNoFace; }

  bool operator==(const RenderBuffers&) const = default;
};

namespace detail {

struct ClipVertex {
  Vec3 cam;
  Vec2 uv;
};

struct ScreenTri {
  FaceId face;
  std::array<Vec2, 3> p;        // screen position, pixel units
  std::array<double, 3> inv_z;  // 1 / camera z
  std::array<Vec2, 3> uv_over_z;
  double area;                  // > 0 after orientation fix
  int x0, x1, y0, y1;           // inclusive pixel bounds
};

// Edge function evaluated with the endpoints in a canonical order so that
// two triangles sharing an edge get exactly negated values.
inline double edge_fn(const Vec2& a, const Vec2& b, double px, double py) {
  const bool swap = (b.x() < a.x()) || (b.x() == a.x() && b.y() < a.y());
  const Vec2& s = swap ? b : a;
  const Vec2& e = swap ? a : b;
  const double v = (e.x() - s.x()) * (py - s.y()) - (e.y() - s.y()) * (px - s.x());
  return swap ? -v : v;
}

// Top-left rule for triangles with positive edge_fn area (clockwise on a
// y-down screen): top edges run rightward horizontally, left edges upward.
inline bool is_top_left(const Vec2& a, const Vec2& b) {
  const double dy = b.y() - a.y();
  const double dx = b.x() - a.x();
  return (dy == 0.0 && dx > 0.0) || dy < 0.0;
}

inline bool covers(double w, bool top_left) { return w > 0.0 || (w == 0.0 && top_left); }

// Clip a camera-space triangle to z >= near. Intersections are computed
// from the lexicographically smaller endpoint so shared edges clip
// identically in neighboring faces.
inline std::vector<ClipVertex> clip_near(const std::array<ClipVertex, 3>& tri, double near) {
  std::vector<ClipVertex> out;
  out.reserve(4);
  const auto less = [](const Vec3& a, const Vec3& b) {
    return std::lexicographical_compare(a.data(), a.data() + 3, b.data(), b.data() + 3);
  };
  for (int i = 0; i < 3; ++i) {
    const ClipVertex& a = tri[i];
    const ClipVertex& b = tri[(i + 1) % 3];
    const bool a_in = a.cam.z() >= near;
    const bool b_in = b.cam.z() >= near;
    if (a_in) out.push_back(a);
    if (a_in != b_in) {
      const bool a_first = less(a.cam, b.cam);
      const ClipVertex& s = a_first ? a : b;
      const ClipVertex& e = a_first ? b : a;
      const double t = (near - s.cam.z()) / (e.cam.z() - s.cam.z());
      ClipVertex c{s.cam + t * (e.cam - s.cam), s.uv + t * (e.uv - s.uv)};
      c.cam.z() = near;
      out.push_back(c);
    }
  }
  return out;
}

}  // namespace detail

// Bilinear texture lookup at continuous texel coordinates. Taps use the
// painted color or, for unpainted texels, the base color; when
// `unpainted_as_background` is set any contributing unpainted tap yields
// std::nullopt instead.
inline std::optional<Rgb> sample_texture(const PaintedTexture& tex, double tx, double ty,
                                         bool unpainted_as_background) {
  const double fx = tx - 0.5, fy = ty - 0.5;
  const double x0f = std::floor(fx), y0f = std::floor(fy);
  const double ax = fx - x0f, ay = fy - y0f;
  const int w = tex.width(), h = tex.height();
  const int xs[2] = {std::clamp(static_cast<int>(x0f), 0, w - 1), std::clamp(static_cast<int>(x0f) + 1, 0, w - 1)};
  const int ys[2] = {std::clamp(static_cast<int>(y0f), 0, h - 1), std::clamp(static_cast<int>(y0f) + 1, 0, h - 1)};
  const double wx[2] = {1.0 - ax, ax};
  const double wy[2] = {1.0 - ay, ay};
  std::array<double, 3> acc{};
  for (int j = 0; j < 2; ++j) {
    for (int i = 0; i < 2; ++i) {
      const double wgt = wx[i] * wy[j];
      if (wgt == 0.0) continue;
      const bool painted = tex.painted(xs[i], ys[j]);
      if (!painted && unpainted_as_background) return std::nullopt;
      const Rgb c = painted ? get_rgb(tex.color, xs[i], ys[j]) : get_rgb(tex.base, xs[i], ys[j]);
      for (int k = 0; k < 3; ++k) acc[k] += wgt * c[k];
    }
  }
  return Rgb{to_u8(acc[0]), to_u8(acc[1]), to_u8(acc[2])};
}

// Replace an exact sentinel color with its nearest non-sentinel neighbor.
inline Rgb avoid_sentinel(Rgb c, Rgb sentinel = kSentinel) {
  if (c != sentinel) return c;
  for (auto& ch : c) ch = ch > 0 ? static_cast<std::uint8_t>(ch - 1) : static_cast<std::uint8_t>(1);
  return c;
}

// Rasterize depth and face ids only; rgb stays at the background color.
// Pixel centers are sampled at (x + 0.5, y + 0.5) with a top-left fill
// rule; the nearest camera-frame depth wins and ties keep the lower face id.
inline RenderBuffers render_geometry(const TerrainMesh& mesh, const Intrinsics& k, const Pose& pose,
                                     const RenderSettings& settings = {}, const UvChart* uv = nullptr,
                                     Image<double>* uv_out = nullptr) {
  settings.validate();
  k.validate();
  const int width = k.width, height = k.height;
  RenderBuffers buf;
  buf.rgb = RgbImage(width, height, 3);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) set_rgb(buf.rgb, x, y, settings.background);
  buf.depth = FloatImage(width, height, 1, std::numeric_limits<float>::infinity());
  buf.face_index = Image<FaceId>(width, height, 1, kNoFace);
  if (uv_out) *uv_out = Image<double>(width, height, 2, 0.0);

  const Mat3 rot = pose.rotation();
  std::vector<Vec3> cam(mesh.vertices.size());
  for (std::size_t i = 0; i < cam.size(); ++i) cam[i] = rot * (mesh.vertices[i] - pose.position);

  std::vector<detail::ScreenTri> tris;
  tris.reserve(mesh.faces.size());
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const auto& face = mesh.faces[f];
    const Vec3& a = cam[face[0]];
    const Vec3& b = cam[face[1]];
    const Vec3& c = cam[face[2]];
    if (a.z() < settings.near && b.z() < settings.near && c.z() < settings.near) continue;
    if (a.z() > settings.far && b.z() > settings.far && c.z() > settings.far) continue;
    if (settings.cull_backfaces && (b - a).cross(c - a).dot(a) >= 0.0) continue;

    std::array<detail::ClipVertex, 3> in;
    for (int i = 0; i < 3; ++i) in[i] = {cam[face[i]], uv ? uv->uv[face[i]] : Vec2::Zero()};
    const auto poly = detail::clip_near(in, settings.near);
    for (std::size_t i = 1; i + 1 < poly.size(); ++i) {
      detail::ScreenTri t;
      t.face = static_cast<FaceId>(f);
      const detail::ClipVertex* vs[3] = {&poly[0], &poly[i], &poly[i + 1]};
      for (int j = 0; j < 3; ++j) {
        const Vec3& p = vs[j]->cam;
        t.p[j] = {k.cx + k.fx * p.x() / p.z(), k.cy + k.fy * p.y() / p.z()};
        t.inv_z[j] = 1.0 / p.z();
        t.uv_over_z[j] = vs[j]->uv * t.inv_z[j];
      }
      t.area = detail::edge_fn(t.p[0], t.p[1], t.p[2].x(), t.p[2].y());
      if (t.area == 0.0 || !std::isfinite(t.area)) continue;
      if (t.area < 0.0) {
        std::swap(t.p[1], t.p[2]);
        std::swap(t.inv_z[1], t.inv_z[2]);
        std::swap(t.uv_over_z[1], t.uv_over_z[2]);
        t.area = -t.area;
      }
      const double minx = std::min({t.p[0].x(), t.p[1].x(), t.p[2].x()});
      const double maxx = std::max({t.p[0].x(), t.p[1].x(), t.p[2].x()});
      const double miny = std::min({t.p[0].y(), t.p[1].y(), t.p[2].y()});
      const double maxy = std::max({t.p[0].y(), t.p[1].y(), t.p[2].y()});
      if (maxx < 0.0 || maxy < 0.0 || minx > width || miny > height) continue;
      t.x0 = std::max(0, static_cast<int>(std::ceil(minx - 0.5)));
      t.x1 = std::min(width - 1, static_cast<int>(std::floor(maxx - 0.5)));
      t.y0 = std::max(0, static_cast<int>(std::ceil(miny - 0.5)));
      t.y1 = std::min(height - 1, static_cast<int>(std::floor(maxy - 0.5)));
      if (t.x0 > t.x1 || t.y0 > t.y1) continue;
      tris.push_back(t);
    }
  }

  const int ts = settings.tile_size;
  const int tiles_x = (width + ts - 1) / ts;
  const int tiles_y = (height + ts - 1) / ts;
  std::vector<std::vector<std::uint32_t>> bins(static_cast<std::size_t>(tiles_x) * tiles_y);
  for (std::size_t i = 0; i < tris.size(); ++i) {
    const auto& t = tris[i];
    for (int ty = t.y0 / ts; ty <= t.y1 / ts; ++ty)
      for (int tx = t.x0 / ts; tx <= t.x1 / ts; ++tx)
        bins[static_cast<std::size_t>(ty) * tiles_x + tx].push_back(static_cast<std::uint32_t>(i));
  }

  const float far_f = static_cast<float>(settings.far);
  parallel_for(
      bins.size(),
      [&](std::size_t tile) {
        const int tx = static_cast<int>(tile) % tiles_x;
        const int ty = static_cast<int>(tile) / tiles_x;
        const int bx0 = tx * ts, bx1 = std::min(width, bx0 + ts) - 1;
        const int by0 = ty * ts, by1 = std::min(height, by0 + ts) - 1;
        for (auto idx : bins[tile]) {
          const auto& t = tris[idx];
          const bool tl0 = detail::is_top_left(t.p[1], t.p[2]);
          const bool tl1 = detail::is_top_left(t.p[2], t.p[0]);
          const bool tl2 = detail::is_top_left(t.p[0], t.p[1]);
          for (int y = std::max(t.y0, by0); y <= std::min(t.y1, by1); ++y) {
            const double py = y + 0.5;
            for (int x = std::max(t.x0, bx0); x <= std::min(t.x1, bx1); ++x) {
              const double px = x + 0.5;
              const double w0 = detail::edge_fn(t.p[1], t.p[2], px, py);
              if (!detail::covers(w0, tl0)) continue;
              const double w1 = detail::edge_fn(t.p[2], t.p[0], px, py);
              if (!detail::covers(w1, tl1)) continue;
              const double w2 = detail::edge_fn(t.p[0], t.p[1], px, py);
              if (!detail::covers(w2, tl2)) continue;
              const double b0 = w0 / t.area, b1 = w1 / t.area, b2 = w2 / t.area;
              const double inv_z = b0 * t.inv_z[0] + b1 * t.inv_z[1] + b2 * t.inv_z[2];
              const double z = 1.0 / inv_z;
              const float zf = static_cast<float>(z);
              if (!(zf < buf.depth.at(x, y)) || zf > far_f) continue;
              buf.depth.at(x, y) = zf;
              buf.face_index.at(x, y) = t.face;
              if (uv_out) {
                const Vec2 uvp = (b0 * t.uv_over_z[0] + b1 * t.uv_over_z[1] + b2 * t.uv_over_z[2]) * z;
                uv_out->at(x, y, 0) = uvp.x();
                uv_out->at(x, y, 1) = uvp.y();
              }
            }
          }
        }
      },
      settings.threads);
  return buf;
}

// Full render: geometry plus perspective-correct textured color.
inline RenderBuffers render(const TerrainMesh& mesh, const UvChart& uv, const PaintedTexture& tex,
                            const Intrinsics& k, const Pose& pose, const RenderSettings& settings = {}) {
  if (uv.uv.size() != mesh.vertices.size()) throw InvalidArgument("render: uv chart does not match mesh");
  Image<double> uv_img;
  RenderBuffers buf = render_geometry(mesh, k, pose, settings, &uv, &uv_img);
  parallel_for(
      static_cast<std::size_t>(buf.height()),
      [&](std::size_t row) {
        const int y = static_cast<int>(row);
        for (int x = 0; x < buf.width(); ++x) {
          if (!buf.covered(x, y)) continue;
          const Vec2 t = uv.to_texel({uv_img.at(x, y, 0), uv_img.at(x, y, 1)});
          const auto c = sample_texture(tex, t.x(), t.y(), settings.unpainted_as_background);
          set_rgb(buf.rgb, x, y, c ? avoid_sentinel(*c, settings.background) : settings.background);
        }
      },
      settings.threads);
  return buf;
}

// Distinct face ids present in the buffers, ascending.
inline std::vector<FaceId> visible_faces(const RenderBuffers& buf) {
  std::vector<char> seen;
  for (FaceId f : buf.face_index.data()) {
    if (f == kNoFace) continue;
    if (f >= seen.size()) seen.resize(static_cast<std::size_t>(f) + 1, 0);
    seen[f] = 1;
  }
  std::vector<FaceId> out;
  for (std::size_t i = 0; i < seen.size(); ++i)
    if (seen[i]) out.push_back(static_cast<FaceId>(i));
  return out;
}

// Intersect the ray through pixel (u, v) with the plane of the face stored
// at that pixel. Returns nullopt on uncovered pixels.
inline std::optional<Vec3> unproject_pixel(const RenderBuffers& buf, const TerrainMesh& mesh, const Intrinsics& k,
                                           const Pose& pose, double u, double v) {
  const int x = static_cast<int>(std::floor(u));
  const int y = static_cast<int>(std::floor(v));
  if (x < 0 || y < 0 || x >= buf.width() || y >= buf.height()) return std::nullopt;
  const FaceId f = buf.face_index.at(x, y);
  if (f == kNoFace) return std::nullopt;
  const auto& tri = mesh.faces[f];
  const Vec3& a = mesh.vertices[tri[0]];
  const Vec3 n = (mesh.vertices[tri[1]] - a).cross(mesh.vertices[tri[2]] - a);
  const Vec3 dir = pixel_ray(u, v, k, pose);
  const double denom = n.dot(dir);
  if (denom == 0.0) return std::nullopt;
  const double t = n.dot(a - pose.position) / denom;
  if (!(t > 0.0)) return std::nullopt;
  return pose.position + t * dir;
}

// ---- depth export ----------------------------------------------------------

inline constexpr char kDepthMagic[8] = {'F', 'R', 'G', 'D', 'E', 'P', 'T', 'H'};

// Raw little-endian float32 grid: 8-byte magic, uint32 width, uint32 height,
// then row-major samples (+inf where nothing was hit).
inline std::vector<std::uint8_t> encode_depth_raw(const FloatImage& depth) {
  static_assert(std::endian::native == std::endian::little, "depth export assumes a little-endian host");
  std::vector<std::uint8_t> out(16 + depth.pixel_count() * 4);
  std::memcpy(out.data(), kDepthMagic, 8);
  const auto w = static_cast<std::uint32_t>(depth.width());
  const auto h = static_cast<std::uint32_t>(depth.height());
  std::memcpy(out.data() + 8, &w, 4);
  std::memcpy(out.data() + 12, &h, 4);
  std::memcpy(out.data() + 16, depth.data().data(), depth.pixel_count() * 4);
  return out;
}

inline FloatImage decode_depth_raw(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kDepthMagic, 8) != 0) throw IoError("not a raw depth file");
  std::uint32_t w = 0, h = 0;
  std::memcpy(&w, bytes.data() + 8, 4);
  std::memcpy(&h, bytes.data() + 12, 4);
  if (bytes.size() != 16 + static_cast<std::size_t>(w) * h * 4) throw IoError("raw depth file has the wrong size");
  FloatImage img(static_cast<int>(w), static_cast<int>(h), 1);
  std::memcpy(img.data().data(), bytes.data() + 16, img.pixel_count() * 4);
  return img;
}

// Depth quantized as normalized inverse depth: near = 65535, far = 1,
// no geometry = 0. `min_m`/`max_m` are the finite depth range.
struct Depth16 {
  Gray16Image image;
  double min_m = 0.0;
  double max_m = 0.0;
};

inline Depth16 encode_depth16(const FloatImage& depth) {
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (float d : depth.data())
    if (std::isfinite(d)) {
      lo = std::min<double>(lo, d);
      hi = std::max<double>(hi, d);
    }
  Depth16 out{Gray16Image(depth.width(), depth.height(), 1, 0), std::isfinite(lo) ? lo : 0.0, hi};
  if (!std::isfinite(lo)) return out;
  const double inv_near = 1.0 / lo, inv_far = 1.0 / hi;
  for (std::size_t i = 0; i < depth.pixel_count(); ++i) {
    const float d = depth.data()[i];
    if (!std::isfinite(d)) continue;
    const double s = inv_near > inv_far ? (1.0 / d - inv_far) / (inv_near - inv_far) : 1.0;
    out.image.data()[i] = static_cast<std::uint16_t>(std::clamp(1.0 + std::round(s * 65534.0), 1.0, 65535.0));
  }
  return out;
}

// Inverse of encode_depth16 up to quantization; 0 maps back to +inf.
inline FloatImage decode_depth16(const Depth16& d) {
  FloatImage out(d.image.width(), d.image.height(), 1, std::numeric_limits<float>::infinity());
  const double inv_near = d.min_m > 0 ? 1.0 / d.min_m : 0.0;
  const double inv_far = d.max_m > 0 ? 1.0 / d.max_m : 0.0;
  for (std::size_t i = 0; i < out.pixel_count(); ++i) {
    const std::uint16_t q = d.image.data()[i];
    if (q == 0) continue;
    const double s = (q - 1.0) / 65534.0;
    out.data()[i] = static_cast<float>(1.0 / (inv_far + s * (inv_near - inv_far)));
  }
  return out;
}

// Face ids packed as 24-bit RGB holding id + 1 (black = no face).
inline RgbImage encode_face_index(const Image<FaceId>& faces) {
  RgbImage out(faces.width(), faces.height(), 3, 0);
  for (int y = 0; y < faces.height(); ++y)
    for (int x = 0; x < faces.width(); ++x) {
      const FaceId f = faces.at(x, y);
      if (f == kNoFace) continue;
      if (f >= 0xFFFFFFu) throw InvalidArgument("encode_face_index: face id does not fit in 24 bits");
      const std::uint32_t v = f + 1;
      set_rgb(out, x, y, {static_cast<std::uint8_t>(v >> 16), static_cast<std::uint8_t>(v >> 8),
                          static_cast<std::uint8_t>(v)});
    }
  return out;
}

}  // namespace forge
