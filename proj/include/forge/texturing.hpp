#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "forge/camera.hpp"
#include "forge/error.hpp"
#include "forge/hash.hpp"
#include "forge/image.hpp"
#include "forge/image_io.hpp"
#include "forge/parallel.hpp"
#include "forge/pull_push.hpp"
#include "forge/raster.hpp"
#include "forge/terrain.hpp"
#include "forge/texture.hpp"

namespace forge {

// Candidate texel colors from one view. Texels with has_write == 0 are
// ignored by superpose.
struct TexelWrites {
  RgbImage color;
  GrayImage has_write;

  TexelWrites() = default;
  TexelWrites(int w, int h) : color(w, h, 3, 0), has_write(w, h, 1, 0) {}
};

// T_t = m (.) T_{t-1} + (1 - m) (.) T_c, with m the paint mask of `prev`:
// painted texels keep their color, unpainted texels that receive a write
// take it and become painted under `label`.
inline PaintedTexture superpose(const PaintedTexture& prev, const TexelWrites& writes, std::string_view label) {
  if (!prev.color.same_size(writes.color) || !prev.color.same_size(writes.has_write))
    throw InvalidArgument("superpose: dimension mismatch");
  PaintedTexture out = prev;
  const std::uint16_t tag = out.label_index(label);
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x) {
      if (prev.painted(x, y) || !writes.has_write.at(x, y)) continue;
      set_rgb(out.color, x, y, avoid_sentinel(get_rgb(writes.color, x, y)));
      out.mask.at(x, y) = kPainted;
      out.source.at(x, y) = tag;
    }
  return out;
}

struct PaintSettings {
  double depth_abs_tolerance_m = 0.5;
  double depth_rel_tolerance = 1e-3;
  unsigned threads = 0;

  double depth_tolerance(double depth) const { return std::max(depth_abs_tolerance_m, depth_rel_tolerance * depth); }
};

namespace detail {

struct TexelWrite {
  int x, y;
  Rgb color;
};

// Depth at continuous pixel location (u, v), bilinear in inverse depth
// (exact on planar patches). Falls back to the containing pixel when a tap
// is uncovered.
inline double depth_at(const RenderBuffers& b, double u, double v) {
  const int w = b.width(), h = b.height();
  const double fx = u - 0.5, fy = v - 0.5;
  const int x0 = static_cast<int>(std::floor(fx)), y0 = static_cast<int>(std::floor(fy));
  const double ax = fx - x0, ay = fy - y0;
  double inv = 0.0;
  for (int j = 0; j < 2; ++j)
    for (int i = 0; i < 2; ++i) {
      const double d = b.depth.at(std::clamp(x0 + i, 0, w - 1), std::clamp(y0 + j, 0, h - 1));
      if (!std::isfinite(d)) return b.depth.at(std::clamp(static_cast<int>(u), 0, w - 1), std::clamp(static_cast<int>(v), 0, h - 1));
      inv += (i ? ax : 1.0 - ax) * (j ? ay : 1.0 - ay) / d;
    }
  return 1.0 / inv;
}

// Bilinear image sample that ignores taps marked invalid, renormalizing
// the remaining weights. The tap containing (u, v) must be valid.
inline Rgb sample_valid(const RgbImage& img, const ImageMask& invalid, double u, double v) {
  const int w = img.width(), h = img.height();
  const double fx = u - 0.5, fy = v - 0.5;
  const int x0 = static_cast<int>(std::floor(fx)), y0 = static_cast<int>(std::floor(fy));
  const double ax = fx - x0, ay = fy - y0;
  std::array<double, 3> acc{};
  double wsum = 0.0;
  for (int j = 0; j < 2; ++j)
    for (int i = 0; i < 2; ++i) {
      const int x = std::clamp(x0 + i, 0, w - 1), y = std::clamp(y0 + j, 0, h - 1);
      const double wt = (i ? ax : 1.0 - ax) * (j ? ay : 1.0 - ay);
      if (wt == 0.0 || invalid.at(x, y)) continue;
      const Rgb c = get_rgb(img, x, y);
      for (int k = 0; k < 3; ++k) acc[k] += wt * c[k];
      wsum += wt;
    }
  return {to_u8(acc[0] / wsum), to_u8(acc[1] / wsum), to_u8(acc[2] / wsum)};
}

}  // namespace detail

// Project `image` (seen from `pose` with intrinsics `k`) into the atlas.
//
// Each visible face's uv triangle is rasterized over texel centers (same
// fill rule as the renderer). A texel's surface point is projected into the
// image and accepted when it lands in bounds on a valid pixel, passes the
// occlusion test against `buffers` (same face id, or depth within
// tolerance of the buffer at that pixel or interpolated at the projected
// location), and the texel is still unpainted. Ties between faces go to
// the lowest face id. `image_invalid`, when given, marks pixels (value != 0)
// that must not be used, either as the landing pixel or as a bilinear tap.
inline PaintedTexture paint_view(const PaintedTexture& tex, const TerrainMesh& mesh, const UvChart& uv,
                                 const RgbImage& image, const Intrinsics& k, const Pose& pose,
                                 const RenderBuffers& buffers, const ImageMask* image_invalid, std::string_view label,
                                 const PaintSettings& settings = {}) {
  if (image.width() != k.width || image.height() != k.height || image.channels() != 3)
    throw InvalidArgument("paint_view: image size does not match intrinsics");
  if (buffers.width() != k.width || buffers.height() != k.height)
    throw InvalidArgument("paint_view: render buffers do not match intrinsics");
  if (image_invalid && !image_invalid->same_size(image))
    throw InvalidArgument("paint_view: validity mask size does not match image");
  if (uv.tex_width != tex.width() || uv.tex_height != tex.height())
    throw InvalidArgument("paint_view: texture size does not match uv chart");

  const auto faces = visible_faces(buffers);
  const Mat3 rot = pose.rotation();
  std::vector<std::vector<detail::TexelWrite>> per_face(faces.size());

  parallel_for(
      faces.size(),
      [&](std::size_t fi) {
        const FaceId f = faces[fi];
        const auto& tri = mesh.faces[f];
        std::array<Vec2, 3> t;
        for (int i = 0; i < 3; ++i) t[i] = uv.to_texel(uv.uv[tri[i]]);
        std::array<Vec3, 3> world{mesh.vertices[tri[0]], mesh.vertices[tri[1]], mesh.vertices[tri[2]]};
        double area = detail::edge_fn(t[0], t[1], t[2].x(), t[2].y());
        if (area == 0.0) return;
        if (area < 0.0) {
          std::swap(t[1], t[2]);
          std::swap(world[1], world[2]);
          area = -area;
        }
        const bool tl0 = detail::is_top_left(t[1], t[2]);
        const bool tl1 = detail::is_top_left(t[2], t[0]);
        const bool tl2 = detail::is_top_left(t[0], t[1]);
        const int x0 = std::max(0, static_cast<int>(std::ceil(std::min({t[0].x(), t[1].x(), t[2].x()}) - 0.5)));
        const int x1 = std::min(uv.tex_width - 1,
                                static_cast<int>(std::floor(std::max({t[0].x(), t[1].x(), t[2].x()}) - 0.5)));
        const int y0 = std::max(0, static_cast<int>(std::ceil(std::min({t[0].y(), t[1].y(), t[2].y()}) - 0.5)));
        const int y1 = std::min(uv.tex_height - 1,
                                static_cast<int>(std::floor(std::max({t[0].y(), t[1].y(), t[2].y()}) - 0.5)));
        auto& out = per_face[fi];
        for (int y = y0; y <= y1; ++y) {
          const double py = y + 0.5;
          for (int x = x0; x <= x1; ++x) {
            const double px = x + 0.5;
            const double w0 = detail::edge_fn(t[1], t[2], px, py);
            if (!detail::covers(w0, tl0)) continue;
            const double w1 = detail::edge_fn(t[2], t[0], px, py);
            if (!detail::covers(w1, tl1)) continue;
            const double w2 = detail::edge_fn(t[0], t[1], px, py);
            if (!detail::covers(w2, tl2)) continue;
            if (tex.painted(x, y)) continue;
            const Vec3 p = (w0 * world[0] + w1 * world[1] + w2 * world[2]) / area;
            const auto proj = project_camera_point(rot * (p - pose.position), k);
            if (!proj) continue;
            const double u = proj->pixel.x(), v = proj->pixel.y();
            if (!(u >= 0.0 && v >= 0.0 && u < k.width && v < k.height)) continue;
            const int ix = static_cast<int>(u), iy = static_cast<int>(v);
            if (image_invalid && image_invalid->at(ix, iy)) continue;
            const bool same_face = buffers.face_index.at(ix, iy) == f;
            const double tol = settings.depth_tolerance(proj->depth);
            const bool depth_ok = std::abs(buffers.depth.at(ix, iy) - proj->depth) <= tol ||
                                  std::abs(detail::depth_at(buffers, u, v) - proj->depth) <= tol;
            if (!same_face && !depth_ok) continue;
            out.push_back({x, y, image_invalid ? detail::sample_valid(image, *image_invalid, u, v) : sample_rgb(image, u, v)});
          }
        }
      },
      settings.threads);

  TexelWrites writes(tex.width(), tex.height());
  for (const auto& list : per_face)
    for (const auto& w : list) {
      if (writes.has_write.at(w.x, w.y)) continue;  // lower face id already claimed it
      writes.has_write.at(w.x, w.y) = 1;
      set_rgb(writes.color, w.x, w.y, w.color);
    }
  return superpose(tex, writes, label);
}

struct BackgroundTolerance {
  double hue_deg = 10.0;
  double min_saturation = 0.5;
  double min_value = 0.5;
};

struct Hsv {
  double h_deg;  // [0, 360)
  double s;      // [0, 1]
  double v;      // [0, 1]
};

inline Hsv rgb_to_hsv(Rgb c) {
  const double r = c[0] / 255.0, g = c[1] / 255.0, b = c[2] / 255.0;
  const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
  const double d = mx - mn;
  double h = 0.0;
  if (d > 0.0) {
    if (mx == r) {
      h = 60.0 * std::fmod((g - b) / d, 6.0);
    } else if (mx == g) {
      h = 60.0 * ((b - r) / d + 2.0);
    } else {
      h = 60.0 * ((r - g) / d + 4.0);
    }
    if (h < 0.0) h += 360.0;
  }
  return {h, mx > 0.0 ? d / mx : 0.0, mx};
}

// 1 where a pixel matches the background color in HSV space (hue within
// tolerance, saturation and value above their floors), else 0.
inline ImageMask background_mask(const RgbImage& rgb, Rgb sentinel = kSentinel, const BackgroundTolerance& tol = {}) {
  const double ref_h = rgb_to_hsv(sentinel).h_deg;
  ImageMask mask(rgb.width(), rgb.height(), 1, 0);
  for (int y = 0; y < rgb.height(); ++y)
    for (int x = 0; x < rgb.width(); ++x) {
      const Hsv hsv = rgb_to_hsv(get_rgb(rgb, x, y));
      double dh = std::abs(hsv.h_deg - ref_h);
      dh = std::min(dh, 360.0 - dh);
      mask.at(x, y) = (dh <= tol.hue_deg && hsv.s >= tol.min_saturation && hsv.v >= tol.min_value) ? 1 : 0;
    }
  return mask;
}

inline bool mask_any(const ImageMask& m) {
  return std::any_of(m.data().begin(), m.data().end(), [](std::uint8_t v) { return v != 0; });
}

inline constexpr std::string_view kFillLabel = "fill";

// Fill every unpainted texel by pull-push from the painted ones, or from
// the base color when nothing is painted. All texels end up painted.
inline PaintedTexture postprocess_fill(const PaintedTexture& tex) {
  PaintedTexture out = tex;
  if (out.painted_count() == out.color.pixel_count()) return out;
  const std::uint16_t tag = out.label_index(kFillLabel);
  Image<double> work(tex.width(), tex.height(), 3);
  for (std::size_t i = 0; i < tex.color.data().size(); ++i) work.data()[i] = tex.color.data()[i];
  const bool filled = pull_push_fill(work, tex.mask.data());
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x) {
      if (tex.painted(x, y)) continue;
      Rgb c = get_rgb(tex.base, x, y);
      if (filled) c = {to_u8(work.at(x, y, 0)), to_u8(work.at(x, y, 1)), to_u8(work.at(x, y, 2))};
      set_rgb(out.color, x, y, avoid_sentinel(c));
      out.mask.at(x, y) = kPainted;
      out.source.at(x, y) = tag;
    }
  return out;
}

// ---- checkpoints -------------------------------------------------------------

inline std::string texture_stem(std::string_view stage, int t) {
  return "texture_" + std::string(stage) + "_" + std::to_string(t);
}

// Writes texture_{stage}_{t}.png (color), .mask.png (0/255), .source.png
// (16-bit provenance index) and .json (label table).
inline void save_texture_checkpoint(const std::filesystem::path& dir, std::string_view stage, int t,
                                    const PaintedTexture& tex) {
  std::filesystem::create_directories(dir);
  const std::string stem = texture_stem(stage, t);
  GrayImage mask(tex.width(), tex.height(), 1);
  for (std::size_t i = 0; i < mask.pixel_count(); ++i) mask.data()[i] = tex.mask.data()[i] == kPainted ? 255 : 0;
  // Unpainted color texels are stored as the sentinel.
  RgbImage color = tex.color;
  for (int y = 0; y < tex.height(); ++y)
    for (int x = 0; x < tex.width(); ++x)
      if (!tex.painted(x, y)) set_rgb(color, x, y, kSentinel);
  write_png(dir / (stem + ".png"), color);
  write_png(dir / (stem + ".mask.png"), mask);
  write_png(dir / (stem + ".source.png"), tex.source);
  nlohmann::json meta{{"stage", stage}, {"t", t}, {"width", tex.width()}, {"height", tex.height()},
                      {"labels", tex.labels}};
  std::ofstream(dir / (stem + ".json")) << meta.dump(2);
}

inline PaintedTexture load_texture_checkpoint(const std::filesystem::path& dir, std::string_view stage, int t,
                                              const RgbImage& base) {
  const std::string stem = texture_stem(stage, t);
  std::ifstream in(dir / (stem + ".json"));
  if (!in) throw IoError("missing checkpoint " + (dir / (stem + ".json")).string());
  nlohmann::json meta;
  in >> meta;
  PaintedTexture tex(base);
  RgbImage color = read_rgb8(dir / (stem + ".png"));
  GrayImage mask = read_gray8(dir / (stem + ".mask.png"));
  Gray16Image source = read_gray16(dir / (stem + ".source.png"));
  if (!color.same_size(base) || !mask.same_size(base) || !source.same_size(base))
    throw IoError("checkpoint " + stem + " does not match the atlas size");
  tex.labels = meta.at("labels").get<std::vector<std::string>>();
  for (std::size_t i = 0; i < mask.pixel_count(); ++i) {
    const bool painted = mask.data()[i] != 0;
    tex.mask.data()[i] = painted ? kPainted : kUnpainted;
    for (int c = 0; c < 3; ++c) tex.color.data()[i * 3 + c] = painted ? color.data()[i * 3 + c] : base.data()[i * 3 + c];
  }
  tex.source = std::move(source);
  return tex;
}

// SHA-256 over color (painted texels), mask, provenance and labels.
inline std::string texture_hash(const PaintedTexture& tex) {
  Sha256 h;
  for (int y = 0; y < tex.height(); ++y)
    for (int x = 0; x < tex.width(); ++x) {
      const Rgb c = tex.painted(x, y) ? get_rgb(tex.color, x, y) : kSentinel;
      h.update(c.data(), 3);
    }
  h.update_bytes(tex.mask.data());
  h.update_bytes(tex.source.data());
  for (const auto& l : tex.labels) h.update(l).update("\n", 1);
  return h.hex();
}

}  // namespace forge
