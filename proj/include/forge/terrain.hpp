#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "forge/error.hpp"
#include "forge/geo.hpp"
#include "forge/image.hpp"
#include "forge/image_io.hpp"
#include "forge/parallel.hpp"
#include "forge/texture.hpp"

namespace forge {

// Sidecar describing how a 16-bit elevation raster maps to meters.
struct HeightfieldSidecar {
  double cell_size_m = 0.0;
  double z_min_m = 0.0;
  double z_max_m = 0.0;
  double origin_lat = 0.0;
  double origin_lon = 0.0;
  int rows = 0;
  int cols = 0;

  static HeightfieldSidecar from_json(const nlohmann::json& j) {
    static constexpr const char* kFields[] = {"cell_size_m", "z_min_m", "z_max_m", "origin_lat",
                                              "origin_lon",  "rows",    "cols"};
    for (const char* f : kFields)
      if (!j.contains(f)) throw InvalidArgument(std::string("heightfield sidecar: missing field '") + f + "'");
    HeightfieldSidecar s;
    s.cell_size_m = j.at("cell_size_m").get<double>();
    s.z_min_m = j.at("z_min_m").get<double>();
    s.z_max_m = j.at("z_max_m").get<double>();
    s.origin_lat = j.at("origin_lat").get<double>();
    s.origin_lon = j.at("origin_lon").get<double>();
    s.rows = j.at("rows").get<int>();
    s.cols = j.at("cols").get<int>();
    return s;
  }

  nlohmann::json to_json() const {
    return {{"cell_size_m", cell_size_m}, {"z_min_m", z_min_m}, {"z_max_m", z_max_m}, {"origin_lat", origin_lat},
            {"origin_lon", origin_lon},   {"rows", rows},       {"cols", cols}};
  }
};

// Regular elevation grid. Row 0 is the northernmost row; column 0 the
// westernmost. The southwest corner sits at local (0, 0).
struct HeightField {
  int width = 0;   // columns
  int height = 0;  // rows
  double cell_size = 1.0;
  GeoPoint origin;  // geographic position of the southwest corner
  std::vector<double> z;

  double& at(int row, int col) { return z[static_cast<std::size_t>(row) * width + col]; }
  double at(int row, int col) const { return z[static_cast<std::size_t>(row) * width + col]; }

  double extent_x() const { return (width - 1) * cell_size; }
  double extent_y() const { return (height - 1) * cell_size; }

  // Local y coordinate of grid row `row`.
  double row_y(int row) const { return (height - 1 - row) * cell_size; }

  bool contains(double x, double y) const {
    return x >= 0.0 && y >= 0.0 && x <= extent_x() && y <= extent_y();
  }

  void validate() const {
    if (width < 2 || height < 2) throw InvalidArgument("HeightField: needs at least 2x2 samples");
    if (!(cell_size > 0.0) || !std::isfinite(cell_size)) throw InvalidArgument("HeightField: cell_size must be > 0");
    if (z.size() != static_cast<std::size_t>(width) * height) throw InvalidArgument("HeightField: z size mismatch");
    for (double v : z)
      if (!std::isfinite(v)) throw InvalidArgument("HeightField: non-finite elevation");
  }

  // Elevation of the triangulated surface at local (x, y); matches the
  // mesh produced by build_mesh exactly. Points outside are clamped.
  double surface_height(double x, double y) const {
    const double gx = std::clamp(x / cell_size, 0.0, static_cast<double>(width - 1));
    const double gy = std::clamp(y / cell_size, 0.0, static_cast<double>(height - 1));
    const int j0 = std::min(static_cast<int>(gx), width - 2);
    const int k0 = std::min(static_cast<int>(gy), height - 2);  // counted from the south
    const double s = gx - j0;
    const double t = gy - k0;
    const int south = height - 1 - k0;
    const int north = south - 1;
    const double sw = at(south, j0);
    const double se = at(south, j0 + 1);
    const double ne = at(north, j0 + 1);
    const double nw = at(north, j0);
    if (t <= s) return sw + s * (se - sw) + t * (ne - se);
    return sw + t * (nw - sw) + s * (ne - nw);
  }
};

// Dequantize a 16-bit elevation raster.
inline HeightField heightfield_from_raw(const Gray16Image& raw, const HeightfieldSidecar& meta) {
  if (raw.channels() != 1) throw InvalidArgument("elevation raster must be single-channel");
  if (raw.width() != meta.cols || raw.height() != meta.rows)
    throw InvalidArgument("elevation raster dimensions do not match sidecar rows/cols");
  HeightField hf;
  hf.width = meta.cols;
  hf.height = meta.rows;
  hf.cell_size = meta.cell_size_m;
  hf.origin = GeoPoint{meta.origin_lat, meta.origin_lon, 0.0};
  hf.z.resize(raw.pixel_count());
  const double span = meta.z_max_m - meta.z_min_m;
  for (std::size_t i = 0; i < hf.z.size(); ++i) hf.z[i] = meta.z_min_m + raw.data()[i] / 65535.0 * span;
  hf.validate();
  return hf;
}

inline HeightField load_heightfield(const std::filesystem::path& elevation_file,
                                    const std::filesystem::path& sidecar_file) {
  std::ifstream in(sidecar_file);
  if (!in) throw IoError("cannot open heightfield sidecar " + sidecar_file.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("heightfield sidecar: " + std::string(e.what()));
  }
  const auto meta = HeightfieldSidecar::from_json(j);
  return heightfield_from_raw(read_gray16(elevation_file), meta);
}

// Quantize back to 16 bits (used to write fixtures).
inline std::pair<Gray16Image, HeightfieldSidecar> heightfield_to_raw(const HeightField& hf) {
  hf.validate();
  const auto [lo, hi] = std::minmax_element(hf.z.begin(), hf.z.end());
  HeightfieldSidecar meta{hf.cell_size, *lo, *hi > *lo ? *hi : *lo + 1.0, hf.origin.lat_deg, hf.origin.lon_deg,
                          hf.height, hf.width};
  Gray16Image raw(hf.width, hf.height, 1);
  for (std::size_t i = 0; i < hf.z.size(); ++i)
    raw.data()[i] =
        static_cast<std::uint16_t>(std::lround((hf.z[i] - meta.z_min_m) / (meta.z_max_m - meta.z_min_m) * 65535.0));
  return {raw, meta};
}

struct SatelliteImage {
  RgbImage pixels;
  double extent_x = 0.0;  // meters covered west-east
  double extent_y = 0.0;  // meters covered south-north
};

using Face = std::array<std::uint32_t, 3>;

struct TerrainMesh {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;
  int grid_width = 0;  // nonzero for meshes built from a HeightField
  int grid_height = 0;

  std::size_t face_count() const { return faces.size(); }
  bool is_grid() const { return grid_width > 0 && grid_height > 0; }

  Vec3 face_normal(std::size_t f) const {
    const auto& tri = faces[f];
    const Vec3 n = (vertices[tri[1]] - vertices[tri[0]]).cross(vertices[tri[2]] - vertices[tri[0]]);
    return n.normalized();
  }

  void validate() const {
    for (const auto& tri : faces) {
      for (auto idx : tri)
        if (idx >= vertices.size()) throw InvalidArgument("TerrainMesh: face index out of range");
      const Vec3 n = (vertices[tri[1]] - vertices[tri[0]]).cross(vertices[tri[2]] - vertices[tri[0]]);
      if (!(n.norm() > 0.0)) throw InvalidArgument("TerrainMesh: degenerate face");
    }
  }
};

// Triangulate the grid, one vertex per sample, splitting every quad along
// its southwest-northeast diagonal. Faces are counter-clockwise seen from
// above. Quad (row i, col j) owns faces 2q and 2q+1 with q = i*(W-1)+j.
inline TerrainMesh build_mesh(const HeightField& hf) {
  hf.validate();
  TerrainMesh mesh;
  mesh.grid_width = hf.width;
  mesh.grid_height = hf.height;
  mesh.vertices.reserve(static_cast<std::size_t>(hf.width) * hf.height);
  for (int i = 0; i < hf.height; ++i)
    for (int j = 0; j < hf.width; ++j) mesh.vertices.emplace_back(j * hf.cell_size, hf.row_y(i), hf.at(i, j));
  mesh.faces.reserve(2 * static_cast<std::size_t>(hf.width - 1) * (hf.height - 1));
  const auto vid = [&](int i, int j) { return static_cast<std::uint32_t>(i * hf.width + j); };
  for (int i = 0; i + 1 < hf.height; ++i) {
    for (int j = 0; j + 1 < hf.width; ++j) {
      const auto nw = vid(i, j), ne = vid(i, j + 1), sw = vid(i + 1, j), se = vid(i + 1, j + 1);
      mesh.faces.push_back({sw, se, ne});
      mesh.faces.push_back({sw, ne, nw});
    }
  }
  return mesh;
}

// Per-vertex texture coordinates. v = 0 is the bottom (south) edge of the
// atlas; texel row 0 is the top.
struct UvChart {
  std::vector<Vec2> uv;
  int tex_width = 0;
  int tex_height = 0;

  // Continuous texel coordinates (x right, y down) of a uv location.
  Vec2 to_texel(const Vec2& t) const { return {t.x() * tex_width, (1.0 - t.y()) * tex_height}; }
  Vec2 from_texel(double x, double y) const { return {x / tex_width, 1.0 - y / tex_height}; }
};

inline UvChart unwrap_planar(const TerrainMesh& mesh, const HeightField& hf, int tex_width, int tex_height) {
  if (!mesh.is_grid() || mesh.grid_width != hf.width || mesh.grid_height != hf.height ||
      mesh.vertices.size() != static_cast<std::size_t>(hf.width) * hf.height)
    throw InvalidArgument("unwrap_planar: mesh is not the grid mesh of this heightfield");
  if (tex_width <= 0 || tex_height <= 0) throw InvalidArgument("unwrap_planar: texture resolution must be positive");
  UvChart chart;
  chart.tex_width = tex_width;
  chart.tex_height = tex_height;
  chart.uv.reserve(mesh.vertices.size());
  const double ex = hf.extent_x();
  const double ey = hf.extent_y();
  for (const auto& p : mesh.vertices) chart.uv.emplace_back(p.x() / ex, p.y() / ey);
  return chart;
}

// Inverse of unwrap_planar: ground (x, y) for a uv location.
inline Vec2 planar_inverse(const Vec2& uv, const HeightField& hf) {
  return {uv.x() * hf.extent_x(), uv.y() * hf.extent_y()};
}

// Bake the satellite image into the planar atlas. Each texel center is
// mapped to its ground position and bilinearly sampled.
inline PaintedTexture bake_base_texture(const TerrainMesh& mesh, const UvChart& uv, const SatelliteImage& sat) {
  if (sat.pixels.empty() || sat.pixels.channels() != 3) throw InvalidArgument("bake_base_texture: empty satellite image");
  if (!mesh.is_grid()) throw InvalidArgument("bake_base_texture: planar bake needs a grid mesh");
  double max_x = 0.0, max_y = 0.0;
  for (const auto& v : mesh.vertices) {
    max_x = std::max(max_x, v.x());
    max_y = std::max(max_y, v.y());
  }
  const auto close = [](double a, double b) { return std::abs(a - b) <= 1e-6 * std::max(1.0, std::abs(b)); };
  if (!close(sat.extent_x, max_x) || !close(sat.extent_y, max_y))
    throw InvalidArgument("bake_base_texture: satellite extent does not match the heightfield extent");

  RgbImage base(uv.tex_width, uv.tex_height, 3);
  const double sx = static_cast<double>(sat.pixels.width()) / uv.tex_width;
  const double sy = static_cast<double>(sat.pixels.height()) / uv.tex_height;
  parallel_for(static_cast<std::size_t>(uv.tex_height), [&](std::size_t row) {
    const int y = static_cast<int>(row);
    for (int x = 0; x < uv.tex_width; ++x) set_rgb(base, x, y, sample_rgb(sat.pixels, (x + 0.5) * sx, (y + 0.5) * sy));
  });
  return PaintedTexture(std::move(base));
}

// ASCII OBJ with one vt per vertex.
inline void write_obj(const std::filesystem::path& path, const TerrainMesh& mesh, const UvChart* uv = nullptr) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(10);
  for (const auto& v : mesh.vertices) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  if (uv)
    for (const auto& t : uv->uv) out << "vt " << t.x() << ' ' << t.y() << '\n';
  for (const auto& f : mesh.faces) {
    out << 'f';
    for (auto i : f) {
      out << ' ' << i + 1;
      if (uv) out << '/' << i + 1;
    }
    out << '\n';
  }
}

}  // namespace forge
