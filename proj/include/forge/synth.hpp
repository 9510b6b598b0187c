#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "forge/camera.hpp"
#include "forge/image_io.hpp"
#include "forge/pipeline.hpp"
#include "forge/raster.hpp"
#include "forge/terrain.hpp"

// Procedural alpine scene with webcams whose images are rendered from a
// known ground-truth appearance. Used by the test suite and `forge synth`.
namespace forge::synth {

inline constexpr GeoPoint kOrigin{46.62, 8.03, 0.0};
inline constexpr Rgb kSky{150, 190, 235};

struct Options {
  int grid = 65;           // heightfield samples per side
  double cell_size = 30.0;  // meters
  int satellite_size = 256;
  int texture_size = 512;
  int cam_width = 320;
  int cam_height = 240;
  double cam_hfov_deg = 60.0;
  int correspondences = 20;
  bool perturb = false;  // write perturbed, untrusted descriptors instead of exact trusted ones
  int trajectory_samples = 6;
  int frame_size = 256;
  std::uint64_t seed = 7;
};

inline double extent(const Options& o) { return (o.grid - 1) * o.cell_size; }

inline double terrain_height(double x, double y, double ext) {
  const double cx = 0.5 * ext, cy = 0.52 * ext, r = 0.2 * ext;
  const double dx = x - cx, dy = y - cy;
  return 1000.0 + 650.0 * std::exp(-(dx * dx + dy * dy) / (2.0 * r * r)) +
         40.0 * std::sin(x / 170.0) * std::cos(y / 210.0);
}

inline std::uint8_t clamp8(double v) { return to_u8(std::clamp(v, 0.0, 255.0)); }

// Appearance seen by the webcams: snow above ~1450 m over patterned meadow.
inline Rgb webcam_albedo(double x, double y, double z) {
  const double pattern = 22.0 * std::sin(x / 45.0) * std::sin(y / 37.0);
  const double r = 85.0 + 30.0 * std::sin(x / 90.0) + pattern;
  const double g = 115.0 + 25.0 * std::cos(y / 110.0) + pattern;
  const double b = 55.0 + 0.5 * pattern;
  const double snow = std::clamp((z - 1350.0) / 200.0, 0.0, 1.0);
  return {clamp8((1 - snow) * r + snow * 236.0), clamp8((1 - snow) * g + snow * 238.0),
          clamp8((1 - snow) * b + snow * 242.0)};
}

// Appearance in the satellite layer: summer colors, no snow.
inline Rgb satellite_albedo(double x, double y) {
  return {clamp8(60.0 + 20.0 * std::sin(x / 60.0)), clamp8(135.0 + 20.0 * std::cos(y / 80.0)), 62};
}

inline HeightField make_heightfield(const Options& o) {
  HeightField hf;
  hf.width = hf.height = o.grid;
  hf.cell_size = o.cell_size;
  hf.origin = kOrigin;
  hf.z.resize(static_cast<std::size_t>(o.grid) * o.grid);
  for (int r = 0; r < o.grid; ++r)
    for (int c = 0; c < o.grid; ++c)
      hf.z[static_cast<std::size_t>(r) * o.grid + c] = terrain_height(c * o.cell_size, hf.row_y(r), extent(o));
  return hf;
}

inline RgbImage make_satellite(const Options& o) {
  const double ext = extent(o);
  RgbImage img(o.satellite_size, o.satellite_size, 3);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      set_rgb(img, x, y,
              satellite_albedo((x + 0.5) / img.width() * ext, (1.0 - (y + 0.5) / img.height()) * ext));
  return img;
}

// Every texel painted with the webcam appearance at its surface point.
inline PaintedTexture truth_texture(const TerrainBundle& t) {
  PaintedTexture tex = t.base;
  const int label = tex.label_index("truth");
  for (int y = 0; y < tex.height(); ++y)
    for (int x = 0; x < tex.width(); ++x) {
      const Vec2 p = planar_inverse(t.uv.from_texel(x + 0.5, y + 0.5), t.heightfield);
      set_rgb(tex.color, x, y, avoid_sentinel(webcam_albedo(p.x(), p.y(), t.heightfield.surface_height(p.x(), p.y()))));
      tex.mask.at(x, y) = kPainted;
      tex.source.at(x, y) = static_cast<std::uint16_t>(label);
    }
  return tex;
}

// Webcam image: truth render with sky color where no terrain is hit.
inline RgbImage webcam_image(const TerrainBundle& t, const PaintedTexture& truth, const CameraRig& rig) {
  RenderSettings rs;
  rs.background = kSky;
  return render(t.mesh, t.uv, truth, rig.intrinsics, rig.pose, rs).rgb;
}

// Mesh vertices visible from the rig, projected exactly.
inline std::vector<Correspondence> visible_correspondences(const TerrainBundle& t, const CameraRig& rig, int count) {
  const RenderBuffers buf = render_geometry(t.mesh, rig.intrinsics, rig.pose, {});
  std::vector<Correspondence> candidates;
  const double margin = 8.0;
  for (const Vec3& v : t.mesh.vertices) {
    const auto pr = project(v, rig.intrinsics, rig.pose);
    if (!pr) continue;
    const double u = pr->pixel.x(), w = pr->pixel.y();
    if (u < margin || w < margin || u > rig.intrinsics.width - margin || w > rig.intrinsics.height - margin) continue;
    const int px = static_cast<int>(u), py = static_cast<int>(w);
    if (!buf.covered(px, py) || std::abs(buf.depth.at(px, py) - pr->depth) > 0.01 * pr->depth) continue;
    candidates.push_back({v, pr->pixel});
  }
  if (static_cast<int>(candidates.size()) < count) throw NumericError("synthetic rig sees too few vertices");
  std::vector<Correspondence> out;
  const double stride = static_cast<double>(candidates.size()) / count;
  for (int i = 0; i < count; ++i) out.push_back(candidates[static_cast<std::size_t>(i * stride)]);
  return out;
}

struct RigSpec {
  std::string id;
  double fx, fy;  // fractions of the extent
  double height_above_ground;
};

struct Scene {
  std::filesystem::path project_file;
  std::vector<CameraRig> truth_rigs;  // paint rigs with exact parameters
  std::vector<CameraRig> heldout_rigs;
};

inline CameraRig make_rig(const std::string& id, const Vec2& xy, double above_ground, const HeightField& hf,
                          const Options& o, const std::string& timestamp) {
  const double ext = extent(o);
  const Vec3 target(0.5 * ext, 0.52 * ext, 1350.0);
  const Vec3 eye(xy.x(), xy.y(), hf.surface_height(xy.x(), xy.y()) + above_ground);
  // Round-trip through geographic coordinates so the exact pose matches
  // what the written descriptor resolves to.
  const GeoPoint g = local_to_geo(eye, hf.origin);
  CameraRig rig;
  rig.id = id;
  rig.pose = Pose::look_at(geo_to_local(g, hf.origin), target);
  rig.intrinsics = Intrinsics::from_hfov(deg2rad(o.cam_hfov_deg), o.cam_width, o.cam_height);
  rig.timestamp = timestamp;
  rig.trusted = true;
  return rig;
}

inline RigDescriptor descriptor_for(const CameraRig& rig, const GeoPoint& origin) {
  RigDescriptor d;
  d.id = rig.id;
  d.geo = local_to_geo(rig.pose.position, origin);
  d.has_alt = true;
  d.yaw_deg = rad2deg(rig.pose.yaw);
  d.pitch_deg = rad2deg(rig.pose.pitch);
  d.roll_deg = rad2deg(rig.pose.roll);
  d.intrinsics = rig.intrinsics;
  d.timestamp = rig.timestamp;
  d.trusted = rig.trusted;
  d.optimized = rig.optimized;
  return d;
}

// Write a complete project (terrain, three paint webcams, one held-out
// webcam, a trajectory) under `dir` and return its manifest path.
inline Scene write_project(const std::filesystem::path& dir, const Options& o = {}) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "terrain");
  fs::create_directories(dir / "cameras");
  const double ext = extent(o);

  HeightField hf = make_heightfield(o);
  const auto [raw, sidecar] = heightfield_to_raw(hf);
  write_png(dir / "terrain/elevation.png", raw);
  write_json_file(dir / "terrain/elevation.json", sidecar.to_json());
  const RgbImage sat = make_satellite(o);
  write_png(dir / "terrain/satellite.png", sat);

  // Rebuild from the quantized files so the scene matches what loaders see.
  const TerrainBundle bundle =
      build_terrain(load_heightfield(dir / "terrain/elevation.png", dir / "terrain/elevation.json"), sat,
                    o.texture_size, o.texture_size);
  const PaintedTexture truth = truth_texture(bundle);
  const GeoPoint origin{bundle.heightfield.origin.lat_deg, bundle.heightfield.origin.lon_deg, 0.0};

  Scene scene;
  scene.project_file = dir / "project.json";
  struct Placement {
    const char* id;
    double x, y;
    bool heldout;
  };
  const Placement placements[] = {{"cam_west", 0.08, 0.85, false},
                                  {"cam_south", 0.5, 0.06, false},
                                  {"cam_east", 0.93, 0.45, false},
                                  {"cam_northeast", 0.88, 0.9, true}};
  nlohmann::json rigs = nlohmann::json::array(), heldout = nlohmann::json::array();
  int n = 0;
  for (const auto& pl : placements) {
    ++n;
    char ts[32];
    std::snprintf(ts, sizeof ts, "2023-10-%02dT09:00:00Z", n);
    CameraRig rig = make_rig(pl.id, {pl.x * ext, pl.y * ext}, 60.0, bundle.heightfield, o, ts);
    const RgbImage img = webcam_image(bundle, truth, rig);
    const std::string stem = std::string("cameras/") + pl.id;
    write_png(dir / (stem + ".png"), img);
    rig.correspondences = visible_correspondences(bundle, rig, o.correspondences);
    save_correspondences(dir / (stem + ".txt"), rig.correspondences);

    RigDescriptor d = descriptor_for(rig, origin);
    if (o.perturb && !pl.heldout) {
      d.intrinsics.fx *= 1.06;
      d.intrinsics.fy *= 0.95;
      d.yaw_deg += 3.0;
      d.trusted = false;
    }
    write_json_file(dir / (stem + ".json"), d.to_json());
    nlohmann::json entry{{"descriptor", stem + ".json"}, {"image", stem + ".png"}, {"correspondences", stem + ".txt"}};
    if (n == 1) {
      // Sky mask for the first webcam: everything the terrain does not cover.
      const RenderBuffers buf = render_geometry(bundle.mesh, rig.intrinsics, rig.pose, {});
      GrayImage sky(img.width(), img.height(), 1, 0);
      for (int y = 0; y < sky.height(); ++y)
        for (int x = 0; x < sky.width(); ++x) sky.at(x, y) = buf.covered(x, y) ? 0 : 255;
      write_png(dir / (stem + "_sky.png"), sky);
      entry["sky_mask"] = stem + "_sky.png";
    }
    (pl.heldout ? heldout : rigs).push_back(entry);
    (pl.heldout ? scene.heldout_rigs : scene.truth_rigs).push_back(rig);
  }

  nlohmann::json waypoints = nlohmann::json::array();
  const GeoPoint look = local_to_geo(Vec3(0.5 * ext, 0.52 * ext, 1450.0), origin);
  for (const auto& [x, y] : {std::pair{0.15, 0.3}, {0.5, 0.15}, {0.85, 0.3}}) {
    const GeoPoint g = local_to_geo(Vec3(x * ext, y * ext, 0.0), origin);
    waypoints.push_back({{"lat", g.lat_deg},
                         {"lon", g.lon_deg},
                         {"agl_m", 250.0},
                         {"look", {{"lat", look.lat_deg}, {"lon", look.lon_deg}, {"alt", look.alt_m}}}});
  }
  write_json_file(dir / "trajectory.json", waypoints);

  nlohmann::json project{
      {"name", "synthetic-alps"},
      {"timestamp", "2023-10-05T12:00:00Z"},
      {"terrain",
       {{"elevation", "terrain/elevation.png"},
        {"sidecar", "terrain/elevation.json"},
        {"satellite", "terrain/satellite.png"},
        {"texture_width", o.texture_size},
        {"texture_height", o.texture_size}}},
      {"rigs", rigs},
      {"heldout", heldout},
      {"trajectory",
       {{"waypoints", "trajectory.json"},
        {"mode", "cubic"},
        {"samples", o.trajectory_samples},
        {"agl_m", 250.0},
        {"orientation", "look_target"},
        {"width", o.frame_size},
        {"height", o.frame_size},
        {"hfov_deg", 60.0}}},
      {"inpaint", {{"backend", "mock"}, {"seed", o.seed}, {"prompt", "alpine valley, autumn"}, {"strength", 1.0}}},
      {"render", {{"near_m", 1.0}, {"far_m", 1e5}}},
      {"eval", {{"near_cutoff_m", 500.0}}},
      {"output_dir", "out"}};
  write_json_file(scene.project_file, project);
  return scene;
}

}  // namespace forge::synth
