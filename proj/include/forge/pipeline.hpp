#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include <json.hpp>

#include "forge/camera.hpp"
#include "forge/error.hpp"
#include "forge/eval.hpp"
#include "forge/image_io.hpp"
#include "forge/inpaint.hpp"
#include "forge/protocol.hpp"
#include "forge/raster.hpp"
#include "forge/terrain.hpp"
#include "forge/texturing.hpp"
#include "forge/trajectory.hpp"

namespace forge {

namespace fs = std::filesystem;

inline nlohmann::json read_json_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot open " + p.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(p.string() + ": " + e.what());
  }
}

inline void write_json_file(const fs::path& p, const nlohmann::json& j) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  const fs::path tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw IoError("cannot write " + p.string());
    out << j.dump(2) << '\n';
  }
  fs::rename(tmp, p);
}

struct TerrainBundle {
  HeightField heightfield;
  SatelliteImage satellite;
  TerrainMesh mesh;
  UvChart uv;
  PaintedTexture base;  // satellite bake, nothing painted
};

inline TerrainBundle build_terrain(HeightField hf, RgbImage satellite, int tex_width, int tex_height) {
  TerrainBundle t;
  t.heightfield = std::move(hf);
  t.satellite = {std::move(satellite), t.heightfield.extent_x(), t.heightfield.extent_y()};
  t.mesh = build_mesh(t.heightfield);
  t.uv = unwrap_planar(t.mesh, t.heightfield, tex_width, tex_height);
  t.base = bake_base_texture(t.mesh, t.uv, t.satellite);
  for (int y = 0; y < t.base.height(); ++y)
    for (int x = 0; x < t.base.width(); ++x) {
      set_rgb(t.base.base, x, y, avoid_sentinel(get_rgb(t.base.base, x, y)));
      set_rgb(t.base.color, x, y, get_rgb(t.base.base, x, y));
    }
  return t;
}

struct RigEntry {
  RigDescriptor descriptor;
  CameraRig rig;
  fs::path descriptor_path;
  fs::path image_path;
  fs::path correspondences_path;
  std::optional<fs::path> sky_mask_path;  // 255 = unusable webcam pixel
  std::optional<fs::path> eval_mask_path;  // held-out views: 255 = include
};

struct InpaintSettings {
  std::string backend = "mock";  // "mock" or "url"
  std::string url;
  std::uint64_t seed = 0;
  std::string prompt;
  double strength = 1.0;
  int max_attempts = 3;
  int grain_levels = 1;
};

struct TrajectorySettings {
  fs::path waypoints_path;
  TrajectoryConfig config;
  int width = 512;
  int height = 512;
  double hfov_deg = 60.0;

  Intrinsics intrinsics() const { return Intrinsics::from_hfov(deg2rad(hfov_deg), width, height); }
};

// A project document plus everything it references, resolved relative to
// the document's directory.
struct Project {
  fs::path file;
  fs::path root;
  nlohmann::json doc;
  std::string name;
  std::string timestamp;
  TerrainBundle terrain;
  std::vector<RigEntry> rigs;     // paint order
  std::vector<RigEntry> heldout;  // evaluation views
  std::optional<TrajectorySettings> trajectory;
  std::vector<Waypoint> waypoints;
  InpaintSettings inpaint;
  RenderSettings render;
  double eval_near_cutoff_m = 500.0;
  fs::path output_dir;

  static Project load(const fs::path& project_file);

  fs::path resolve(const std::string& rel) const {
    const fs::path p(rel);
    return p.is_absolute() ? p : root / p;
  }

  RigEntry* find_rig(const std::string& id) {
    for (auto& r : rigs)
      if (r.rig.id == id) return &r;
    for (auto& r : heldout)
      if (r.rig.id == id) return &r;
    return nullptr;
  }

  std::vector<Pose> trajectory_poses() const {
    if (!trajectory) return {};
    return build_trajectory(waypoints, trajectory->config, terrain.heightfield);
  }
};

namespace detail {

inline RigEntry load_rig_entry(const Project& p, const nlohmann::json& j) {
  RigEntry e;
  e.descriptor_path = p.resolve(j.at("descriptor").get<std::string>());
  e.image_path = p.resolve(j.at("image").get<std::string>());
  e.correspondences_path = p.resolve(j.value("correspondences", e.descriptor_path.stem().string() + ".txt"));
  if (j.contains("sky_mask") && !j["sky_mask"].is_null()) e.sky_mask_path = p.resolve(j["sky_mask"].get<std::string>());
  if (j.contains("eval_mask") && !j["eval_mask"].is_null())
    e.eval_mask_path = p.resolve(j["eval_mask"].get<std::string>());
  e.descriptor = RigDescriptor::from_json(read_json_file(e.descriptor_path));
  const auto& hf = p.terrain.heightfield;
  e.rig = resolve_rig(e.descriptor, GeoPoint{hf.origin.lat_deg, hf.origin.lon_deg, 0.0},
                      [&hf](double x, double y) { return hf.surface_height(x, y); });
  if (fs::exists(e.correspondences_path)) {
    e.rig.correspondences = load_correspondences(e.correspondences_path);
    validate_correspondences(e.rig.correspondences, e.rig.intrinsics);
  }
  return e;
}

}  // namespace detail

inline Project Project::load(const fs::path& project_file) {
  Project p;
  p.file = fs::absolute(project_file);
  p.root = p.file.parent_path();
  p.doc = read_json_file(p.file);
  try {
    const auto& d = p.doc;
    p.name = d.value("name", p.root.filename().string());
    p.timestamp = d.value("timestamp", std::string{});
    const auto& t = d.at("terrain");
    HeightField hf = load_heightfield(p.resolve(t.at("elevation").get<std::string>()),
                                      p.resolve(t.at("sidecar").get<std::string>()));
    RgbImage sat = read_rgb8(p.resolve(t.at("satellite").get<std::string>()));
    p.terrain = build_terrain(std::move(hf), std::move(sat), t.value("texture_width", 512), t.value("texture_height", 512));

    std::set<std::string> ids;
    const auto add = [&](std::vector<RigEntry>& dst, const nlohmann::json& arr) {
      for (const auto& r : arr) {
        RigEntry e = detail::load_rig_entry(p, r);
        if (!ids.insert(e.rig.id).second) throw InvalidArgument("duplicate camera id '" + e.rig.id + "'");
        dst.push_back(std::move(e));
      }
    };
    add(p.rigs, d.value("rigs", nlohmann::json::array()));
    add(p.heldout, d.value("heldout", nlohmann::json::array()));

    if (d.contains("trajectory") && !d["trajectory"].is_null()) {
      const auto& tj = d["trajectory"];
      TrajectorySettings ts;
      ts.waypoints_path = p.resolve(tj.at("waypoints").get<std::string>());
      ts.config.mode = trajectory_mode_from_string(tj.value("mode", std::string("cubic")));
      ts.config.samples = tj.value("samples", 16);
      ts.config.default_agl_m = tj.value("agl_m", 200.0);
      ts.config.orientation = orientation_from_string(tj.value("orientation", std::string("look_ahead")));
      ts.width = tj.value("width", 512);
      ts.height = tj.value("height", 512);
      ts.hfov_deg = tj.value("hfov_deg", 60.0);
      p.waypoints = parse_waypoints(read_json_file(ts.waypoints_path));
      p.trajectory = ts;
    }
    if (d.contains("inpaint")) {
      const auto& ij = d["inpaint"];
      p.inpaint.backend = ij.value("backend", std::string("mock"));
      p.inpaint.url = ij.value("url", std::string{});
      p.inpaint.seed = ij.value("seed", std::uint64_t{0});
      p.inpaint.prompt = ij.value("prompt", std::string{});
      p.inpaint.strength = ij.value("strength", 1.0);
      p.inpaint.max_attempts = ij.value("max_attempts", 3);
      p.inpaint.grain_levels = ij.value("grain_levels", 1);
    }
    if (d.contains("render")) {
      p.render.near = d["render"].value("near_m", p.render.near);
      p.render.far = d["render"].value("far_m", p.render.far);
    }
    if (d.contains("eval")) p.eval_near_cutoff_m = d["eval"].value("near_cutoff_m", 500.0);
    p.output_dir = p.resolve(d.value("output_dir", std::string("out")));
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(p.file.string() + ": " + e.what());
  }
  return p;
}

// Persist a rig's descriptor and correspondences.
inline void save_rig(const RigEntry& e) {
  write_json_file(e.descriptor_path, e.descriptor.to_json());
  save_correspondences(e.correspondences_path, e.rig.correspondences);
}

// Adopt optimized parameters into the rig and its descriptor.
inline void apply_optimization(RigEntry& e, const OptimizeResult& r) {
  e.rig.intrinsics = r.intrinsics;
  e.rig.pose = r.pose;
  e.rig.optimized = true;
  e.descriptor.intrinsics = r.intrinsics;
  e.descriptor.yaw_deg = rad2deg(r.pose.yaw);
  e.descriptor.pitch_deg = rad2deg(r.pose.pitch);
  e.descriptor.optimized = true;
}

struct FrameRecord {
  Pose pose;
  Intrinsics intrinsics;
  std::string stage;  // paint | inpaint | eval
  int step = 0;
  fs::path image;
  std::string timestamp;

  nlohmann::json to_json() const {
    return {{"stage", stage},
            {"step", step},
            {"image", image.string()},
            {"timestamp", timestamp},
            {"position", {pose.position.x(), pose.position.y(), pose.position.z()}},
            {"yaw", pose.yaw},
            {"pitch", pose.pitch},
            {"roll", pose.roll},
            {"intrinsics",
             {{"fx", intrinsics.fx},
              {"fy", intrinsics.fy},
              {"cx", intrinsics.cx},
              {"cy", intrinsics.cy},
              {"width", intrinsics.width},
              {"height", intrinsics.height}}}};
  }

  static FrameRecord from_json(const nlohmann::json& j) {
    FrameRecord f;
    f.stage = j.at("stage").get<std::string>();
    f.step = j.at("step").get<int>();
    f.image = j.at("image").get<std::string>();
    f.timestamp = j.value("timestamp", std::string{});
    const auto& p = j.at("position");
    f.pose.position = {p[0].get<double>(), p[1].get<double>(), p[2].get<double>()};
    f.pose.yaw = j.at("yaw").get<double>();
    f.pose.pitch = j.at("pitch").get<double>();
    f.pose.roll = j.at("roll").get<double>();
    const auto& k = j.at("intrinsics");
    f.intrinsics = {k.at("fx").get<double>(), k.at("fy").get<double>(), k.at("cx").get<double>(),
                    k.at("cy").get<double>(), k.at("width").get<int>(),  k.at("height").get<int>()};
    return f;
  }
};

inline nlohmann::json frames_to_json(const std::vector<FrameRecord>& frames) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& f : frames) a.push_back(f.to_json());
  return a;
}

inline std::vector<FrameRecord> frames_from_json(const nlohmann::json& j) {
  std::vector<FrameRecord> out;
  for (const auto& f : j) out.push_back(FrameRecord::from_json(f));
  return out;
}

inline ImageMask load_binary_mask(const fs::path& p, int width, int height) {
  GrayImage g = read_gray8(p);
  if (g.width() != width || g.height() != height) throw IoError(p.string() + ": mask size differs from its image");
  for (auto& v : g.data()) v = v >= 128 ? 1 : 0;
  return g;
}

// Called after each completed step with the texture as checkpointed.
using ProgressFn = std::function<void(int done, int total, const PaintedTexture& texture)>;

struct PaintStageResult {
  PaintedTexture texture;
  std::vector<FrameRecord> frames;
};

// Paint every rig into the atlas in manifest order, checkpointing the
// texture after each one as texture_paint_{t}.
inline PaintStageResult run_paint_stage(const Project& p, const ProgressFn& progress = {}) {
  for (const auto& e : p.rigs)
    if (!e.rig.optimized && !e.rig.trusted)
      throw InvalidArgument("camera '" + e.rig.id + "' is neither optimized nor flagged trusted");
  // A fresh paint run invalidates any later-stage results.
  for (const char* stale : {"texture_final.json", "inpaint_state.json", "frames_inpaint.json"})
    fs::remove(p.output_dir / stale);
  const auto& t = p.terrain;
  PaintStageResult res{t.base, {}};
  const int total = static_cast<int>(p.rigs.size());
  for (int step = 1; step <= total; ++step) {
    const RigEntry& e = p.rigs[static_cast<std::size_t>(step - 1)];
    if (!fs::exists(e.image_path)) throw IoError("missing webcam image " + e.image_path.string());
    const RgbImage image = read_rgb8(e.image_path);
    if (image.width() != e.rig.intrinsics.width || image.height() != e.rig.intrinsics.height)
      throw InvalidArgument("webcam image size of '" + e.rig.id + "' differs from its intrinsics");
    std::optional<ImageMask> invalid;
    if (e.sky_mask_path) invalid = load_binary_mask(*e.sky_mask_path, image.width(), image.height());
    const RenderBuffers buf = render_geometry(t.mesh, e.rig.intrinsics, e.rig.pose, p.render);
    res.texture = paint_view(res.texture, t.mesh, t.uv, image, e.rig.intrinsics, e.rig.pose, buf,
                             invalid ? &*invalid : nullptr, "webcam:" + e.rig.id);
    save_texture_checkpoint(p.output_dir, "paint", step, res.texture);
    char name[64];
    std::snprintf(name, sizeof name, "frames/paint_%04d.png", step);
    fs::create_directories(p.output_dir / "frames");
    fs::copy_file(e.image_path, p.output_dir / name, fs::copy_options::overwrite_existing);
    res.frames.push_back({e.rig.pose, e.rig.intrinsics, "paint", step, name,
                          e.rig.timestamp.empty() ? p.timestamp : e.rig.timestamp});
    if (progress) progress(step, total, res.texture);
  }
  if (total == 0) save_texture_checkpoint(p.output_dir, "paint", 0, res.texture);
  write_json_file(p.output_dir / "frames_paint.json", frames_to_json(res.frames));
  return res;
}

struct InpaintRunOptions {
  bool resume = false;
  std::optional<int> stop_after;  // stop once this step has completed
  ProgressFn progress;
};

struct InpaintStageResult {
  PaintedTexture texture;           // after hole filling when completed
  PaintedTexture before_fill;       // T_N
  std::vector<FrameRecord> frames;  // inpaint frames, steps 1..last
  int backend_calls = 0;
  int steps_executed = 0;  // steps run in this call
  int last_step = 0;
  bool completed = false;
};

// Per-step seed so a resumed run reproduces an uninterrupted one.
inline std::uint64_t step_seed(std::uint64_t seed, int step) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(step);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Rig whose camera is closest to `position`, for image-prompt guidance.
inline std::optional<std::string> nearest_rig_id(const Project& p, const Vec3& position) {
  std::optional<std::string> best;
  double best_d = std::numeric_limits<double>::infinity();
  for (const auto& e : p.rigs) {
    const double d = (e.rig.pose.position - position).norm();
    if (d < best_d) {
      best_d = d;
      best = e.rig.id;
    }
  }
  return best;
}

inline std::unique_ptr<InpaintBackend> make_backend(const InpaintSettings& s, const std::string& override_choice = {}) {
  std::string choice = override_choice.empty() ? s.backend : override_choice;
  if (choice == "url") {
    std::string url = s.url;
    if (url.empty())
      if (const char* env = std::getenv("FORGE_BACKEND_URL")) url = env;
    if (url.empty()) throw InvalidArgument("backend 'url' needs inpaint.url or FORGE_BACKEND_URL");
    choice = url;
  }
  if (choice == "mock") return std::make_unique<MockBackend>(MockConfig{s.grain_levels});
  if (choice.rfind("http://", 0) == 0 || choice.rfind("https://", 0) == 0) {
    RetryPolicy policy;
    policy.max_attempts = s.max_attempts;
    return std::make_unique<RemoteBackend>(choice, policy);
  }
  throw InvalidArgument("unknown inpaint backend '" + choice + "'");
}

// Walk the trajectory: render, mask the unpainted pixels, inpaint them,
// project the result back into the atlas. Every step is checkpointed
// (texture_inpaint_{t}, frames_inpaint.json, inpaint_state.json) so an
// interrupted run can resume from its last completed step. After the last
// step the remaining holes are filled by pull-push.
inline InpaintStageResult run_inpaint_stage(const Project& p, InpaintBackend& backend,
                                            const InpaintRunOptions& opts = {}) {
  if (!p.trajectory) throw InvalidArgument("project has no trajectory");
  const auto& t = p.terrain;
  const auto poses = p.trajectory_poses();
  const Intrinsics k = p.trajectory->intrinsics();
  const int total = static_cast<int>(poses.size());
  const fs::path out = p.output_dir;
  const fs::path state_path = out / "inpaint_state.json";

  InpaintStageResult res;
  int start = 0;
  if (opts.resume && fs::exists(state_path)) {
    const auto state = read_json_file(state_path);
    start = state.at("last_completed").get<int>();
    if (state.at("total").get<int>() != total) throw InvalidArgument("resume: trajectory length changed");
  }
  if (start > 0) {
    res.texture = load_texture_checkpoint(out, "inpaint", start, t.base.base);
    for (auto& f : frames_from_json(read_json_file(out / "frames_inpaint.json")))
      if (f.step <= start) res.frames.push_back(f);
  } else {
    const int w = static_cast<int>(p.rigs.size());
    if (!fs::exists(out / (texture_stem("paint", w) + ".json")))
      throw InvalidArgument("paint stage has not been run (missing " + texture_stem("paint", w) + ")");
    res.texture = load_texture_checkpoint(out, "paint", w, t.base.base);
  }

  RenderSettings rs = p.render;
  rs.unpainted_as_background = true;
  fs::create_directories(out / "frames");
  res.last_step = start;
  for (int step = start + 1; step <= total; ++step) {
    if (opts.stop_after && step > *opts.stop_after) break;
    const Pose& pose = poses[static_cast<std::size_t>(step - 1)];
    const RenderBuffers buf = render(t.mesh, t.uv, res.texture, k, pose, rs);
    const ImageMask mask = background_mask(buf.rgb, rs.background);
    RgbImage frame = buf.rgb;
    if (mask_any(mask)) {
      InpaintRequest req{buf.rgb, mask, encode_depth16(buf.depth),
                         Guidance{p.inpaint.prompt, nearest_rig_id(p, pose.position), p.inpaint.strength},
                         step_seed(p.inpaint.seed, step)};
      InpaintResponse resp;
      try {
        resp = composite(req, backend.inpaint(req));
      } catch (const Error& e) {
        throw BackendError("inpaint step " + std::to_string(step) + " failed (last completed step " +
                           std::to_string(step - 1) + ", resumable): " + e.what());
      }
      for (const auto& w : resp.warnings) spdlog::warn("inpaint step {}: {}", step, w);
      frame = std::move(resp.rgb);
      ++res.backend_calls;
    }
    res.texture = paint_view(res.texture, t.mesh, t.uv, frame, k, pose, buf, nullptr, "inpaint step " + std::to_string(step));

    char name[64];
    std::snprintf(name, sizeof name, "frames/inpaint_%04d.png", step);
    write_png(out / name, frame);
    res.frames.push_back({pose, k, "inpaint", step, name, p.timestamp});
    save_texture_checkpoint(out, "inpaint", step, res.texture);
    write_json_file(out / "frames_inpaint.json", frames_to_json(res.frames));
    write_json_file(state_path, {{"last_completed", step}, {"total", total}});
    res.last_step = step;
    ++res.steps_executed;
    if (opts.progress) opts.progress(step, total, res.texture);
  }

  res.before_fill = res.texture;
  if (res.last_step == total) {
    res.completed = true;
    res.texture = postprocess_fill(res.texture);
    save_texture_checkpoint(out, "final", total, res.texture);
    write_json_file(out / "texture_final.json", {{"checkpoint", texture_stem("final", total)},
                                                 {"hash", texture_hash(res.texture)}});
  }
  return res;
}

// Most advanced texture checkpoint on disk, or the base bake.
inline PaintedTexture latest_texture(const Project& p) {
  const fs::path out = p.output_dir;
  const auto& base = p.terrain.base.base;
  if (fs::exists(out / "texture_final.json")) {
    const auto fin = read_json_file(out / "texture_final.json");
    const std::string stem = fin.at("checkpoint").get<std::string>();
    return load_texture_checkpoint(out, "final", std::stoi(stem.substr(stem.rfind('_') + 1)), base);
  }
  if (fs::exists(out / "inpaint_state.json")) {
    const int t = read_json_file(out / "inpaint_state.json").at("last_completed").get<int>();
    if (t > 0) return load_texture_checkpoint(out, "inpaint", t, base);
  }
  for (int t = static_cast<int>(p.rigs.size()); t >= 0; --t)
    if (fs::exists(out / (texture_stem("paint", t) + ".json"))) return load_texture_checkpoint(out, "paint", t, base);
  return p.terrain.base;
}

inline std::vector<FrameRecord> load_run_frames(const Project& p) {
  std::vector<FrameRecord> frames;
  for (const char* name : {"frames_paint.json", "frames_inpaint.json"}) {
    const fs::path f = p.output_dir / name;
    if (!fs::exists(f)) continue;
    auto part = frames_from_json(read_json_file(f));
    frames.insert(frames.end(), part.begin(), part.end());
  }
  return frames;
}

// Posed-image manifest for downstream training: one entry per frame with
// intrinsics and the world-from-camera transform, plus terrain references.
inline nlohmann::json export_dataset(const Project& p, const std::vector<FrameRecord>& frames,
                                     const fs::path& manifest_path) {
  const fs::path out = p.output_dir;
  const fs::path mesh_path = out / "mesh.obj";
  write_obj(mesh_path, p.terrain.mesh, &p.terrain.uv);
  const auto rel = [&](const fs::path& f) { return fs::relative(f, manifest_path.parent_path()).generic_string(); };

  nlohmann::json m{{"name", p.name},
                   {"timestamp", p.timestamp},
                   {"mesh", rel(mesh_path)},
                   {"heightfield", p.doc.at("terrain").at("elevation")},
                   {"satellite", p.doc.at("terrain").at("satellite")},
                   {"origin", {{"lat", p.terrain.heightfield.origin.lat_deg}, {"lon", p.terrain.heightfield.origin.lon_deg}}}};
  if (fs::exists(out / "texture_final.json")) {
    const auto fin = read_json_file(out / "texture_final.json");
    m["texture"] = rel(out / (fin.at("checkpoint").get<std::string>() + ".png"));
  } else if (!frames.empty()) {
    int last_paint = 0;
    for (const auto& f : frames)
      if (f.stage == "paint") last_paint = std::max(last_paint, f.step);
    if (fs::exists(out / (texture_stem("paint", last_paint) + ".png")))
      m["texture"] = rel(out / (texture_stem("paint", last_paint) + ".png"));
  }
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& f : frames) {
    const fs::path img = out / f.image;
    if (!fs::exists(img)) throw IoError("missing frame file " + img.string());
    const Mat3 r_wc = f.pose.rotation().transpose();
    const Mat3 kk = f.intrinsics.matrix();
    nlohmann::json km = nlohmann::json::array(), rm = nlohmann::json::array();
    for (int i = 0; i < 3; ++i) {
      km.push_back({kk(i, 0), kk(i, 1), kk(i, 2)});
      rm.push_back({r_wc(i, 0), r_wc(i, 1), r_wc(i, 2)});
    }
    entries.push_back({{"image", rel(img)},
                       {"stage", f.stage},
                       {"step", f.step},
                       {"timestamp", f.timestamp},
                       {"width", f.intrinsics.width},
                       {"height", f.intrinsics.height},
                       {"intrinsics", km},
                       {"rotation", rm},
                       {"translation", {f.pose.position.x(), f.pose.position.y(), f.pose.position.z()}}});
  }
  m["frames"] = entries;
  write_json_file(manifest_path, m);
  return m;
}

// Pose and intrinsics of a manifest entry.
inline std::pair<Pose, Intrinsics> manifest_camera(const nlohmann::json& entry) {
  Mat3 r_wc, kk;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      r_wc(i, j) = entry.at("rotation")[i][j].get<double>();
      kk(i, j) = entry.at("intrinsics")[i][j].get<double>();
    }
  const auto& t = entry.at("translation");
  const Vec3 c(t[0].get<double>(), t[1].get<double>(), t[2].get<double>());
  return {Pose::from_rotation(r_wc.transpose(), c),
          Intrinsics{kk(0, 0), kk(1, 1), kk(0, 2), kk(1, 2), entry.at("width").get<int>(), entry.at("height").get<int>()}};
}

inline std::vector<HeldoutView> load_heldout_views(const Project& p) {
  std::vector<HeldoutView> views;
  for (const auto& e : p.heldout) {
    HeldoutView v{e.rig, read_rgb8(e.image_path), std::nullopt};
    if (e.eval_mask_path) v.mask = load_binary_mask(*e.eval_mask_path, v.image.width(), v.image.height());
    views.push_back(std::move(v));
  }
  return views;
}

}  // namespace forge
