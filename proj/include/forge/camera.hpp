#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "forge/error.hpp"
#include "forge/geo.hpp"

namespace forge {

struct Intrinsics {
  double fx = 1.0, fy = 1.0;
  double cx = 0.0, cy = 0.0;
  int width = 1, height = 1;

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) throw InvalidArgument("Intrinsics: focal lengths must be positive");
    if (width <= 0 || height <= 0) throw InvalidArgument("Intrinsics: image size must be positive");
    if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height))
      throw InvalidArgument("Intrinsics: principal point outside the image");
  }

  // Same field of view at a different image size.
  Intrinsics scaled_to(int w, int h) const {
    const double sx = static_cast<double>(w) / width;
    const double sy = static_cast<double>(h) / height;
    return {fx * sx, fy * sy, cx * sx, cy * sy, w, h};
  }

  Mat3 matrix() const {
    Mat3 k;
    k << fx, 0, cx, 0, fy, cy, 0, 0, 1;
    return k;
  }

  // Centered principal point and square pixels for a horizontal FOV.
  static Intrinsics from_hfov(double hfov_rad, int w, int h) {
    const double f = 0.5 * w / std::tan(0.5 * hfov_rad);
    return {f, f, 0.5 * w, 0.5 * h, w, h};
  }

  bool operator==(const Intrinsics&) const = default;
};

// Camera pose in the local ENU frame.
//
// Camera axes: x right, y down, z forward. At yaw = pitch = roll = 0 the
// camera looks along +x (east); yaw turns counter-clockwise about +z and
// positive pitch tilts the view up.
struct Pose {
  Vec3 position = Vec3::Zero();
  double yaw = 0.0;
  double pitch = 0.0;
  double roll = 0.0;

  Vec3 forward() const {
    return {std::cos(yaw) * std::cos(pitch), std::sin(yaw) * std::cos(pitch), std::sin(pitch)};
  }

  // World-to-camera rotation; rows are the camera right, down and forward axes.
  Mat3 rotation() const {
    const Vec3 f = forward();
    const Vec3 right0(std::sin(yaw), -std::cos(yaw), 0.0);
    const Vec3 down0 = f.cross(right0);
    const double cr = std::cos(roll), sr = std::sin(roll);
    Mat3 r;
    r.row(0) = (cr * right0 + sr * down0).transpose();
    r.row(1) = (-sr * right0 + cr * down0).transpose();
    r.row(2) = f.transpose();
    return r;
  }

  Vec3 to_camera(const Vec3& world) const { return rotation() * (world - position); }
  Vec3 to_world(const Vec3& cam) const { return rotation().transpose() * cam + position; }

  void validate() const {
    const Mat3 r = rotation();
    if (!((r * r.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() <= 1e-9) ||
        !(std::abs(r.determinant() - 1.0) <= 1e-9) || !position.allFinite())
      throw InvalidArgument("Pose: rotation is not a proper orthonormal matrix");
  }

  // Recover Euler angles from a world-to-camera rotation.
  static Pose from_rotation(const Mat3& world_to_camera, const Vec3& position) {
    Pose p;
    p.position = position;
    const Vec3 f = world_to_camera.row(2).transpose();
    p.yaw = std::atan2(f.y(), f.x());
    p.pitch = std::asin(std::clamp(f.z(), -1.0, 1.0));
    const Vec3 right0(std::sin(p.yaw), -std::cos(p.yaw), 0.0);
    const Vec3 down0 = p.forward().cross(right0);
    const Vec3 right = world_to_camera.row(0).transpose();
    p.roll = std::atan2(right.dot(down0), right.dot(right0));
    return p;
  }

  static Pose look_at(const Vec3& eye, const Vec3& target) {
    const Vec3 d = target - eye;
    Pose p;
    p.position = eye;
    p.yaw = std::atan2(d.y(), d.x());
    p.pitch = std::atan2(d.z(), std::hypot(d.x(), d.y()));
    return p;
  }
};

struct Projection {
  Vec2 pixel;
  double depth;  // camera-frame z
};

// Pinhole projection of a camera-frame point. Points with z <= 0 are not
// projectable.
inline std::optional<Projection> project_camera_point(const Vec3& cam, const Intrinsics& k) {
  if (!(cam.z() > 0.0)) return std::nullopt;
  return Projection{{k.cx + k.fx * cam.x() / cam.z(), k.cy + k.fy * cam.y() / cam.z()}, cam.z()};
}

inline std::optional<Projection> project(const Vec3& world, const Intrinsics& k, const Pose& pose) {
  return project_camera_point(pose.to_camera(world), k);
}

// World-space direction (not normalized, camera z component 1) of the ray
// through continuous pixel (u, v).
inline Vec3 pixel_ray(double u, double v, const Intrinsics& k, const Pose& pose) {
  const Vec3 cam((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
  return pose.rotation().transpose() * cam;
}

struct Correspondence {
  Vec3 point;   // ENU meters
  Vec2 target;  // pixel

  bool operator==(const Correspondence&) const = default;
};

// Penalty in pixels charged for a correspondence that lands behind the camera.
inline constexpr double kUnprojectablePenalty = 1e4;

inline double correspondence_l1(const Correspondence& c, const Intrinsics& k, const Pose& pose) {
  const auto p = project(c.point, k, pose);
  if (!p) return kUnprojectablePenalty;
  return std::abs(p->pixel.x() - c.target.x()) + std::abs(p->pixel.y() - c.target.y());
}

// Mean L1 pixel distance between projected points and their targets.
inline double reprojection_loss(const std::vector<Correspondence>& corrs, const Intrinsics& k, const Pose& pose) {
  if (corrs.empty()) throw InvalidArgument("reprojection_loss: no correspondences");
  double sum = 0.0;
  for (const auto& c : corrs) sum += correspondence_l1(c, k, pose);
  return sum / static_cast<double>(corrs.size());
}

struct CameraRig {
  std::string id;
  Intrinsics intrinsics;
  Pose pose;
  std::vector<Correspondence> correspondences;
  std::string timestamp;  // ISO 8601
  bool optimized = false;
  bool trusted = false;
};

enum class CameraParam { Fx, Fy, Yaw, Pitch };

inline CameraParam camera_param_from_string(const std::string& s) {
  if (s == "fx") return CameraParam::Fx;
  if (s == "fy") return CameraParam::Fy;
  if (s == "yaw") return CameraParam::Yaw;
  if (s == "pitch") return CameraParam::Pitch;
  throw InvalidArgument("unknown camera parameter '" + s + "'");
}

struct OptimizeConfig {
  std::vector<CameraParam> free_params{CameraParam::Fx, CameraParam::Fy, CameraParam::Yaw};
  int iterations = 200;
  double initial_step = 0.02;   // in normalized parameter units
  double fd_relative_step = 1e-3;
  double min_step = 1e-12;
  double momentum = 0.9;  // weight of the previous accepted displacement
};

struct Residual {
  Vec2 target;
  Vec2 projected;  // NaN when not projectable
  double l1 = 0.0;
};

struct OptimizeResult {
  Intrinsics intrinsics;
  Pose pose;
  double initial_loss = 0.0;
  double loss = 0.0;
  std::vector<Residual> residuals;
  std::vector<double> loss_trace;  // loss of every accepted iterate, starting with the initial one
  std::vector<std::string> warnings;
};

inline std::vector<Residual> compute_residuals(const std::vector<Correspondence>& corrs, const Intrinsics& k,
                                               const Pose& pose) {
  std::vector<Residual> out;
  out.reserve(corrs.size());
  for (const auto& c : corrs) {
    const auto p = project(c.point, k, pose);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    out.push_back({c.target, p ? p->pixel : Vec2(nan, nan), correspondence_l1(c, k, pose)});
  }
  return out;
}

namespace detail {

// Parameters are optimized in normalized units: focal lengths relative to
// their initial value, angles in radians.
struct CameraParamVector {
  std::vector<CameraParam> which;
  Intrinsics k0;
  Pose pose0;

  Eigen::VectorXd pack(const Intrinsics& k, const Pose& pose) const {
    Eigen::VectorXd v(static_cast<Eigen::Index>(which.size()));
    for (std::size_t i = 0; i < which.size(); ++i) {
      switch (which[i]) {
        case CameraParam::Fx: v[i] = k.fx / k0.fx; break;
        case CameraParam::Fy: v[i] = k.fy / k0.fy; break;
        case CameraParam::Yaw: v[i] = pose.yaw; break;
        case CameraParam::Pitch: v[i] = pose.pitch; break;
      }
    }
    return v;
  }

  void unpack(const Eigen::VectorXd& v, Intrinsics& k, Pose& pose) const {
    k = k0;
    pose = pose0;
    for (std::size_t i = 0; i < which.size(); ++i) {
      switch (which[i]) {
        case CameraParam::Fx: k.fx = v[i] * k0.fx; break;
        case CameraParam::Fy: k.fy = v[i] * k0.fy; break;
        case CameraParam::Yaw: pose.yaw = v[i]; break;
        case CameraParam::Pitch: pose.pitch = v[i]; break;
      }
    }
  }
};

// Unit directions +-e_i and (+-e_i +- e_j)/sqrt(2).
inline std::vector<Eigen::VectorXd> compass_directions(Eigen::Index n) {
  std::vector<Eigen::VectorXd> out;
  for (Eigen::Index i = 0; i < n; ++i)
    for (double a : {1.0, -1.0}) {
      out.push_back(Eigen::VectorXd::Unit(n, i) * a);
      for (Eigen::Index j = i + 1; j < n; ++j)
        for (double b : {1.0, -1.0})
          out.push_back((Eigen::VectorXd::Unit(n, i) * a + Eigen::VectorXd::Unit(n, j) * b) / std::sqrt(2.0));
    }
  return out;
}

}  // namespace detail

// Refine the free camera parameters by descent on the mean L1 reprojection
// loss. Gradients are central finite differences; the step is halved
// whenever a trial increases the loss and grown after a success, and a
// compass search takes over when the gradient step stalls. The best
// iterate seen is returned, so the result never scores worse than the
// initialization.
inline OptimizeResult optimize_camera(const CameraRig& rig, const OptimizeConfig& cfg = {}) {
  if (rig.correspondences.empty()) throw InvalidArgument("optimize_camera: rig has no correspondences");
  rig.intrinsics.validate();
  OptimizeResult res;
  if (rig.correspondences.size() < 3)
    res.warnings.push_back("fewer than 3 correspondences; parameters are poorly constrained");

  detail::CameraParamVector pv{cfg.free_params, rig.intrinsics, rig.pose};
  const auto& corrs = rig.correspondences;
  const auto loss_at = [&](const Eigen::VectorXd& theta) {
    Intrinsics k;
    Pose pose;
    pv.unpack(theta, k, pose);
    if (!(k.fx > 0.0) || !(k.fy > 0.0)) return std::numeric_limits<double>::infinity();
    const double l = reprojection_loss(corrs, k, pose);
    if (!std::isfinite(l)) throw NumericError("optimize_camera: non-finite loss");
    return l;
  };

  Eigen::VectorXd theta = pv.pack(rig.intrinsics, rig.pose);
  double loss = loss_at(theta);
  res.initial_loss = loss;
  res.loss_trace.push_back(loss);
  double step = cfg.initial_step;
  Eigen::VectorXd velocity;

  for (int it = 0; it < cfg.iterations && theta.size() > 0; ++it) {
    if (loss == 0.0 || step < cfg.min_step) break;
    Eigen::VectorXd grad(theta.size());
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      const double h = cfg.fd_relative_step * std::max(std::abs(theta[i]), 1.0);
      Eigen::VectorXd tp = theta, tm = theta;
      tp[i] += h;
      tm[i] -= h;
      grad[i] = (loss_at(tp) - loss_at(tm)) / (2.0 * h);
    }
    if (!grad.allFinite()) throw NumericError("optimize_camera: non-finite gradient");
    const double gnorm = grad.norm();
    if (gnorm == 0.0) break;
    const Eigen::VectorXd dir = -grad / gnorm;
    // Heavy-ball trial first: on the kinked L1 surface plain descent
    // zig-zags across valleys, and momentum cancels the oscillation.
    bool accepted = false;
    if (velocity.size() > 0) {
      const Eigen::VectorXd trial = theta + cfg.momentum * velocity + step * dir;
      const double trial_loss = loss_at(trial);
      if (trial_loss < loss) {
        velocity = trial - theta;
        theta = trial;
        loss = trial_loss;
        step *= 1.5;
        accepted = true;
      }
    }
    // Backtrack: halve until the trial improves or the step vanishes.
    while (!accepted && step >= cfg.min_step) {
      const Eigen::VectorXd trial = theta + step * dir;
      const double trial_loss = loss_at(trial);
      if (trial_loss < loss) {
        velocity = trial - theta;
        theta = trial;
        loss = trial_loss;
        step *= 1.5;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    // At a kink of the L1 surface the finite-difference gradient need not
    // be a descent direction. Fall back to a compass search over axis and
    // diagonal directions before giving up.
    if (!accepted) {
      velocity.resize(0);
      for (double s = cfg.initial_step; !accepted && s >= cfg.min_step; s *= 0.5) {
        for (const auto& d : detail::compass_directions(theta.size())) {
          const Eigen::VectorXd trial = theta + s * d;
          const double trial_loss = loss_at(trial);
          if (trial_loss < loss) {
            theta = trial;
            loss = trial_loss;
            step = s;
            accepted = true;
            break;
          }
        }
      }
      if (!accepted) break;
    }
    res.loss_trace.push_back(loss);
  }

  pv.unpack(theta, res.intrinsics, res.pose);
  res.loss = loss;
  res.residuals = compute_residuals(corrs, res.intrinsics, res.pose);
  return res;
}

// One "x y z u v" record per line; blank lines and '#' comments are skipped.
inline std::vector<Correspondence> parse_correspondences(std::istream& in) {
  std::vector<Correspondence> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ss(line);
    Correspondence c;
    double x, y, z, u, v;
    if (!(ss >> x >> y >> z >> u >> v)) throw IoError("correspondence file: malformed line " + std::to_string(lineno));
    std::string extra;
    if (ss >> extra) throw IoError("correspondence file: trailing data on line " + std::to_string(lineno));
    c.point = {x, y, z};
    c.target = {u, v};
    out.push_back(c);
  }
  return out;
}

inline std::vector<Correspondence> load_correspondences(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return parse_correspondences(in);
}

inline void save_correspondences(const std::filesystem::path& path, const std::vector<Correspondence>& corrs) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(17);
  for (const auto& c : corrs)
    out << c.point.x() << ' ' << c.point.y() << ' ' << c.point.z() << ' ' << c.target.x() << ' ' << c.target.y()
        << '\n';
}

inline void validate_correspondences(const std::vector<Correspondence>& corrs, const Intrinsics& k) {
  for (const auto& c : corrs)
    if (!(c.target.x() >= 0.0 && c.target.x() <= k.width && c.target.y() >= 0.0 && c.target.y() <= k.height))
      throw InvalidArgument("correspondence target outside the image bounds");
}

// JSON rig descriptor: {id, geo:{lat,lon,alt?}, yaw_deg, pitch_deg?, roll_deg?,
// fx, fy, cx, cy, width, height, timestamp, optimized?, trusted?}.
struct RigDescriptor {
  std::string id;
  GeoPoint geo;
  bool has_alt = false;
  double yaw_deg = 0.0, pitch_deg = 0.0, roll_deg = 0.0;
  Intrinsics intrinsics;
  std::string timestamp;
  bool optimized = false;
  bool trusted = false;

  static RigDescriptor from_json(const nlohmann::json& j) {
    RigDescriptor d;
    try {
      d.id = j.at("id").get<std::string>();
      const auto& g = j.at("geo");
      d.geo.lat_deg = g.at("lat").get<double>();
      d.geo.lon_deg = g.at("lon").get<double>();
      d.has_alt = g.contains("alt") && !g.at("alt").is_null();
      if (d.has_alt) d.geo.alt_m = g.at("alt").get<double>();
      d.yaw_deg = j.at("yaw_deg").get<double>();
      d.pitch_deg = j.value("pitch_deg", 0.0);
      d.roll_deg = j.value("roll_deg", 0.0);
      d.intrinsics = {j.at("fx").get<double>(), j.at("fy").get<double>(), j.at("cx").get<double>(),
                      j.at("cy").get<double>(), j.at("width").get<int>(), j.at("height").get<int>()};
      d.timestamp = j.value("timestamp", std::string{});
      d.optimized = j.value("optimized", false);
      d.trusted = j.value("trusted", false);
    } catch (const nlohmann::json::exception& e) {
      throw InvalidArgument("rig descriptor: " + std::string(e.what()));
    }
    d.geo.validate();
    d.intrinsics.validate();
    return d;
  }

  nlohmann::json to_json() const {
    nlohmann::json g{{"lat", geo.lat_deg}, {"lon", geo.lon_deg}};
    if (has_alt) g["alt"] = geo.alt_m;
    return {{"id", id},
            {"geo", g},
            {"yaw_deg", yaw_deg},
            {"pitch_deg", pitch_deg},
            {"roll_deg", roll_deg},
            {"fx", intrinsics.fx},
            {"fy", intrinsics.fy},
            {"cx", intrinsics.cx},
            {"cy", intrinsics.cy},
            {"width", intrinsics.width},
            {"height", intrinsics.height},
            {"timestamp", timestamp},
            {"optimized", optimized},
            {"trusted", trusted}};
  }
};

// Mast height added to the ground elevation when a rig has no altitude.
inline constexpr double kDefaultMastOffsetM = 5.0;

// Build a rig from its descriptor. `ground_height(x, y)` supplies the
// terrain elevation used when the descriptor omits an altitude.
inline CameraRig resolve_rig(const RigDescriptor& d, const GeoPoint& origin,
                             const std::function<double(double, double)>& ground_height) {
  CameraRig rig;
  rig.id = d.id;
  rig.intrinsics = d.intrinsics;
  rig.timestamp = d.timestamp;
  rig.optimized = d.optimized;
  rig.trusted = d.trusted;
  Vec3 p = geo_to_local(GeoPoint{d.geo.lat_deg, d.geo.lon_deg, d.has_alt ? d.geo.alt_m : origin.alt_m}, origin);
  if (!d.has_alt) p.z() = ground_height(p.x(), p.y()) + kDefaultMastOffsetM;
  rig.pose.position = p;
  rig.pose.yaw = deg2rad(d.yaw_deg);
  rig.pose.pitch = deg2rad(d.pitch_deg);
  rig.pose.roll = deg2rad(d.roll_deg);
  return rig;
}

}  // namespace forge
