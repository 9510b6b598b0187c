#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "forge/camera.hpp"
#include "forge/error.hpp"
#include "forge/geo.hpp"
#include "forge/terrain.hpp"

namespace forge {

enum class TrajectoryMode { Linear, Cubic };
enum class OrientationPolicy { LookAhead, LookTarget };

inline TrajectoryMode trajectory_mode_from_string(const std::string& s) {
  if (s == "linear") return TrajectoryMode::Linear;
  if (s == "cubic") return TrajectoryMode::Cubic;
  throw InvalidArgument("unknown trajectory mode '" + s + "'");
}

inline OrientationPolicy orientation_from_string(const std::string& s) {
  if (s == "look_ahead") return OrientationPolicy::LookAhead;
  if (s == "look_target") return OrientationPolicy::LookTarget;
  throw InvalidArgument("unknown orientation policy '" + s + "'");
}

struct Waypoint {
  GeoPoint geo;
  std::optional<GeoPoint> look;
  std::optional<double> agl_m;
};

struct TrajectoryConfig {
  TrajectoryMode mode = TrajectoryMode::Cubic;
  int samples = 16;
  double default_agl_m = 200.0;
  OrientationPolicy orientation = OrientationPolicy::LookAhead;
};

// [{lat, lon, agl_m?, look?: {lat, lon, alt}}]
inline std::vector<Waypoint> parse_waypoints(const nlohmann::json& j) {
  if (!j.is_array()) throw InvalidArgument("waypoint manifest must be a JSON array");
  std::vector<Waypoint> out;
  try {
    for (const auto& w : j) {
      Waypoint wp;
      wp.geo = {w.at("lat").get<double>(), w.at("lon").get<double>(), 0.0};
      if (w.contains("agl_m") && !w["agl_m"].is_null()) wp.agl_m = w["agl_m"].get<double>();
      if (w.contains("look") && !w["look"].is_null()) {
        const auto& l = w["look"];
        wp.look = GeoPoint{l.at("lat").get<double>(), l.at("lon").get<double>(), l.value("alt", 0.0)};
      }
      if (wp.agl_m && *wp.agl_m < 0.0) throw InvalidArgument("waypoint altitude above ground must be >= 0");
      out.push_back(wp);
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument("waypoint manifest: " + std::string(e.what()));
  }
  return out;
}

// Planar curve through control points: a polyline, or a centripetal
// Catmull-Rom spline (alpha = 0.5) with duplicated end points. Segment i
// runs from point i to point i+1 for parameter s in [0, 1].
class PlanarPath {
 public:
  static constexpr int kTableSubdivisions = 64;

  PlanarPath(std::vector<Vec2> points, TrajectoryMode mode) : pts_(std::move(points)), mode_(mode) {
    if (pts_.size() < 2) throw InvalidArgument("PlanarPath: need at least 2 points");
    for (std::size_t i = 0; i + 1 < pts_.size(); ++i)
      if ((pts_[i + 1] - pts_[i]).norm() == 0.0) throw InvalidArgument("PlanarPath: consecutive points coincide");
    build_table();
  }

  std::size_t segments() const { return pts_.size() - 1; }
  double length() const { return table_.back(); }

  Vec2 eval(std::size_t seg, double s) const {
    const Vec2& p1 = pts_[seg];
    const Vec2& p2 = pts_[seg + 1];
    if (mode_ == TrajectoryMode::Linear) return p1 + s * (p2 - p1);
    const Vec2& p0 = seg == 0 ? p1 : pts_[seg - 1];
    const Vec2& p3 = seg + 2 < pts_.size() ? pts_[seg + 2] : p2;
    // Barry-Goldman pyramid on centripetal knots.
    const double t0 = 0.0;
    const double t1 = t0 + std::sqrt((p1 - p0).norm());
    const double t2 = t1 + std::sqrt((p2 - p1).norm());
    const double t3 = t2 + std::sqrt((p3 - p2).norm());
    const double t = t1 + s * (t2 - t1);
    const auto lerp = [t](const Vec2& a, const Vec2& b, double ta, double tb) -> Vec2 {
      if (tb == ta) return b;
      return ((tb - t) * a + (t - ta) * b) / (tb - ta);
    };
    const Vec2 a1 = t1 == t0 ? p1 : lerp(p0, p1, t0, t1);
    const Vec2 a2 = lerp(p1, p2, t1, t2);
    const Vec2 a3 = t3 == t2 ? p2 : lerp(p2, p3, t2, t3);
    const Vec2 b1 = lerp(a1, a2, t0, t2);
    const Vec2 b2 = lerp(a2, a3, t1, t3);
    return lerp(b1, b2, t1, t2);
  }

  struct Location {
    std::size_t segment;
    double s;
  };

  // Invert arc length through the lookup table.
  Location locate(double arc) const {
    arc = std::clamp(arc, 0.0, length());
    const auto it = std::upper_bound(table_.begin(), table_.end(), arc);
    std::size_t hi = static_cast<std::size_t>(std::distance(table_.begin(), it));
    if (hi >= table_.size()) hi = table_.size() - 1;
    if (hi == 0) hi = 1;
    const std::size_t lo = hi - 1;
    const double span = table_[hi] - table_[lo];
    const double frac = span > 0.0 ? (arc - table_[lo]) / span : 0.0;
    const double global = (static_cast<double>(lo) + frac) / kTableSubdivisions;
    std::size_t seg = std::min(static_cast<std::size_t>(global), segments() - 1);
    return {seg, std::clamp(global - static_cast<double>(seg), 0.0, 1.0)};
  }

  Vec2 at_arc_length(double arc) const {
    const auto loc = locate(arc);
    return eval(loc.segment, loc.s);
  }

 private:
  void build_table() {
    table_.assign(1, 0.0);
    Vec2 prev = pts_[0];
    for (std::size_t seg = 0; seg < segments(); ++seg) {
      for (int k = 1; k <= kTableSubdivisions; ++k) {
        const Vec2 p = eval(seg, static_cast<double>(k) / kTableSubdivisions);
        table_.push_back(table_.back() + (p - prev).norm());
        prev = p;
      }
    }
  }

  std::vector<Vec2> pts_;
  TrajectoryMode mode_;
  std::vector<double> table_;  // cumulative length at seg + k/64
};

// Sample N arc-length-uniform camera poses along the path through the
// waypoints, `agl` meters above the triangulated terrain.
inline std::vector<Pose> build_trajectory(const std::vector<Waypoint>& waypoints, const TrajectoryConfig& cfg,
                                          const HeightField& hf) {
  if (waypoints.size() < 2) throw InvalidArgument("build_trajectory: need at least 2 waypoints");
  if (cfg.samples < 2) throw InvalidArgument("build_trajectory: need at least 2 samples");
  const GeoPoint origin{hf.origin.lat_deg, hf.origin.lon_deg, 0.0};
  std::vector<Vec2> xy;
  std::vector<double> agl;
  std::vector<Vec3> look;
  for (const auto& w : waypoints) {
    const Vec3 p = geo_to_local(GeoPoint{w.geo.lat_deg, w.geo.lon_deg, 0.0}, origin);
    if (!hf.contains(p.x(), p.y())) throw InvalidArgument("build_trajectory: waypoint outside the heightfield extent");
    xy.emplace_back(p.x(), p.y());
    agl.push_back(w.agl_m.value_or(cfg.default_agl_m));
    if (cfg.orientation == OrientationPolicy::LookTarget) {
      if (!w.look) throw InvalidArgument("build_trajectory: look_target policy needs a look target on every waypoint");
      look.push_back(geo_to_local(*w.look, origin));
    }
  }

  const PlanarPath path(xy, cfg.mode);
  std::vector<Vec3> pos;
  std::vector<Vec3> targets;
  for (int k = 0; k < cfg.samples; ++k) {
    const double arc = path.length() * k / (cfg.samples - 1);
    const auto loc = path.locate(arc);
    const Vec2 p = k == cfg.samples - 1 ? xy.back() : (k == 0 ? xy.front() : path.eval(loc.segment, loc.s));
    const std::size_t seg = k == cfg.samples - 1 ? path.segments() - 1 : loc.segment;
    const double s = k == cfg.samples - 1 ? 1.0 : (k == 0 ? 0.0 : loc.s);
    const double h = agl[seg] + s * (agl[seg + 1] - agl[seg]);
    pos.emplace_back(p.x(), p.y(), hf.surface_height(p.x(), p.y()) + h);
    if (!look.empty()) targets.push_back(look[seg] + s * (look[seg + 1] - look[seg]));
  }

  std::vector<Pose> poses(pos.size());
  for (std::size_t k = 0; k < pos.size(); ++k) {
    if (cfg.orientation == OrientationPolicy::LookTarget) {
      poses[k] = Pose::look_at(pos[k], targets[k]);
    } else if (k + 1 < pos.size()) {
      poses[k] = Pose::look_at(pos[k], pos[k + 1]);
    } else {
      poses[k] = poses[k - 1];
      poses[k].position = pos[k];
    }
  }
  return poses;
}

}  // namespace forge
