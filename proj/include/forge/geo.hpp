#pragma once

#include <cmath>
#include <numbers>

#include <Eigen/Core>

#include "forge/error.hpp"

namespace forge {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kEarthRadiusM = 6378137.0;

inline double deg2rad(double d) { return d * std::numbers::pi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / std::numbers::pi; }

struct GeoPoint {
  double lat_deg = 0.0;
  double lon_deg = 0.0;
  double alt_m = 0.0;

  void validate() const {
    if (!(lat_deg >= -90.0 && lat_deg <= 90.0) || !(lon_deg >= -180.0 && lon_deg <= 180.0) ||
        !std::isfinite(alt_m))
      throw InvalidArgument("GeoPoint out of range");
  }
};

// Equirectangular local tangent approximation in an ENU frame anchored at
// `origin`. Valid for points within one degree of latitude of the origin.
inline Vec3 geo_to_local(const GeoPoint& p, const GeoPoint& origin) {
  p.validate();
  origin.validate();
  if (std::abs(p.lat_deg - origin.lat_deg) >= 1.0)
    throw InvalidArgument("geo_to_local: point farther than 1 degree of latitude from origin");
  const double dlat = deg2rad(p.lat_deg - origin.lat_deg);
  const double dlon = deg2rad(p.lon_deg - origin.lon_deg);
  return {kEarthRadiusM * std::cos(deg2rad(origin.lat_deg)) * dlon, kEarthRadiusM * dlat, p.alt_m - origin.alt_m};
}

inline GeoPoint local_to_geo(const Vec3& p, const GeoPoint& origin) {
  const double lat = origin.lat_deg + rad2deg(p.y() / kEarthRadiusM);
  const double lon = origin.lon_deg + rad2deg(p.x() / (kEarthRadiusM * std::cos(deg2rad(origin.lat_deg))));
  return {lat, lon, p.z() + origin.alt_m};
}

}  // namespace forge
