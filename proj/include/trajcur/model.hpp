#pragma once

// Canonical pose/trajectory types and the geodesy helpers every other
// module leans on. All angles are radians unless a name says otherwise.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace trajcur {

inline constexpr double kEarthRadiusMeters = 6'371'000.0;
inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

constexpr double deg_to_rad(double deg) noexcept { return deg * (kPi / 180.0); }
constexpr double rad_to_deg(double rad) noexcept { return rad * (180.0 / kPi); }

/// Wrap an angle into [-pi, pi).
inline double normalize_angle(double a) noexcept {
  double r = a - kTwoPi * std::floor((a + kPi) / kTwoPi);
  if (r >= kPi) r -= kTwoPi;
  if (r < -kPi) r = -kPi;
  return r;
}

/// Wrap a longitude into [-180, 180).
inline double normalize_longitude(double lon) noexcept {
  double r = lon - 360.0 * std::floor((lon + 180.0) / 360.0);
  if (r >= 180.0) r -= 360.0;
  return r;
}

struct Vec3 {
  double x{0};
  double y{0};
  double z{0};

  double& operator[](std::size_t i) noexcept { return i == 0 ? x : (i == 1 ? y : z); }
  double operator[](std::size_t i) const noexcept { return i == 0 ? x : (i == 1 ? y : z); }

  friend Vec3 operator+(Vec3 a, Vec3 b) noexcept { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend Vec3 operator-(Vec3 a, Vec3 b) noexcept { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend Vec3 operator*(double s, Vec3 v) noexcept { return {s * v.x, s * v.y, s * v.z}; }
  friend bool operator==(const Vec3&, const Vec3&) = default;
};

inline double norm(Vec3 v) noexcept { return std::sqrt(v.x * v.x + v.y * v.y + v.z * v.z); }
inline double distance(Vec3 a, Vec3 b) noexcept { return norm(a - b); }

/// Roll, pitch, yaw in radians, each in [-pi, pi). Yaw is measured from
/// north (the local +y axis), counter-clockwise positive.
struct Orientation {
  double roll{0};
  double pitch{0};
  double yaw{0};

  double& operator[](std::size_t i) noexcept { return i == 0 ? roll : (i == 1 ? pitch : yaw); }
  double operator[](std::size_t i) const noexcept { return i == 0 ? roll : (i == 1 ? pitch : yaw); }

  [[nodiscard]] Orientation normalized() const noexcept {
    return {normalize_angle(roll), normalize_angle(pitch), normalize_angle(yaw)};
  }
  friend bool operator==(const Orientation&, const Orientation&) = default;
};

struct GeoCoordinate {
  double latitude{0};   // degrees, [-90, 90]
  double longitude{0};  // degrees, [-180, 180)

  /// Clamps latitude and wraps longitude.
  static GeoCoordinate make(double lat, double lon) noexcept {
    return {std::clamp(lat, -90.0, 90.0), normalize_longitude(lon)};
  }
  [[nodiscard]] bool valid() const noexcept {
    return std::isfinite(latitude) && std::isfinite(longitude) && latitude >= -90.0 &&
           latitude <= 90.0 && longitude >= -180.0 && longitude < 180.0;
  }
  friend bool operator==(const GeoCoordinate&, const GeoCoordinate&) = default;
};

struct Pose {
  std::size_t index{0};
  double timestamp{0};  // seconds
  Vec3 position{};      // meters, local east-north-up (or the source's native frame)
  std::optional<Orientation> orientation;
  std::optional<GeoCoordinate> gps;
  std::optional<double> altitude;
  std::optional<std::size_t> imageIndex;
  std::optional<std::string> image;

  friend bool operator==(const Pose&, const Pose&) = default;
};

struct ImageEntry {
  double timestamp{0};
  std::string path;
  friend bool operator==(const ImageEntry&, const ImageEntry&) = default;
};

struct PointCloud {
  std::vector<Vec3> points;
  std::vector<std::array<std::uint8_t, 3>> colors;  // empty or same length as points
  friend bool operator==(const PointCloud&, const PointCloud&) = default;
};

enum class SourceFormat { Kitti, CsvIns, Nvm, BddJson, Delimited };

constexpr std::string_view to_string(SourceFormat f) noexcept {
  switch (f) {
    case SourceFormat::Kitti: return "kitti";
    case SourceFormat::CsvIns: return "csv-ins";
    case SourceFormat::Nvm: return "nvm";
    case SourceFormat::BddJson: return "bdd-json";
    case SourceFormat::Delimited: return "delimited-generic";
  }
  return "unknown";
}

/// Accepts the wire names plus "delimited" as shorthand for the generic parser.
inline std::optional<SourceFormat> source_format_from_string(std::string_view s) noexcept {
  if (s == "kitti") return SourceFormat::Kitti;
  if (s == "csv-ins") return SourceFormat::CsvIns;
  if (s == "nvm") return SourceFormat::Nvm;
  if (s == "bdd-json") return SourceFormat::BddJson;
  if (s == "delimited-generic" || s == "delimited") return SourceFormat::Delimited;
  return std::nullopt;
}

struct Trajectory {
  std::string id;
  SourceFormat sourceFormat{SourceFormat::Kitti};
  std::vector<Pose> poses;
  std::vector<ImageEntry> imageManifest;
  std::optional<PointCloud> pointCloud;
  std::optional<GeoCoordinate> origin;  // local-frame anchor when poses carry gps

  [[nodiscard]] std::size_t size() const noexcept { return poses.size(); }
  [[nodiscard]] bool empty() const noexcept { return poses.empty(); }
  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

/// Great-circle distance in meters on a sphere of radius kEarthRadiusMeters.
inline double haversine_distance(const GeoCoordinate& a, const GeoCoordinate& b) noexcept {
  const double lat1 = deg_to_rad(a.latitude);
  const double lat2 = deg_to_rad(b.latitude);
  const double dlat = lat2 - lat1;
  const double dlon = deg_to_rad(b.longitude - a.longitude);
  const double s1 = std::sin(dlat / 2.0);
  const double s2 = std::sin(dlon / 2.0);
  double h = s1 * s1 + std::cos(lat1) * std::cos(lat2) * s2 * s2;
  h = std::clamp(h, 0.0, 1.0);
  return 2.0 * kEarthRadiusMeters * std::asin(std::sqrt(h));
}

/// Shortest-arc absolute difference of two headings, in [0, pi].
inline double heading_difference(double a, double b) noexcept {
  return std::abs(normalize_angle(a - b));
}

struct LocalXY {
  double x{0};  // meters east
  double y{0};  // meters north
};

/// Equirectangular tangent-plane projection about `origin`.
inline LocalXY gps_to_local(const GeoCoordinate& p, const GeoCoordinate& origin) noexcept {
  const double dlon = deg_to_rad(normalize_longitude(p.longitude - origin.longitude));
  const double dlat = deg_to_rad(p.latitude - origin.latitude);
  return {kEarthRadiusMeters * dlon * std::cos(deg_to_rad(origin.latitude)),
          kEarthRadiusMeters * dlat};
}

/// Distance travelled between two consecutive poses: Euclidean in the local
/// frame. Used by sampling, along-track windows and path length alike.
inline double step_distance(const Pose& a, const Pose& b) noexcept {
  return distance(a.position, b.position);
}

inline double path_length(std::span<const Pose> poses) noexcept {
  double total = 0.0;
  for (std::size_t i = 1; i < poses.size(); ++i) total += step_distance(poses[i - 1], poses[i]);
  return total;
}

}  // namespace trajcur
