#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "trajcur/error.hpp"
#include "trajcur/model.hpp"
#include "trajcur/viridis_table.hpp"

namespace trajcur {

enum class Axis { X = 0, Y = 1, Z = 2 };

using AxisPair = std::pair<Axis, Axis>;
using Rgb = std::array<std::uint8_t, 3>;

/// Frame-convention fixes applied to every pose. Position and rotation
/// each get: an optional axis swap, per-axis sign inversion, and an
/// additive offset; positions are also scaled uniformly.
struct OffsetSettings {
  Vec3 positionOffset{};
  Vec3 rotationOffset{};  // radians, (roll, pitch, yaw)
  std::array<bool, 3> invertPosition{false, false, false};
  std::array<bool, 3> invertRotation{false, false, false};
  std::optional<AxisPair> swapPositionAxes;
  std::optional<AxisPair> swapRotationAxes;
  double uniformScale{1.0};
  bool ignoreAltitude{false};
  double zTimeRate{0.0};  // meters per pose index; 0 disables

  friend bool operator==(const OffsetSettings&, const OffsetSettings&) = default;
};

inline void validate(const OffsetSettings& s) {
  if (!(s.uniformScale > 0.0) || !std::isfinite(s.uniformScale))
    throw Error(ErrorCode::InvalidSettings, "uniformScale must be positive", {}, "uniformScale");
  if (!(s.zTimeRate >= 0.0) || !std::isfinite(s.zTimeRate))
    throw Error(ErrorCode::InvalidSettings, "zTimeRate must be nonnegative", {}, "zTimeRate");
  for (std::size_t k = 0; k < 3; ++k)
    if (!std::isfinite(s.positionOffset[k]) || !std::isfinite(s.rotationOffset[k]))
      throw Error(ErrorCode::InvalidSettings, "offsets must be finite");
}

/// Order: swap, invert, scale, offset for positions; swap, invert, offset
/// for angles, which are then wrapped to [-pi, pi).
inline Trajectory apply_offsets(const Trajectory& t, const OffsetSettings& s) {
  validate(s);
  Trajectory out = t;
  for (Pose& p : out.poses) {
    Vec3 v = p.position;
    if (s.swapPositionAxes)
      std::swap(v[static_cast<std::size_t>(s.swapPositionAxes->first)],
                v[static_cast<std::size_t>(s.swapPositionAxes->second)]);
    for (std::size_t k = 0; k < 3; ++k)
      if (s.invertPosition[k]) v[k] = -v[k];
    v = s.uniformScale * v;
    p.position = v + s.positionOffset;

    if (p.orientation) {
      Orientation o = *p.orientation;
      if (s.swapRotationAxes)
        std::swap(o[static_cast<std::size_t>(s.swapRotationAxes->first)],
                  o[static_cast<std::size_t>(s.swapRotationAxes->second)]);
      for (std::size_t k = 0; k < 3; ++k) {
        if (s.invertRotation[k]) o[k] = -o[k];
        o[k] += s.rotationOffset[k];
      }
      p.orientation = o.normalized();
    }
  }
  return out;
}

inline Trajectory flatten_altitude(const Trajectory& t) {
  Trajectory out = t;
  for (Pose& p : out.poses) p.position.z = 0.0;
  return out;
}

/// Replaces z with rate * pose index so overlapping passes separate in height.
inline Trajectory encode_time_in_z(const Trajectory& t, double rate) {
  if (!(rate >= 0.0)) throw Error(ErrorCode::InvalidSettings, "rate must be nonnegative", {}, "zTimeRate");
  Trajectory out = t;
  for (Pose& p : out.poses) p.position.z = rate * static_cast<double>(p.index);
  return out;
}

/// Offsets, then the altitude mode: a positive zTimeRate takes precedence
/// over ignoreAltitude.
inline Trajectory apply_scene_settings(const Trajectory& t, const OffsetSettings& s) {
  Trajectory out = apply_offsets(t, s);
  if (s.zTimeRate > 0.0) return encode_time_in_z(out, s.zTimeRate);
  if (s.ignoreAltitude) return flatten_altitude(out);
  return out;
}

inline constexpr double kDefaultDepthPercentile = 90.0;

/// Nearest-rank percentile: the element at rank ceil(p/100 * n) of the
/// ascending sort.
inline double depth_percentile_threshold(std::span<const double> depths, double p = kDefaultDepthPercentile) {
  if (depths.empty()) throw Error(ErrorCode::EmptyInput, "no depths");
  if (!(p > 0.0 && p <= 100.0)) throw Error(ErrorCode::InvalidParams, "percentile must be in (0, 100]", {}, "p");
  const auto n = depths.size();
  auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(n) / 100.0));
  rank = std::clamp<std::size_t>(rank, 1, n);
  std::vector<double> work(depths.begin(), depths.end());
  std::nth_element(work.begin(), work.begin() + static_cast<std::ptrdiff_t>(rank - 1), work.end());
  return work[rank - 1];
}

/// Maps depths to [0, 1] relative to the percentile threshold; anything
/// beyond the threshold saturates at 1.
inline std::vector<double> normalize_depths_for_color(std::span<const double> depths,
                                                      double p = kDefaultDepthPercentile) {
  const double threshold = depth_percentile_threshold(depths, p);
  std::vector<double> out(depths.size(), 0.0);
  if (threshold <= 0.0) return out;
  std::transform(depths.begin(), depths.end(), out.begin(),
                 [&](double d) { return std::clamp(d / threshold, 0.0, 1.0); });
  return out;
}

namespace detail {
inline std::uint8_t round_channel(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
}
}  // namespace detail

/// Linear interpolation in the 256-entry viridis table; u is clamped to [0, 1].
inline Rgb colormap_viridis(double u) {
  if (!(u > 0.0)) return detail::kViridis.front();  // also catches NaN
  if (u >= 1.0) return detail::kViridis.back();
  const double pos = u * 255.0;
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const double w = pos - static_cast<double>(lo);
  const auto& a = detail::kViridis[lo];
  const auto& b = detail::kViridis[std::min<std::size_t>(lo + 1, 255)];
  Rgb out{};
  for (std::size_t k = 0; k < 3; ++k) out[k] = detail::round_channel((1.0 - w) * a[k] + w * b[k]);
  return out;
}

inline constexpr Rgb kGradientStart{255, 0, 0};
inline constexpr Rgb kGradientEnd{255, 165, 0};

/// Color of pose i out of n, blended from `start` to `end` (rounded half up).
inline Rgb gradient_color_for_index(std::size_t i, std::size_t n, Rgb start = kGradientStart,
                                    Rgb end = kGradientEnd) {
  if (n == 0 || i >= n) throw Error(ErrorCode::IndexOutOfRange, "index outside [0, n)");
  if (n == 1) return start;
  const double w = static_cast<double>(i) / static_cast<double>(n - 1);
  Rgb out{};
  for (std::size_t k = 0; k < 3; ++k) out[k] = detail::round_channel(start[k] + w * (end[k] - start[k]));
  return out;
}

}  // namespace trajcur
