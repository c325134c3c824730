#pragma once

// Pose correspondences between two traversals. Each (query, candidate)
// pair is scored by
//
//   loss = alpha * dd + beta* * dtheta,
//   beta* = beta * thetaAcc / tauBetaTheta   if thetaAcc > tauBetaTheta
//         = beta                             otherwise
//
// where dd is the great-circle distance (m), dtheta the heading difference
// (deg) and thetaAcc the heading change accumulated around the candidate
// within tauBetaD metres of track. Pairs farther than maxDistance or with
// loss above tauLoss are inadmissible; the rest are assigned one-to-one by
// ascending loss.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <tuple>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "trajcur/error.hpp"
#include "trajcur/model.hpp"

namespace trajcur {

struct MatchParams {
  double alpha{1.0};
  double beta{1.0};
  double tauBetaTheta{15.0};  // degrees
  double tauBetaD{12.0};      // meters
  double tauLoss{30.0};
  double maxDistance{30.0};  // meters

  friend bool operator==(const MatchParams&, const MatchParams&) = default;
};

inline void validate(const MatchParams& p) {
  const auto check = [](double v, bool strictly_positive, const char* name) {
    if (!std::isfinite(v) || v < 0.0 || (strictly_positive && v == 0.0))
      throw Error(ErrorCode::InvalidParams,
                  std::string(name) + (strictly_positive ? " must be positive" : " must be nonnegative"), {}, name);
  };
  check(p.alpha, false, "alpha");
  check(p.beta, false, "beta");
  check(p.tauBetaTheta, true, "tauBetaTheta");
  check(p.tauBetaD, true, "tauBetaD");
  check(p.tauLoss, true, "tauLoss");
  check(p.maxDistance, true, "maxDistance");
  if (!(p.alpha + p.beta > 0.0)) throw Error(ErrorCode::InvalidParams, "alpha + beta must be positive", {}, "alpha");
}

struct Correspondence {
  std::size_t queryIndex{0};
  std::size_t matchIndex{0};
  double loss{0};
  double deltaD{0};      // meters
  double deltaTheta{0};  // degrees
  double betaStar{0};

  friend bool operator==(const Correspondence&, const Correspondence&) = default;
};

struct LossTerms {
  double loss{0};
  double betaStar{0};
};

/// The loss from precomputed deltas (meters, degrees, degrees).
inline LossTerms loss_from_deltas(double deltaD, double deltaThetaDeg, double thetaAccDeg,
                                  const MatchParams& params) noexcept {
  const double beta_star =
      thetaAccDeg > params.tauBetaTheta ? params.beta * (thetaAccDeg / params.tauBetaTheta) : params.beta;
  return {params.alpha * deltaD + beta_star * deltaThetaDeg, beta_star};
}

namespace detail {
inline const Orientation& require_heading(const Pose& p) {
  if (!p.orientation) throw Error(ErrorCode::MissingHeading, "pose " + std::to_string(p.index) + " has no yaw");
  return *p.orientation;
}
inline const GeoCoordinate& require_gps(const Pose& p) {
  if (!p.gps) throw Error(ErrorCode::MissingGps, "pose " + std::to_string(p.index) + " has no gps fix");
  return *p.gps;
}
}  // namespace detail

/// Sum of |heading change| (degrees) over consecutive pose pairs lying within
/// tauBetaD metres of track from pose i, walking both backward and forward.
inline double accumulated_angle(const Trajectory& traj, std::size_t i, double tauBetaD) {
  if (i >= traj.poses.size()) throw Error(ErrorCode::IndexOutOfRange, "pose " + std::to_string(i));
  const auto& poses = traj.poses;
  detail::require_heading(poses[i]);
  double total = 0.0;
  double along = 0.0;
  for (std::size_t j = i; j > 0; --j) {
    along += step_distance(poses[j - 1], poses[j]);
    if (along > tauBetaD) break;
    total += rad_to_deg(heading_difference(detail::require_heading(poses[j - 1]).yaw, poses[j].orientation->yaw));
  }
  along = 0.0;
  for (std::size_t j = i + 1; j < poses.size(); ++j) {
    along += step_distance(poses[j - 1], poses[j]);
    if (along > tauBetaD) break;
    total += rad_to_deg(heading_difference(poses[j - 1].orientation->yaw, detail::require_heading(poses[j]).yaw));
  }
  return total;
}

/// Loss of matching query pose x to candidate pose y.
inline LossTerms match_loss(const Pose& x, const Pose& y, double thetaAccDeg, const MatchParams& params) {
  const double dd = haversine_distance(detail::require_gps(x), detail::require_gps(y));
  const double dtheta = rad_to_deg(heading_difference(detail::require_heading(x).yaw, detail::require_heading(y).yaw));
  return loss_from_deltas(dd, dtheta, thetaAccDeg, params);
}

enum class CandidateSearch { SpatialGrid, Exhaustive };

namespace detail {

/// Buckets poses by their position on the sphere, embedded in 3D. A chord
/// is never longer than its arc, so every candidate within `radius` of a
/// query along the surface lies in the query's cell or one of its 26
/// neighbours when the cell edge is at least `radius`.
class SphereGrid {
 public:
  SphereGrid(const std::vector<Pose>& poses, double radius) : cell_(radius * (1.0 + 1e-6)) {
    for (std::size_t k = 0; k < poses.size(); ++k) cells_[key(*poses[k].gps)].push_back(k);
  }

  template <typename Fn>
  void for_each_near(const GeoCoordinate& g, Fn&& fn) const {
    const auto c = key(g);
    for (std::int64_t dx = -1; dx <= 1; ++dx)
      for (std::int64_t dy = -1; dy <= 1; ++dy)
        for (std::int64_t dz = -1; dz <= 1; ++dz) {
          const auto it = cells_.find({c[0] + dx, c[1] + dy, c[2] + dz});
          if (it == cells_.end()) continue;
          for (const std::size_t k : it->second) fn(k);
        }
  }

 private:
  using Key = std::array<std::int64_t, 3>;
  struct KeyHash {
    std::size_t operator()(const Key& k) const noexcept {
      std::uint64_t h = 1469598103934665603ULL;
      for (const auto v : k) h = (h ^ static_cast<std::uint64_t>(v)) * 1099511628211ULL;
      return static_cast<std::size_t>(h);
    }
  };

  [[nodiscard]] Key key(const GeoCoordinate& g) const {
    const double lat = deg_to_rad(g.latitude), lon = deg_to_rad(g.longitude);
    const double p[3] = {kEarthRadiusMeters * std::cos(lat) * std::cos(lon),
                         kEarthRadiusMeters * std::cos(lat) * std::sin(lon), kEarthRadiusMeters * std::sin(lat)};
    return {static_cast<std::int64_t>(std::floor(p[0] / cell_)), static_cast<std::int64_t>(std::floor(p[1] / cell_)),
            static_cast<std::int64_t>(std::floor(p[2] / cell_))};
  }

  double cell_;
  std::unordered_map<Key, std::vector<std::size_t>, KeyHash> cells_;
};

}  // namespace detail

/// One-to-one correspondences, sorted by queryIndex. All admissible pairs
/// are ranked by (loss, queryIndex, matchIndex) and accepted greedily while
/// neither endpoint is taken.
inline std::vector<Correspondence> find_correspondences(const Trajectory& query, const Trajectory& candidate,
                                                        const MatchParams& params,
                                                        CandidateSearch search = CandidateSearch::SpatialGrid) {
  validate(params);
  if (query.poses.empty() || candidate.poses.empty())
    throw Error(ErrorCode::EmptyTrajectory, "both trajectories need poses");
  for (const auto* t : {&query, &candidate})
    for (const Pose& p : t->poses) {
      detail::require_gps(p);
      detail::require_heading(p);
    }

  std::vector<double> theta_acc(candidate.poses.size());
  for (std::size_t k = 0; k < candidate.poses.size(); ++k)
    theta_acc[k] = accumulated_angle(candidate, k, params.tauBetaD);

  std::vector<Correspondence> admissible;
  const auto consider = [&](std::size_t qi, std::size_t ci) {
    const Pose& x = query.poses[qi];
    const Pose& y = candidate.poses[ci];
    const double dd = haversine_distance(*x.gps, *y.gps);
    if (dd > params.maxDistance) return;
    const double dtheta = rad_to_deg(heading_difference(x.orientation->yaw, y.orientation->yaw));
    const LossTerms lt = loss_from_deltas(dd, dtheta, theta_acc[ci], params);
    if (lt.loss > params.tauLoss) return;
    admissible.push_back({x.index, y.index, lt.loss, dd, dtheta, lt.betaStar});
  };

  if (search == CandidateSearch::SpatialGrid) {
    const detail::SphereGrid grid(candidate.poses, params.maxDistance);
    for (std::size_t qi = 0; qi < query.poses.size(); ++qi)
      grid.for_each_near(*query.poses[qi].gps, [&](std::size_t ci) { consider(qi, ci); });
  } else {
    for (std::size_t qi = 0; qi < query.poses.size(); ++qi)
      for (std::size_t ci = 0; ci < candidate.poses.size(); ++ci) consider(qi, ci);
  }

  std::sort(admissible.begin(), admissible.end(), [](const Correspondence& a, const Correspondence& b) {
    return std::tie(a.loss, a.queryIndex, a.matchIndex) < std::tie(b.loss, b.queryIndex, b.matchIndex);
  });

  std::unordered_set<std::size_t> query_taken, match_taken;
  std::vector<Correspondence> out;
  for (const Correspondence& c : admissible) {
    if (query_taken.contains(c.queryIndex) || match_taken.contains(c.matchIndex)) continue;
    query_taken.insert(c.queryIndex);
    match_taken.insert(c.matchIndex);
    out.push_back(c);
  }
  std::sort(out.begin(), out.end(),
            [](const Correspondence& a, const Correspondence& b) { return a.queryIndex < b.queryIndex; });
  return out;
}

}  // namespace trajcur
