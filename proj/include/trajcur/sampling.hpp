#pragma once

// Sequence-based pose decimation. Uniform sampling keeps a pose whenever
// the accumulated travel reaches tauD; adaptive sampling also keeps one
// when the accumulated heading change reaches tauTheta, which preserves
// poses around corners.
//
// On selection the distance accumulator gives back one tauD rather than
// dropping to zero, so the overshoot of each step is not lost and a path
// of length L walked in steps shorter than tauD yields floor(L / tauD)
// samples after the first. The heading accumulator, and the distance
// accumulator when only the heading fired, restart from zero.

#include <cmath>
#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "trajcur/error.hpp"
#include "trajcur/model.hpp"

namespace trajcur {

enum class SamplingMode { Uniform, Adaptive };

constexpr std::string_view to_string(SamplingMode m) noexcept {
  return m == SamplingMode::Uniform ? "uniform" : "adaptive";
}

struct SamplingParams {
  double tauD{12.0};      // meters
  double tauTheta{15.0};  // degrees
  SamplingMode mode{SamplingMode::Adaptive};

  friend bool operator==(const SamplingParams&, const SamplingParams&) = default;
};

struct SampleResult {
  std::vector<std::size_t> selectedIndices;  // Pose::index values
  std::size_t totalCandidates{0};
  SamplingParams params;

  friend bool operator==(const SampleResult&, const SampleResult&) = default;
};

inline void validate(const SamplingParams& p) {
  if (!(p.tauD > 0.0) || !std::isfinite(p.tauD))
    throw Error(ErrorCode::InvalidParams, "tauD must be positive", {}, "tauD");
  if (p.mode == SamplingMode::Adaptive && (!(p.tauTheta > 0.0) || !std::isfinite(p.tauTheta)))
    throw Error(ErrorCode::InvalidParams, "tauTheta must be positive", {}, "tauTheta");
}

namespace detail {

// Accumulated sums of steps that should land exactly on a threshold
// (e.g. fifteen 1-degree turns) can fall short by a few ulps.
inline bool reached(double accumulated, double threshold) noexcept {
  return accumulated >= threshold * (1.0 - 1e-9);
}

inline double step_heading_degrees(const Pose& a, const Pose& b) {
  return rad_to_deg(heading_difference(a.orientation->yaw, b.orientation->yaw));
}

}  // namespace detail

inline SampleResult sample_uniform(std::span<const Pose> poses, double tauD) {
  if (poses.empty()) throw Error(ErrorCode::EmptyTrajectory, "no poses to sample");
  SampleResult r;
  r.params = {tauD, SamplingParams{}.tauTheta, SamplingMode::Uniform};
  validate(r.params);
  r.totalCandidates = poses.size();
  r.selectedIndices.push_back(poses.front().index);
  double d_acc = 0.0;
  for (std::size_t i = 1; i < poses.size(); ++i) {
    d_acc += step_distance(poses[i - 1], poses[i]);
    if (detail::reached(d_acc, tauD)) {
      r.selectedIndices.push_back(poses[i].index);
      d_acc -= tauD;
    }
  }
  return r;
}

inline SampleResult sample_adaptive(std::span<const Pose> poses, const SamplingParams& params) {
  if (poses.empty()) throw Error(ErrorCode::EmptyTrajectory, "no poses to sample");
  SamplingParams p = params;
  p.mode = SamplingMode::Adaptive;
  validate(p);
  for (const Pose& pose : poses)
    if (!pose.orientation)
      throw Error(ErrorCode::MissingHeading, "pose " + std::to_string(pose.index) + " has no yaw");

  SampleResult r;
  r.params = p;
  r.totalCandidates = poses.size();
  r.selectedIndices.push_back(poses.front().index);
  double d_acc = 0.0;
  double theta_acc = 0.0;
  for (std::size_t i = 1; i < poses.size(); ++i) {
    d_acc += step_distance(poses[i - 1], poses[i]);
    theta_acc += detail::step_heading_degrees(poses[i - 1], poses[i]);
    const bool by_distance = detail::reached(d_acc, p.tauD);
    if (by_distance || detail::reached(theta_acc, p.tauTheta)) {
      r.selectedIndices.push_back(poses[i].index);
      d_acc = by_distance ? d_acc - p.tauD : 0.0;
      theta_acc = 0.0;
    }
  }
  return r;
}

inline SampleResult sample(std::span<const Pose> poses, const SamplingParams& params) {
  if (params.mode == SamplingMode::Adaptive) return sample_adaptive(poses, params);
  SampleResult r = sample_uniform(poses, params.tauD);
  r.params = params;
  return r;
}

}  // namespace trajcur
