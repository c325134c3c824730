#pragma once

// JSON wire formats shared by the CLI and the HTTP API. Key order is fixed
// (ordered_json) so identical inputs produce byte-identical documents.

#include <bit>
#include <cstdint>
#include <cstring>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "trajcur/error.hpp"
#include "trajcur/matching.hpp"
#include "trajcur/model.hpp"
#include "trajcur/sampling.hpp"
#include "trajcur/transforms.hpp"

namespace trajcur {

using Json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

inline Json pose_to_json(const Pose& p) {
  Json j;
  j["index"] = p.index;
  j["timestamp"] = p.timestamp;
  j["position"] = {p.position.x, p.position.y, p.position.z};
  j["orientation"] = p.orientation ? Json{p.orientation->roll, p.orientation->pitch, p.orientation->yaw} : Json();
  if (p.gps) {
    Json g;
    g["lat"] = p.gps->latitude;
    g["lon"] = p.gps->longitude;
    j["gps"] = std::move(g);
  } else {
    j["gps"] = nullptr;
  }
  j["altitude"] = p.altitude ? Json(*p.altitude) : Json();
  j["imageIndex"] = p.imageIndex ? Json(*p.imageIndex) : Json();
  j["image"] = p.image ? Json(*p.image) : Json();
  return j;
}

inline Json trajectory_to_json(const Trajectory& t, const std::optional<std::string>& pointCloudUrl = std::nullopt) {
  Json j;
  j["schemaVersion"] = kSchemaVersion;
  j["id"] = t.id;
  j["sourceFormat"] = std::string(to_string(t.sourceFormat));
  if (t.origin) {
    Json o;
    o["lat"] = t.origin->latitude;
    o["lon"] = t.origin->longitude;
    j["origin"] = std::move(o);
  } else {
    j["origin"] = nullptr;
  }
  Json poses = Json::array();
  for (const Pose& p : t.poses) poses.push_back(pose_to_json(p));
  j["poses"] = std::move(poses);
  Json manifest = Json::array();
  for (const ImageEntry& e : t.imageManifest) manifest.push_back(Json{e.timestamp, e.path});
  j["imageManifest"] = std::move(manifest);
  j["pointCloudUrl"] = pointCloudUrl ? Json(*pointCloudUrl) : Json();
  return j;
}

/// Point cloud as a flat binary blob: uint64 point count, then float32 x, y, z
/// per point, all little-endian.
inline std::string point_cloud_to_binary(const PointCloud& cloud) {
  static_assert(sizeof(float) == 4);
  std::string out;
  out.reserve(8 + cloud.points.size() * 12);
  const auto put = [&](const void* src, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(src);
    if constexpr (std::endian::native == std::endian::little) {
      out.append(reinterpret_cast<const char*>(b), n);
    } else {
      for (std::size_t k = n; k > 0; --k) out.push_back(static_cast<char>(b[k - 1]));
    }
  };
  const std::uint64_t n = cloud.points.size();
  put(&n, 8);
  for (const Vec3& p : cloud.points)
    for (std::size_t k = 0; k < 3; ++k) {
      const float f = static_cast<float>(p[k]);
      put(&f, 4);
    }
  return out;
}

// ---------------------------------------------------------------------------
// Parameter blocks

namespace detail {

template <typename J>
double number_or(const J& j, const char* key, double fallback, ErrorCode code) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_number()) throw Error(code, std::string(key) + " must be a number", {}, key);
  return v.template get<double>();
}

template <typename J>
bool bool_or(const J& j, const char* key, bool fallback, ErrorCode code) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_boolean()) throw Error(code, std::string(key) + " must be a boolean", {}, key);
  return v.template get<bool>();
}

template <typename J>
Vec3 vec3_or(const J& j, const char* key, Vec3 fallback, ErrorCode code) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_array() || v.size() != 3 || !v[0].is_number() || !v[1].is_number() || !v[2].is_number())
    throw Error(code, std::string(key) + " must be a 3-element numeric array", {}, key);
  return {v[0].template get<double>(), v[1].template get<double>(), v[2].template get<double>()};
}

template <typename J>
std::array<bool, 3> flags_or(const J& j, const char* key, ErrorCode code) {
  std::array<bool, 3> out{false, false, false};
  if (!j.contains(key)) return out;
  const auto& v = j.at(key);
  if (!v.is_array() || v.size() != 3) throw Error(code, std::string(key) + " must be 3 booleans", {}, key);
  for (std::size_t k = 0; k < 3; ++k) {
    if (!v[k].is_boolean()) throw Error(code, std::string(key) + " must be 3 booleans", {}, key);
    out[k] = v[k].template get<bool>();
  }
  return out;
}

inline const char* axis_name(Axis a) { return a == Axis::X ? "x" : (a == Axis::Y ? "y" : "z"); }

template <typename J>
std::optional<AxisPair> axis_pair_or(const J& j, const char* key, ErrorCode code) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  const auto& v = j.at(key);
  const auto axis = [&](const auto& e) {
    if (e.is_string()) {
      const auto s = e.template get<std::string>();
      if (s == "x") return Axis::X;
      if (s == "y") return Axis::Y;
      if (s == "z") return Axis::Z;
    }
    throw Error(code, std::string(key) + " entries must be \"x\", \"y\" or \"z\"", {}, key);
  };
  if (!v.is_array() || v.size() != 2) throw Error(code, std::string(key) + " must be a pair of axes", {}, key);
  const Axis a = axis(v[0]), b = axis(v[1]);
  if (a == b) throw Error(code, std::string(key) + " must name two different axes", {}, key);
  return std::minmax(a, b);
}

}  // namespace detail

inline Json to_json(const OffsetSettings& s) {
  Json j;
  j["positionOffset"] = {s.positionOffset.x, s.positionOffset.y, s.positionOffset.z};
  j["rotationOffset"] = {s.rotationOffset.x, s.rotationOffset.y, s.rotationOffset.z};
  j["invertPosition"] = s.invertPosition;
  j["invertRotation"] = s.invertRotation;
  const auto pair = [](const std::optional<AxisPair>& p) {
    return p ? Json{detail::axis_name(p->first), detail::axis_name(p->second)} : Json();
  };
  j["swapPositionAxes"] = pair(s.swapPositionAxes);
  j["swapRotationAxes"] = pair(s.swapRotationAxes);
  j["uniformScale"] = s.uniformScale;
  j["ignoreAltitude"] = s.ignoreAltitude;
  j["zTimeRate"] = s.zTimeRate;
  return j;
}

template <typename J>
OffsetSettings offset_settings_from_json(const J& j) {
  constexpr auto code = ErrorCode::InvalidSettings;
  if (!j.is_object()) throw Error(code, "offsetSettings must be an object");
  OffsetSettings s;
  s.positionOffset = detail::vec3_or(j, "positionOffset", {}, code);
  s.rotationOffset = detail::vec3_or(j, "rotationOffset", {}, code);
  s.invertPosition = detail::flags_or(j, "invertPosition", code);
  s.invertRotation = detail::flags_or(j, "invertRotation", code);
  s.swapPositionAxes = detail::axis_pair_or(j, "swapPositionAxes", code);
  s.swapRotationAxes = detail::axis_pair_or(j, "swapRotationAxes", code);
  s.uniformScale = detail::number_or(j, "uniformScale", 1.0, code);
  s.ignoreAltitude = detail::bool_or(j, "ignoreAltitude", false, code);
  s.zTimeRate = detail::number_or(j, "zTimeRate", 0.0, code);
  validate(s);
  return s;
}

inline Json to_json(const SamplingParams& p) {
  Json j;
  j["mode"] = std::string(to_string(p.mode));
  j["tauD"] = p.tauD;
  j["tauTheta"] = p.tauTheta;
  return j;
}

template <typename J>
SamplingParams sampling_params_from_json(const J& j) {
  constexpr auto code = ErrorCode::InvalidParams;
  if (!j.is_object()) throw Error(code, "sampling params must be an object");
  SamplingParams p;
  if (j.contains("mode")) {
    const auto& m = j.at("mode");
    if (m == "uniform") p.mode = SamplingMode::Uniform;
    else if (m == "adaptive") p.mode = SamplingMode::Adaptive;
    else throw Error(code, "mode must be \"uniform\" or \"adaptive\"", {}, "mode");
  }
  p.tauD = detail::number_or(j, "tauD", p.tauD, code);
  p.tauTheta = detail::number_or(j, "tauTheta", p.tauTheta, code);
  validate(p);
  return p;
}

inline Json to_json(const MatchParams& p) {
  Json j;
  j["alpha"] = p.alpha;
  j["beta"] = p.beta;
  j["tauBetaTheta"] = p.tauBetaTheta;
  j["tauBetaD"] = p.tauBetaD;
  j["tauLoss"] = p.tauLoss;
  j["maxDistance"] = p.maxDistance;
  return j;
}

template <typename J>
MatchParams match_params_from_json(const J& j) {
  constexpr auto code = ErrorCode::InvalidParams;
  if (!j.is_object()) throw Error(code, "match params must be an object");
  MatchParams p;
  p.alpha = detail::number_or(j, "alpha", p.alpha, code);
  p.beta = detail::number_or(j, "beta", p.beta, code);
  p.tauBetaTheta = detail::number_or(j, "tauBetaTheta", p.tauBetaTheta, code);
  p.tauBetaD = detail::number_or(j, "tauBetaD", p.tauBetaD, code);
  p.tauLoss = detail::number_or(j, "tauLoss", p.tauLoss, code);
  p.maxDistance = detail::number_or(j, "maxDistance", p.maxDistance, code);
  validate(p);
  return p;
}

// ---------------------------------------------------------------------------
// Export documents

inline Json sample_export_json(const Trajectory& t, const SampleResult& r) {
  std::unordered_map<std::size_t, const Pose*> by_index;
  by_index.reserve(t.poses.size());
  for (const Pose& p : t.poses) by_index.emplace(p.index, &p);

  Json j;
  j["schemaVersion"] = kSchemaVersion;
  j["trajectoryId"] = t.id;
  j["params"] = to_json(r.params);
  j["totalCandidates"] = r.totalCandidates;
  j["selectedIndices"] = r.selectedIndices;
  Json poses = Json::array();
  for (const std::size_t idx : r.selectedIndices) poses.push_back(pose_to_json(*by_index.at(idx)));
  j["poses"] = std::move(poses);
  return j;
}

inline Json correspondence_to_json(const Correspondence& c) {
  Json j;
  j["queryIndex"] = c.queryIndex;
  j["matchIndex"] = c.matchIndex;
  j["loss"] = c.loss;
  j["deltaD"] = c.deltaD;
  j["deltaTheta"] = c.deltaTheta;
  return j;
}

inline Json match_export_json(const std::string& queryId, const std::string& candidateId, const MatchParams& params,
                              const std::vector<Correspondence>& pairs) {
  Json j;
  j["schemaVersion"] = kSchemaVersion;
  j["queryId"] = queryId;
  j["candidateId"] = candidateId;
  j["params"] = to_json(params);
  Json arr = Json::array();
  for (const Correspondence& c : pairs) arr.push_back(correspondence_to_json(c));
  j["pairs"] = std::move(arr);
  return j;
}

inline Json error_to_json(const Error& e) {
  Json j;
  j["error"] = std::string(to_string(e.code()));
  j["lineNumber"] = e.line() ? Json(*e.line()) : Json();
  j["subject"] = e.subject().empty() ? Json() : Json(e.subject());
  j["message"] = e.what();
  return j;
}

/// Two-space indented dump with a trailing newline; the one formatting used
/// for every document the tools write.
inline std::string dump(const Json& j) {
  return j.dump(2, ' ', false, Json::error_handler_t::replace) + "\n";
}

}  // namespace trajcur
