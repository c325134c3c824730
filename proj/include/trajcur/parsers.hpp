#pragma once

// Readers for the supported trajectory formats, all producing a canonical
// Trajectory, plus interpolation of image-capture poses from a denser
// pose stream.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fnmatch.h>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "trajcur/error.hpp"
#include "trajcur/model.hpp"

namespace trajcur {

enum class AngleUnit { Degrees, Radians };
enum class TimestampUnit { Seconds, Milliseconds, Microseconds };

/// A column is addressed either by zero-based position or by header name.
using ColumnRef = std::variant<std::size_t, std::string>;

/// Describes how to read one on-disk format. `columnMap` keys are the
/// canonical field names: timestamp, latitude, longitude, altitude, x, y, z,
/// roll, pitch, yaw, image.
struct ParserDescriptor {
  SourceFormat formatId{SourceFormat::Delimited};
  std::vector<std::string> fileGlobs;
  std::map<std::string, ColumnRef> columnMap;
  AngleUnit angleUnit{AngleUnit::Radians};
  TimestampUnit timestampUnit{TimestampUnit::Seconds};
  bool hasHeader{false};

  friend bool operator==(const ParserDescriptor&, const ParserDescriptor&) = default;
};

inline constexpr std::array<std::string_view, 11> kCanonicalFields = {
    "timestamp", "latitude", "longitude", "altitude", "x", "y",
    "z",         "roll",     "pitch",     "yaw",      "image"};

/// Oxford RobotCar style ins.csv: microsecond timestamps, radian angles.
inline ParserDescriptor default_csv_ins_descriptor() {
  ParserDescriptor d;
  d.formatId = SourceFormat::CsvIns;
  d.fileGlobs = {"*.csv"};
  d.hasHeader = true;
  d.angleUnit = AngleUnit::Radians;
  d.timestampUnit = TimestampUnit::Microseconds;
  for (const char* f : {"timestamp", "latitude", "longitude", "altitude", "roll", "pitch", "yaw"})
    d.columnMap.emplace(f, std::string(f));
  return d;
}

inline ParserDescriptor builtin_descriptor(SourceFormat f) {
  ParserDescriptor d;
  d.formatId = f;
  switch (f) {
    case SourceFormat::Kitti: d.fileGlobs = {"*.txt"}; break;
    case SourceFormat::CsvIns: return default_csv_ins_descriptor();
    case SourceFormat::Nvm: d.fileGlobs = {"*.nvm"}; break;
    case SourceFormat::BddJson:
      d.fileGlobs = {"*.json"};
      d.timestampUnit = TimestampUnit::Milliseconds;
      d.angleUnit = AngleUnit::Degrees;
      break;
    case SourceFormat::Delimited: d.fileGlobs = {"*.txt", "*.log"}; break;
  }
  return d;
}

inline bool matches_any_glob(const ParserDescriptor& d, const std::string& filename) {
  return std::any_of(d.fileGlobs.begin(), d.fileGlobs.end(), [&](const std::string& g) {
    return ::fnmatch(g.c_str(), filename.c_str(), 0) == 0;
  });
}

/// Checks the column map against what the generic delimited parser needs:
/// a timestamp plus either latitude/longitude or x/y.
inline void validate_delimited_descriptor(const ParserDescriptor& d) {
  const auto has = [&](const char* k) { return d.columnMap.contains(k); };
  for (const auto& [name, _] : d.columnMap) {
    if (std::find(kCanonicalFields.begin(), kCanonicalFields.end(), name) == kCanonicalFields.end())
      throw Error(ErrorCode::InvalidSettings, "unknown canonical field '" + name + "'", {}, name);
  }
  if (!has("timestamp")) throw Error(ErrorCode::MissingColumn, "timestamp", {}, "timestamp");
  const bool geo = has("latitude") && has("longitude");
  const bool planar = has("x") && has("y");
  if (!geo && !planar) {
    const char* missing = has("latitude") ? "longitude" : (has("longitude") ? "latitude" : (has("x") ? "y" : "latitude"));
    throw Error(ErrorCode::MissingColumn, "need latitude/longitude or x/y", {}, missing);
  }
  if (!d.hasHeader) {
    for (const auto& [name, ref] : d.columnMap)
      if (std::holds_alternative<std::string>(ref))
        throw Error(ErrorCode::InvalidSettings,
                    "column '" + name + "' is referenced by header name but hasHeader is false", {}, name);
  }
}

// ---------------------------------------------------------------------------
// Descriptor JSON. Shape:
//   {"format": "delimited", "fileGlobs": ["*.log"], "hasHeader": false,
//    "angleUnit": "degrees", "timestampUnit": "seconds",
//    "columns": {"timestamp": 0, "latitude": 1, "longitude": "lon"}}

inline nlohmann::ordered_json descriptor_to_json(const ParserDescriptor& d) {
  nlohmann::ordered_json j;
  j["format"] = std::string(to_string(d.formatId));
  j["fileGlobs"] = d.fileGlobs;
  j["hasHeader"] = d.hasHeader;
  j["angleUnit"] = d.angleUnit == AngleUnit::Degrees ? "degrees" : "radians";
  j["timestampUnit"] = d.timestampUnit == TimestampUnit::Seconds        ? "seconds"
                       : d.timestampUnit == TimestampUnit::Milliseconds ? "milliseconds"
                                                                         : "microseconds";
  nlohmann::ordered_json cols = nlohmann::ordered_json::object();
  for (const auto& [name, ref] : d.columnMap) {
    if (const auto* idx = std::get_if<std::size_t>(&ref))
      cols[name] = *idx;
    else
      cols[name] = std::get<std::string>(ref);
  }
  j["columns"] = std::move(cols);
  return j;
}

template <typename Json>
ParserDescriptor descriptor_from_json(const Json& j) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidSettings, "parser descriptor must be an object");
  ParserDescriptor d;
  const std::string fmt = j.value("format", std::string("delimited"));
  const auto f = source_format_from_string(fmt);
  if (!f) throw Error(ErrorCode::InvalidSettings, "unknown format '" + fmt + "'", {}, "format");
  d = builtin_descriptor(*f);
  if (j.contains("fileGlobs")) d.fileGlobs = j.at("fileGlobs").template get<std::vector<std::string>>();
  if (j.contains("hasHeader")) d.hasHeader = j.at("hasHeader").template get<bool>();
  if (j.contains("angleUnit")) {
    const auto u = j.at("angleUnit").template get<std::string>();
    if (u == "degrees") d.angleUnit = AngleUnit::Degrees;
    else if (u == "radians") d.angleUnit = AngleUnit::Radians;
    else throw Error(ErrorCode::InvalidSettings, "angleUnit '" + u + "'", {}, "angleUnit");
  }
  if (j.contains("timestampUnit")) {
    const auto u = j.at("timestampUnit").template get<std::string>();
    if (u == "seconds") d.timestampUnit = TimestampUnit::Seconds;
    else if (u == "milliseconds") d.timestampUnit = TimestampUnit::Milliseconds;
    else if (u == "microseconds") d.timestampUnit = TimestampUnit::Microseconds;
    else throw Error(ErrorCode::InvalidSettings, "timestampUnit '" + u + "'", {}, "timestampUnit");
  }
  if (j.contains("columns")) {
    d.columnMap.clear();
    for (const auto& [name, ref] : j.at("columns").items()) {
      if (ref.is_number_unsigned())
        d.columnMap.emplace(name, ref.template get<std::size_t>());
      else if (ref.is_string())
        d.columnMap.emplace(name, ref.template get<std::string>());
      else
        throw Error(ErrorCode::InvalidSettings, "column '" + name + "' must be an index or a header name", {}, name);
    }
  }
  return d;
}

inline ParserDescriptor load_descriptor(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  const auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::NotJson, path.string());
  return descriptor_from_json(j);
}

namespace detail {

/// Iterates physical lines, tracking a 1-based line number and stripping
/// a trailing '\r'.
class LineReader {
 public:
  explicit LineReader(std::string_view text) : text_(text) {}

  bool next(std::string_view& line) {
    if (pos_ >= text_.size()) return false;
    const std::size_t end = text_.find('\n', pos_);
    const std::size_t stop = end == std::string_view::npos ? text_.size() : end;
    line = text_.substr(pos_, stop - pos_);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos_ = stop + 1;
    ++number_;
    return true;
  }
  [[nodiscard]] std::size_t number() const noexcept { return number_; }

 private:
  std::string_view text_;
  std::size_t pos_{0};
  std::size_t number_{0};
};

inline bool is_blank(std::string_view s) {
  return s.find_first_not_of(" \t\r\f\v") == std::string_view::npos;
}

inline std::vector<std::string_view> split_whitespace(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

/// Splits on commas, semicolons, or runs of blanks/tabs. Fields around a
/// comma are trimmed; empty comma-separated fields are kept.
inline std::vector<std::string_view> split_fields(std::string_view line) {
  if (line.find_first_of(",;") == std::string_view::npos) return split_whitespace(line);
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t end = line.find_first_of(",;", start);
    std::string_view f = line.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
    const auto b = f.find_first_not_of(" \t");
    const auto e = f.find_last_not_of(" \t");
    out.push_back(b == std::string_view::npos ? std::string_view{} : f.substr(b, e - b + 1));
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return out;
}

inline std::optional<double> to_double(std::string_view tok) {
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  if (tok.empty()) return std::nullopt;
  double v = 0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || ptr != tok.data() + tok.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::optional<long long> to_integer(std::string_view tok) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || ptr != tok.data() + tok.size()) return std::nullopt;
  return v;
}

using Matrix3 = std::array<std::array<double, 3>, 3>;

/// ZYX (yaw-pitch-roll) extraction from a rotation matrix. At gimbal lock
/// roll is pinned to zero and the remaining rotation is folded into yaw.
inline Orientation euler_zyx(const Matrix3& r) {
  const double pitch = std::asin(std::clamp(-r[2][0], -1.0, 1.0));
  Orientation o;
  o.pitch = pitch;
  if (std::abs(std::abs(pitch) - kPi / 2.0) < 1e-6) {
    o.roll = 0.0;
    o.yaw = std::atan2(-r[0][1], r[1][1]);
  } else {
    o.roll = std::atan2(r[2][1], r[2][2]);
    o.yaw = std::atan2(r[1][0], r[0][0]);
  }
  return o.normalized();
}

inline Matrix3 quaternion_to_matrix(double w, double x, double y, double z) {
  const double n = std::sqrt(w * w + x * x + y * y + z * z);
  if (n > 0) { w /= n; x /= n; y /= n; z /= n; }
  return {{{1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)},
           {2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)},
           {2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)}}};
}

inline bool is_orthonormal(const Matrix3& r, double tol) {
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double dot = 0;
      for (int k = 0; k < 3; ++k) dot += r[i][k] * r[j][k];
      if (std::abs(dot - (i == j ? 1.0 : 0.0)) > tol) return false;
    }
  return true;
}

inline double timestamp_seconds(double raw, TimestampUnit unit) {
  switch (unit) {
    case TimestampUnit::Seconds: return raw;
    case TimestampUnit::Milliseconds: return raw / 1e3;
    case TimestampUnit::Microseconds: return raw / 1e6;
  }
  return raw;
}

inline double angle_radians(double raw, AngleUnit unit) {
  return unit == AngleUnit::Degrees ? deg_to_rad(raw) : raw;
}

inline void require_nondecreasing(const std::vector<Pose>& poses, double t, std::size_t line) {
  if (!poses.empty() && t < poses.back().timestamp)
    throw Error(ErrorCode::MalformedLine, "timestamp goes backwards", line);
}

/// Shared reader for header/column-mapped text tables (csv-ins and the
/// generic delimited format).
inline Trajectory parse_table(std::string_view text, const ParserDescriptor& desc,
                              SourceFormat format, std::string id) {
  LineReader lines(text);
  std::string_view line;
  std::map<std::string, std::size_t> columns;

  const auto resolve_indices = [&](const std::vector<std::string_view>* header) {
    for (const auto& [name, ref] : desc.columnMap) {
      if (const auto* idx = std::get_if<std::size_t>(&ref)) {
        columns[name] = *idx;
        continue;
      }
      const auto& wanted = std::get<std::string>(ref);
      if (header == nullptr) throw Error(ErrorCode::MissingColumn, wanted, {}, name);
      const auto it = std::find(header->begin(), header->end(), wanted);
      if (it == header->end())
        throw Error(ErrorCode::MissingColumn, "header has no column '" + wanted + "'", {}, name);
      columns[name] = static_cast<std::size_t>(it - header->begin());
    }
  };

  bool saw_header = !desc.hasHeader;
  if (desc.hasHeader) {
    while (lines.next(line)) {
      if (is_blank(line) || line.front() == '#') continue;
      const auto header = split_fields(line);
      resolve_indices(&header);
      saw_header = true;
      break;
    }
    if (!saw_header) throw Error(ErrorCode::EmptyFile, "no header line");
  } else {
    resolve_indices(nullptr);
  }

  const auto col = [&](const char* name) -> std::optional<std::size_t> {
    const auto it = columns.find(name);
    return it == columns.end() ? std::nullopt : std::optional(it->second);
  };
  const auto c_time = col("timestamp");
  const auto c_lat = col("latitude"), c_lon = col("longitude"), c_alt = col("altitude");
  const auto c_x = col("x"), c_y = col("y"), c_z = col("z");
  const auto c_roll = col("roll"), c_pitch = col("pitch"), c_yaw = col("yaw");
  const auto c_image = col("image");
  const bool geo = c_lat && c_lon;
  const bool planar = c_x && c_y;

  Trajectory t;
  t.id = std::move(id);
  t.sourceFormat = format;
  std::optional<double> origin_alt;

  while (lines.next(line)) {
    if (is_blank(line) || line.front() == '#') continue;
    const std::size_t ln = lines.number();
    const auto fields = split_fields(line);
    const auto num = [&](std::optional<std::size_t> c) -> std::optional<double> {
      if (!c) return std::nullopt;
      if (*c >= fields.size())
        throw Error(ErrorCode::MalformedLine, "expected at least " + std::to_string(*c + 1) + " fields", ln);
      const auto v = to_double(fields[*c]);
      if (!v) throw Error(ErrorCode::MalformedLine, "non-numeric field '" + std::string(fields[*c]) + "'", ln);
      return v;
    };

    Pose p;
    p.index = t.poses.size();
    p.timestamp = timestamp_seconds(*num(c_time), desc.timestampUnit);
    require_nondecreasing(t.poses, p.timestamp, ln);

    const auto alt = num(c_alt);
    p.altitude = alt;
    if (geo) {
      const double lat = *num(c_lat), lon = *num(c_lon);
      if (lat < -90.0 || lat > 90.0) throw Error(ErrorCode::MalformedLine, "latitude out of range", ln);
      p.gps = GeoCoordinate::make(lat, lon);
      if (!t.origin) {
        t.origin = p.gps;
        origin_alt = alt;
      }
    }
    if (planar) {
      p.position.x = *num(c_x);
      p.position.y = *num(c_y);
    } else {
      const auto xy = gps_to_local(*p.gps, *t.origin);
      p.position.x = xy.x;
      p.position.y = xy.y;
    }
    if (c_z)
      p.position.z = *num(c_z);
    else if (alt && origin_alt)
      p.position.z = *alt - *origin_alt;

    if (c_yaw) {
      Orientation o;
      o.yaw = angle_radians(*num(c_yaw), desc.angleUnit);
      if (c_roll) o.roll = angle_radians(*num(c_roll), desc.angleUnit);
      if (c_pitch) o.pitch = angle_radians(*num(c_pitch), desc.angleUnit);
      p.orientation = o.normalized();
    }
    if (c_image) {
      if (*c_image >= fields.size() || fields[*c_image].empty())
        throw Error(ErrorCode::MalformedLine, "missing image field", ln);
      p.image = std::string(fields[*c_image]);
      p.imageIndex = t.imageManifest.size();
      t.imageManifest.push_back({p.timestamp, *p.image});
    }
    t.poses.push_back(std::move(p));
  }
  if (t.poses.empty()) throw Error(ErrorCode::EmptyFile, "no data rows");
  return t;
}

}  // namespace detail

/// KITTI odometry ground truth: one row-major 3x4 [R|t] per line. The files
/// carry no clock, so each pose's timestamp is its line index.
inline Trajectory parse_kitti(std::string_view text, std::string id = {}) {
  Trajectory t;
  t.id = std::move(id);
  t.sourceFormat = SourceFormat::Kitti;
  detail::LineReader lines(text);
  std::string_view line;
  while (lines.next(line)) {
    if (detail::is_blank(line)) continue;
    const std::size_t ln = lines.number();
    const auto toks = detail::split_whitespace(line);
    if (toks.size() != 12)
      throw Error(ErrorCode::MalformedLine, "expected 12 values, got " + std::to_string(toks.size()), ln);
    std::array<double, 12> m{};
    for (std::size_t k = 0; k < 12; ++k) {
      const auto v = detail::to_double(toks[k]);
      if (!v) throw Error(ErrorCode::MalformedLine, "non-numeric value '" + std::string(toks[k]) + "'", ln);
      m[k] = *v;
    }
    const detail::Matrix3 r = {{{m[0], m[1], m[2]}, {m[4], m[5], m[6]}, {m[8], m[9], m[10]}}};
    if (!detail::is_orthonormal(r, 1e-3)) throw Error(ErrorCode::NonOrthonormalRotation, {}, ln);

    Pose p;
    p.index = t.poses.size();
    p.timestamp = static_cast<double>(p.index);
    p.position = {m[3], m[7], m[11]};
    p.orientation = detail::euler_zyx(r);
    t.poses.push_back(std::move(p));
  }
  if (t.poses.empty()) throw Error(ErrorCode::EmptyFile, "no poses");
  return t;
}

/// RobotCar-style INS csv. The descriptor's column map names header columns;
/// timestamp, latitude, longitude, altitude, roll, pitch and yaw are required.
inline Trajectory parse_csv_ins(std::string_view text,
                                const ParserDescriptor& descriptor = default_csv_ins_descriptor(),
                                std::string id = {}) {
  ParserDescriptor d = descriptor;
  d.hasHeader = true;
  if (d.columnMap.empty()) d.columnMap = default_csv_ins_descriptor().columnMap;
  for (const char* f : {"timestamp", "latitude", "longitude", "altitude", "roll", "pitch", "yaw"})
    if (!d.columnMap.contains(f)) throw Error(ErrorCode::MissingColumn, f, {}, f);
  if (detail::is_blank(text)) throw Error(ErrorCode::EmptyFile, "empty input");
  return detail::parse_table(text, d, SourceFormat::CsvIns, std::move(id));
}

/// Column-mapped delimited text (space, tab, comma or semicolon separated).
/// Canonical fields without a mapping stay absent.
inline Trajectory parse_delimited(std::string_view text, const ParserDescriptor& descriptor,
                                  std::string id = {}) {
  validate_delimited_descriptor(descriptor);
  if (detail::is_blank(text)) throw Error(ErrorCode::EmptyFile, "empty input");
  return detail::parse_table(text, descriptor, SourceFormat::Delimited, std::move(id));
}

/// VisualSfM NVM_V3: cameras become poses (position = camera center,
/// orientation from the quaternion), points become the point cloud. Only
/// the first model in the file is read.
inline Trajectory parse_nvm(std::string_view text, std::string id = {}) {
  Trajectory t;
  t.id = std::move(id);
  t.sourceFormat = SourceFormat::Nvm;
  detail::LineReader lines(text);
  std::string_view line;

  const auto next_content = [&]() -> bool {
    while (lines.next(line))
      if (!detail::is_blank(line) && line.front() != '#') return true;
    return false;
  };

  if (!next_content()) throw Error(ErrorCode::EmptyFile, "empty input");
  {
    const auto toks = detail::split_whitespace(line);
    if (toks.empty() || toks.front().substr(0, 6) != "NVM_V3")
      throw Error(ErrorCode::BadHeader, "expected NVM_V3", lines.number());
  }

  const auto read_count = [&](const char* what) -> std::size_t {
    if (!next_content()) throw Error(ErrorCode::TruncatedFile, std::string("missing ") + what + " count");
    const auto toks = detail::split_whitespace(line);
    const auto n = toks.size() == 1 ? detail::to_integer(toks[0]) : std::nullopt;
    if (!n || *n < 0) throw Error(ErrorCode::BadHeader, std::string("bad ") + what + " count", lines.number());
    return static_cast<std::size_t>(*n);
  };

  const std::size_t n_cameras = read_count("camera");
  if (n_cameras == 0) throw Error(ErrorCode::EmptyFile, "no cameras");
  t.poses.reserve(n_cameras);
  for (std::size_t i = 0; i < n_cameras; ++i) {
    if (!next_content())
      throw Error(ErrorCode::TruncatedFile,
                  "expected " + std::to_string(n_cameras) + " cameras, found " + std::to_string(i));
    const std::size_t ln = lines.number();
    const auto toks = detail::split_whitespace(line);
    if (toks.size() < 10) throw Error(ErrorCode::MalformedCamera, "expected 11 fields", ln);
    std::array<double, 9> v{};  // focal, qw qx qy qz, cx cy cz, radial
    for (std::size_t k = 0; k < 9; ++k) {
      const auto d = detail::to_double(toks[k + 1]);
      if (!d) throw Error(ErrorCode::MalformedCamera, "non-numeric field '" + std::string(toks[k + 1]) + "'", ln);
      v[k] = *d;
    }
    if (v[1] == 0 && v[2] == 0 && v[3] == 0 && v[4] == 0)
      throw Error(ErrorCode::MalformedCamera, "zero quaternion", ln);
    Pose p;
    p.index = i;
    p.timestamp = static_cast<double>(i);
    p.position = {v[5], v[6], v[7]};
    p.orientation = detail::euler_zyx(detail::quaternion_to_matrix(v[1], v[2], v[3], v[4]));
    p.image = std::string(toks[0]);
    p.imageIndex = i;
    t.imageManifest.push_back({p.timestamp, *p.image});
    t.poses.push_back(std::move(p));
  }

  PointCloud cloud;
  std::size_t n_points = 0;
  if (next_content()) {
    const auto toks = detail::split_whitespace(line);
    const auto n = toks.size() == 1 ? detail::to_integer(toks[0]) : std::nullopt;
    if (!n || *n < 0) throw Error(ErrorCode::BadHeader, "bad point count", lines.number());
    n_points = static_cast<std::size_t>(*n);
  }
  cloud.points.reserve(n_points);
  cloud.colors.reserve(n_points);
  for (std::size_t i = 0; i < n_points; ++i) {
    if (!next_content())
      throw Error(ErrorCode::TruncatedFile,
                  "expected " + std::to_string(n_points) + " points, found " + std::to_string(i));
    const std::size_t ln = lines.number();
    const auto toks = detail::split_whitespace(line);
    if (toks.size() < 7) throw Error(ErrorCode::MalformedPoint, "expected xyz rgb and a measurement count", ln);
    std::array<double, 6> v{};
    for (std::size_t k = 0; k < 6; ++k) {
      const auto d = detail::to_double(toks[k]);
      if (!d) throw Error(ErrorCode::MalformedPoint, "non-numeric field '" + std::string(toks[k]) + "'", ln);
      v[k] = *d;
    }
    const auto n_meas = detail::to_integer(toks[6]);
    if (!n_meas || *n_meas < 0 || toks.size() != 7 + 4 * static_cast<std::size_t>(*n_meas))
      throw Error(ErrorCode::MalformedPoint, "measurement list does not match its count", ln);
    for (std::size_t k = 3; k < 6; ++k)
      if (v[k] < 0 || v[k] > 255) throw Error(ErrorCode::MalformedPoint, "color out of range", ln);
    cloud.points.push_back({v[0], v[1], v[2]});
    cloud.colors.push_back({static_cast<std::uint8_t>(v[3]), static_cast<std::uint8_t>(v[4]),
                            static_cast<std::uint8_t>(v[5])});
  }
  t.pointCloud = std::move(cloud);
  return t;
}

/// BDD100K info JSON: {"locations": [{latitude, longitude, timestamp (ms),
/// course (degrees clockwise from north)}, ...]}. A bare array of records
/// is accepted too.
inline Trajectory parse_bdd_json(std::string_view text, std::string id = {}) {
  const auto doc = nlohmann::json::parse(text.begin(), text.end(), nullptr, false);
  if (doc.is_discarded()) throw Error(ErrorCode::NotJson, "document is not valid JSON");
  const nlohmann::json* records = nullptr;
  if (doc.is_array())
    records = &doc;
  else if (doc.is_object() && doc.contains("locations") && doc.at("locations").is_array())
    records = &doc.at("locations");
  else
    throw Error(ErrorCode::MissingField, "no 'locations' array", {}, "locations");
  if (records->empty()) throw Error(ErrorCode::EmptyLocations, "'locations' is empty");

  Trajectory t;
  t.id = std::move(id);
  t.sourceFormat = SourceFormat::BddJson;
  for (std::size_t i = 0; i < records->size(); ++i) {
    const auto& rec = (*records)[i];
    const auto field = [&](const char* name) -> double {
      if (!rec.is_object() || !rec.contains(name) || !rec.at(name).is_number())
        throw Error(ErrorCode::MissingField, "record " + std::to_string(i) + " lacks numeric '" + name + "'", {},
                    name);
      return rec.at(name).get<double>();
    };
    const double lat = field("latitude"), lon = field("longitude");
    const double ms = field("timestamp"), course = field("course");
    if (lat < -90.0 || lat > 90.0)
      throw Error(ErrorCode::MissingField, "record " + std::to_string(i) + " latitude out of range", {}, "latitude");

    Pose p;
    p.index = i;
    p.timestamp = detail::timestamp_seconds(ms, TimestampUnit::Milliseconds);
    if (!t.poses.empty() && p.timestamp < t.poses.back().timestamp)
      throw Error(ErrorCode::MalformedLine, "record " + std::to_string(i) + " timestamp goes backwards");
    p.gps = GeoCoordinate::make(lat, lon);
    if (!t.origin) t.origin = p.gps;
    const auto xy = gps_to_local(*p.gps, *t.origin);
    p.position = {xy.x, xy.y, 0.0};
    // Compass course is clockwise; the canonical yaw is counter-clockwise.
    p.orientation = Orientation{0.0, 0.0, normalize_angle(-deg_to_rad(course))};
    t.poses.push_back(std::move(p));
  }
  return t;
}

struct InterpolationResult {
  Trajectory trajectory;
  std::size_t dropped{0};  // manifest entries outside the pose time range
};

/// One pose per image: fields are blended linearly between the two poses
/// bracketing the image timestamp, angles along the shortest arc. Images
/// outside the pose time range are dropped and counted.
inline InterpolationResult interpolate_image_poses(const Trajectory& src) {
  if (src.poses.empty()) throw Error(ErrorCode::EmptyTrajectory, "no poses to interpolate");
  const double t0 = src.poses.front().timestamp;
  const double t1 = src.poses.back().timestamp;

  std::vector<std::size_t> order;
  for (std::size_t m = 0; m < src.imageManifest.size(); ++m) {
    const double ts = src.imageManifest[m].timestamp;
    if (ts >= t0 && ts <= t1) order.push_back(m);
  }
  if (order.empty()) throw Error(ErrorCode::NoOverlap, "no image timestamp falls inside the pose time range");
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return src.imageManifest[a].timestamp < src.imageManifest[b].timestamp;
  });

  InterpolationResult out;
  out.dropped = src.imageManifest.size() - order.size();
  Trajectory& t = out.trajectory;
  t.id = src.id;
  t.sourceFormat = src.sourceFormat;
  t.imageManifest = src.imageManifest;
  t.pointCloud = src.pointCloud;
  t.origin = src.origin;
  t.poses.reserve(order.size());

  const auto lerp = [](double a, double b, double w) { return (1.0 - w) * a + w * b; };
  const auto& poses = src.poses;
  for (const std::size_t m : order) {
    const double ts = src.imageManifest[m].timestamp;
    // First pose with timestamp > ts; the bracket is [hi-1, hi].
    const auto it = std::upper_bound(poses.begin(), poses.end(), ts,
                                     [](double v, const Pose& p) { return v < p.timestamp; });
    const std::size_t hi = static_cast<std::size_t>(it - poses.begin());
    const Pose& a = poses[hi - 1];

    Pose p;
    if (a.timestamp == ts || hi == poses.size()) {
      p = a;
    } else {
      const Pose& b = poses[hi];
      const double w = (ts - a.timestamp) / (b.timestamp - a.timestamp);
      p.position = {lerp(a.position.x, b.position.x, w), lerp(a.position.y, b.position.y, w),
                    lerp(a.position.z, b.position.z, w)};
      if (a.orientation && b.orientation) {
        Orientation o;
        for (std::size_t k = 0; k < 3; ++k)
          o[k] = normalize_angle((*a.orientation)[k] + w * normalize_angle((*b.orientation)[k] - (*a.orientation)[k]));
        p.orientation = o;
      }
      if (a.gps && b.gps)
        p.gps = GeoCoordinate::make(lerp(a.gps->latitude, b.gps->latitude, w),
                                    a.gps->longitude + w * normalize_longitude(b.gps->longitude - a.gps->longitude));
      if (a.altitude && b.altitude) p.altitude = lerp(*a.altitude, *b.altitude, w);
    }
    p.index = t.poses.size();
    p.timestamp = ts;
    p.imageIndex = m;
    p.image = src.imageManifest[m].path;
    t.poses.push_back(std::move(p));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Format detection and file entry points.

/// Picks a format from the file extension, confirmed by sniffing the first
/// bytes. Returns nullopt when nothing fits; delimited files need an
/// explicit descriptor and are never auto-detected.
inline std::optional<SourceFormat> detect_format(const std::filesystem::path& path, std::string_view head) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  detail::LineReader lines(head);
  std::string_view first;
  while (lines.next(first) && detail::is_blank(first)) {
  }
  if (first.substr(0, 6) == "NVM_V3") return SourceFormat::Nvm;
  if (ext == ".nvm") return std::nullopt;
  if (ext == ".json") {
    const auto b = head.find_first_not_of(" \t\r\n");
    if (b != std::string_view::npos && (head[b] == '[' || head.find("\"locations\"") != std::string_view::npos))
      return SourceFormat::BddJson;
    return std::nullopt;
  }
  if (ext == ".csv") {
    const auto fields = detail::split_fields(first);
    const bool has_lat = std::find(fields.begin(), fields.end(), "latitude") != fields.end();
    return has_lat ? std::optional(SourceFormat::CsvIns) : std::nullopt;
  }
  if (ext == ".txt") {
    const auto toks = detail::split_whitespace(first);
    if (toks.size() == 12 && std::all_of(toks.begin(), toks.end(), [](auto s) { return detail::to_double(s).has_value(); }))
      return SourceFormat::Kitti;
  }
  return std::nullopt;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

/// Sidecar descriptor for a delimited file: `<name>.columns.json` next to it.
inline std::filesystem::path sidecar_descriptor_path(const std::filesystem::path& data) {
  auto p = data;
  p += ".columns.json";
  return p;
}

inline Trajectory parse_text(std::string_view text, const ParserDescriptor& desc, std::string id = {}) {
  switch (desc.formatId) {
    case SourceFormat::Kitti: return parse_kitti(text, std::move(id));
    case SourceFormat::CsvIns: return parse_csv_ins(text, desc, std::move(id));
    case SourceFormat::Nvm: return parse_nvm(text, std::move(id));
    case SourceFormat::BddJson: return parse_bdd_json(text, std::move(id));
    case SourceFormat::Delimited: return parse_delimited(text, desc, std::move(id));
  }
  throw Error(ErrorCode::UnknownFormat, "unsupported format");
}

/// Resolves the descriptor for a file: explicit one wins, then a sidecar
/// descriptor, then extension + sniffing.
inline ParserDescriptor resolve_descriptor(const std::filesystem::path& path, std::string_view text,
                                           std::optional<SourceFormat> forced = std::nullopt,
                                           const ParserDescriptor* explicit_desc = nullptr) {
  if (explicit_desc) {
    ParserDescriptor d = *explicit_desc;
    if (forced) d.formatId = *forced;
    return d;
  }
  if (const auto side = sidecar_descriptor_path(path); std::filesystem::exists(side)) {
    ParserDescriptor d = load_descriptor(side);
    if (forced) d.formatId = *forced;
    return d;
  }
  if (forced) {
    if (*forced == SourceFormat::Delimited)
      throw Error(ErrorCode::MissingColumn, "delimited input needs a column map", {}, "timestamp");
    return builtin_descriptor(*forced);
  }
  const auto f = detect_format(path, text.substr(0, 4096));
  if (!f) throw Error(ErrorCode::UnknownFormat, "cannot determine the format of " + path.filename().string());
  return builtin_descriptor(*f);
}

inline Trajectory parse_file(const std::filesystem::path& path, std::optional<SourceFormat> forced = std::nullopt,
                             const ParserDescriptor* explicit_desc = nullptr, std::string id = {}) {
  const std::string text = read_file(path);
  const ParserDescriptor d = resolve_descriptor(path, text, forced, explicit_desc);
  return parse_text(text, d, id.empty() ? path.filename().string() : std::move(id));
}

}  // namespace trajcur
