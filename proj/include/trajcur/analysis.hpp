#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "trajcur/error.hpp"
#include "trajcur/model.hpp"
#include "trajcur/parsers.hpp"
#include "trajcur/serialization.hpp"

namespace trajcur {

// ===========================================================================
// Settings bundles

/// Everything needed to restore a curation session. viewState and
/// sceneSettings belong to the viewer and are carried through untouched.
struct SettingsBundle {
  std::string name;
  nlohmann::json viewState = nlohmann::json::object();
  OffsetSettings offsetSettings;
  nlohmann::json sceneSettings = nlohmann::json::object();
  SamplingParams samplingParams;
  MatchParams matchParams;
  std::string loadedFileRef;
  std::optional<ParserDescriptor> parserDescriptor;
  double savedAt{0};  // seconds since epoch; not part of the content hash
  std::string contentHash;

  friend bool operator==(const SettingsBundle&, const SettingsBundle&) = default;
};

namespace detail {

inline std::uint64_t fnv1a64(std::string_view data) noexcept {
  std::uint64_t h = 14695981039346656037ULL;
  for (const unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline Json bundle_content_json(const SettingsBundle& b) {
  Json j;
  j["name"] = b.name;
  j["viewState"] = b.viewState;
  j["offsetSettings"] = to_json(b.offsetSettings);
  j["sceneSettings"] = b.sceneSettings;
  j["samplingParams"] = to_json(b.samplingParams);
  j["matchParams"] = to_json(b.matchParams);
  j["loadedFileRef"] = b.loadedFileRef;
  j["parserDescriptor"] = b.parserDescriptor ? descriptor_to_json(*b.parserDescriptor) : Json();
  return j;
}

}  // namespace detail

/// 64-bit FNV-1a over the compact JSON of every field except savedAt and
/// contentHash, as 16 lowercase hex digits.
inline std::string compute_content_hash(const SettingsBundle& b) {
  const std::uint64_t h = detail::fnv1a64(detail::bundle_content_json(b).dump());
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int k = 15; k >= 0; --k) out[static_cast<std::size_t>(15 - k)] = kHex[(h >> (4 * k)) & 0xF];
  return out;
}

inline SettingsBundle with_hash(SettingsBundle b) {
  b.contentHash = compute_content_hash(b);
  return b;
}

/// True iff the two bundles differ in anything but savedAt.
inline bool is_dirty(const SettingsBundle& current, const SettingsBundle& saved) {
  return compute_content_hash(current) != compute_content_hash(saved);
}

inline bool valid_settings_name(std::string_view name) {
  if (name.empty() || name.size() > 128 || name.front() == '.') return false;
  return std::all_of(name.begin(), name.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '-' || c == '_' || c == '.';
  });
}

inline Json to_json(const SettingsBundle& b) {
  Json j = detail::bundle_content_json(b);
  j["savedAt"] = b.savedAt;
  j["contentHash"] = compute_content_hash(b);
  return j;
}

inline std::string serialize_settings(const SettingsBundle& b) { return dump(to_json(b)); }

/// Validating reader. The stored contentHash is recomputed, not trusted.
template <typename J>
SettingsBundle settings_from_json(const J& j) {
  constexpr auto code = ErrorCode::InvalidSettings;
  if (!j.is_object()) throw Error(code, "settings bundle must be an object");
  SettingsBundle b;
  if (!j.contains("name") || !j.at("name").is_string()) throw Error(code, "name must be a string", {}, "name");
  b.name = j.at("name").template get<std::string>();
  if (!valid_settings_name(b.name)) throw Error(code, "invalid settings name '" + b.name + "'", {}, "name");
  const auto object_or_empty = [&](const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return nlohmann::json::object();
    if (!j.at(key).is_object()) throw Error(code, std::string(key) + " must be an object", {}, key);
    return nlohmann::json::parse(j.at(key).dump());
  };
  b.viewState = object_or_empty("viewState");
  b.sceneSettings = object_or_empty("sceneSettings");
  if (j.contains("offsetSettings")) b.offsetSettings = offset_settings_from_json(j.at("offsetSettings"));
  try {
    if (j.contains("samplingParams")) b.samplingParams = sampling_params_from_json(j.at("samplingParams"));
    if (j.contains("matchParams")) b.matchParams = match_params_from_json(j.at("matchParams"));
  } catch (const Error& e) {
    throw Error(code, e.what(), {}, e.subject());
  }
  if (j.contains("loadedFileRef")) {
    if (!j.at("loadedFileRef").is_string()) throw Error(code, "loadedFileRef must be a string", {}, "loadedFileRef");
    b.loadedFileRef = j.at("loadedFileRef").template get<std::string>();
  }
  if (j.contains("parserDescriptor") && !j.at("parserDescriptor").is_null())
    b.parserDescriptor = descriptor_from_json(j.at("parserDescriptor"));
  b.savedAt = detail::number_or(j, "savedAt", 0.0, code);
  b.contentHash = compute_content_hash(b);
  return b;
}

inline SettingsBundle parse_settings(std::string_view text) {
  const auto j = nlohmann::json::parse(text.begin(), text.end(), nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::NotJson, "settings body is not valid JSON");
  return settings_from_json(j);
}

/// Bundles persisted as `<dir>/<name>.json`. Writes go through a temporary
/// file and a rename; concurrent saves of one name are last-writer-wins.
class SettingsStore {
 public:
  explicit SettingsStore(std::filesystem::path dir) : dir_(std::move(dir)) {}

  [[nodiscard]] const std::filesystem::path& directory() const noexcept { return dir_; }

  std::string save(const SettingsBundle& bundle) {
    if (!valid_settings_name(bundle.name))
      throw Error(ErrorCode::InvalidSettings, "invalid settings name '" + bundle.name + "'", {}, "name");
    const std::string body = serialize_settings(bundle);
    std::lock_guard lock(mutex_);
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    const auto target = path_for(bundle.name);
    auto tmp = target;
    tmp += ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out || !out.write(body.data(), static_cast<std::streamsize>(body.size())))
        throw Error(ErrorCode::StorageFailure, "cannot write " + tmp.string());
    }
    std::filesystem::rename(tmp, target, ec);
    if (ec) throw Error(ErrorCode::StorageFailure, "cannot replace " + target.string() + ": " + ec.message());
    return bundle.name;
  }

  /// The stored document, byte for byte.
  [[nodiscard]] std::string restore_raw(const std::string& name) const {
    if (!valid_settings_name(name)) throw Error(ErrorCode::NotFound, "no settings named '" + name + "'");
    std::lock_guard lock(mutex_);
    std::ifstream in(path_for(name), std::ios::binary);
    if (!in) throw Error(ErrorCode::NotFound, "no settings named '" + name + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  }

  [[nodiscard]] SettingsBundle restore(const std::string& name) const { return parse_settings(restore_raw(name)); }

  [[nodiscard]] std::vector<std::string> list() const {
    std::vector<std::string> names;
    std::error_code ec;
    for (const auto& e : std::filesystem::directory_iterator(dir_, ec))
      if (e.path().extension() == ".json") names.push_back(e.path().stem().string());
    std::sort(names.begin(), names.end());
    return names;
  }

 private:
  [[nodiscard]] std::filesystem::path path_for(const std::string& name) const { return dir_ / (name + ".json"); }

  std::filesystem::path dir_;
  mutable std::mutex mutex_;
};

// ===========================================================================
// Top-k retrieval analysis

/// One training epoch's retrieval dump: a dense query x gallery distance
/// matrix (row-major) with per-axis labels.
struct RetrievalEpoch {
  long long step{0};
  std::size_t rows{0};
  std::size_t cols{0};
  std::vector<double> distances;
  std::vector<long long> queryLabels;
  std::vector<long long> galleryLabels;
  std::map<std::string, std::string> indexToImage;

  [[nodiscard]] double at(std::size_t r, std::size_t c) const { return distances[r * cols + c]; }
};

inline void validate(const RetrievalEpoch& e) {
  if (e.distances.size() != e.rows * e.cols)
    throw Error(ErrorCode::LengthMismatch, "distance matrix does not match its shape");
  if (e.queryLabels.size() != e.rows || e.galleryLabels.size() != e.cols)
    throw Error(ErrorCode::LengthMismatch, "label lists do not match the matrix shape");
  for (const double d : e.distances)
    if (!(d >= 0.0)) throw Error(ErrorCode::InvalidParams, "distances must be nonnegative");
}

/// Binary matrix container: uint64 rows, uint64 cols, then rows*cols
/// float32 values, row-major, little-endian.
inline std::vector<double> read_matrix_binary(std::string_view bytes, std::size_t& rows, std::size_t& cols) {
  const auto get = [&](std::size_t offset, void* dst, std::size_t n) {
    auto* out = static_cast<unsigned char*>(dst);
    for (std::size_t k = 0; k < n; ++k)
      out[std::endian::native == std::endian::little ? k : n - 1 - k] =
          static_cast<unsigned char>(bytes[offset + k]);
  };
  if (bytes.size() < 16) throw Error(ErrorCode::TruncatedFile, "matrix header needs 16 bytes");
  std::uint64_t r = 0, c = 0;
  get(0, &r, 8);
  get(8, &c, 8);
  if (c != 0 && r > (bytes.size() - 16) / 4 / c) throw Error(ErrorCode::TruncatedFile, "matrix payload too short");
  if (bytes.size() != 16 + r * c * 4) throw Error(ErrorCode::TruncatedFile, "matrix payload size mismatch");
  rows = r;
  cols = c;
  std::vector<double> out(r * c);
  for (std::size_t k = 0; k < out.size(); ++k) {
    float f = 0;
    get(16 + 4 * k, &f, 4);
    out[k] = f;
  }
  return out;
}

/// JSON epoch: {"step", "shape": [rows, cols], "distances": [row-major],
/// "labels": {"query": [...], "gallery": [...]}, "indexToImage": {key: path}}.
/// When "distances" is absent the matrix comes from `matrix_bytes`.
inline RetrievalEpoch load_retrieval_epoch(std::string_view json_text, std::optional<std::string_view> matrix_bytes = {}) {
  const auto j = nlohmann::json::parse(json_text.begin(), json_text.end(), nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::NotJson, "retrieval epoch is not a JSON object");
  RetrievalEpoch e;
  try {
    e.step = j.value("step", 0LL);
    if (j.contains("distances")) {
      const auto shape = j.at("shape").get<std::vector<std::size_t>>();
      if (shape.size() != 2) throw Error(ErrorCode::LengthMismatch, "shape must have two entries");
      e.rows = shape[0];
      e.cols = shape[1];
      e.distances = j.at("distances").get<std::vector<double>>();
    } else if (matrix_bytes) {
      e.distances = read_matrix_binary(*matrix_bytes, e.rows, e.cols);
    } else {
      throw Error(ErrorCode::MissingField, "no distances", {}, "distances");
    }
    e.queryLabels = j.at("labels").at("query").get<std::vector<long long>>();
    e.galleryLabels = j.at("labels").at("gallery").get<std::vector<long long>>();
    if (j.contains("indexToImage")) e.indexToImage = j.at("indexToImage").get<std::map<std::string, std::string>>();
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::MissingField, ex.what());
  }
  validate(e);
  return e;
}

/// The k smallest distances in `queryRow`, ascending, ties to the smaller
/// gallery index.
inline std::vector<std::pair<std::size_t, double>> topk(const RetrievalEpoch& e, std::size_t queryRow, std::size_t k) {
  if (queryRow >= e.rows) throw Error(ErrorCode::IndexOutOfRange, "query row " + std::to_string(queryRow));
  if (k < 1 || k > e.cols) throw Error(ErrorCode::BadK, "k must be in [1, " + std::to_string(e.cols) + "]");
  std::vector<std::pair<std::size_t, double>> row(e.cols);
  for (std::size_t c = 0; c < e.cols; ++c) row[c] = {c, e.at(queryRow, c)};
  const auto by_distance = [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second < b.second : a.first < b.first;
  };
  std::partial_sort(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(k), row.end(), by_distance);
  row.resize(k);
  return row;
}

/// Fraction of queries with at least one same-label gallery item in their top k.
inline double topk_accuracy(const RetrievalEpoch& e, std::size_t k) {
  if (e.rows == 0) throw Error(ErrorCode::EmptyInput, "no queries");
  std::size_t hits = 0;
  for (std::size_t r = 0; r < e.rows; ++r) {
    const auto top = topk(e, r, k);
    if (std::any_of(top.begin(), top.end(),
                    [&](const auto& m) { return e.galleryLabels[m.first] == e.queryLabels[r]; }))
      ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(e.rows);
}

// ===========================================================================
// HTMap overlay

struct HTMapOverlay {
  std::vector<long long> nodeOfPose;  // location id per pose, by position
  std::vector<std::pair<std::size_t, std::size_t>> loopClosures;  // a < b, sorted, unique

  friend bool operator==(const HTMapOverlay&, const HTMapOverlay&) = default;
};

/// {"nodes": [location id per pose], "loops": [[a, b], ...]}
inline HTMapOverlay load_htmap(std::string_view text, const Trajectory& trajectory) {
  const auto j = nlohmann::json::parse(text.begin(), text.end(), nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::NotJson, "HTMap document is not valid JSON");
  if (!j.is_object() || !j.contains("nodes") || !j.at("nodes").is_array())
    throw Error(ErrorCode::MissingField, "no 'nodes' array", {}, "nodes");
  const auto& nodes = j.at("nodes");
  const std::size_t n = trajectory.poses.size();
  if (nodes.size() != n)
    throw Error(ErrorCode::LengthMismatch,
                std::to_string(nodes.size()) + " nodes for " + std::to_string(n) + " poses");
  HTMapOverlay overlay;
  overlay.nodeOfPose.reserve(n);
  for (const auto& v : nodes) {
    if (!v.is_number_integer()) throw Error(ErrorCode::MissingField, "node ids must be integers", {}, "nodes");
    overlay.nodeOfPose.push_back(v.get<long long>());
  }
  std::set<std::pair<std::size_t, std::size_t>> loops;
  if (j.contains("loops")) {
    if (!j.at("loops").is_array()) throw Error(ErrorCode::MissingField, "'loops' must be an array", {}, "loops");
    for (const auto& pair : j.at("loops")) {
      if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number_integer() || !pair[1].is_number_integer())
        throw Error(ErrorCode::BadLoopIndex, "loop entries must be [a, b] integer pairs");
      const long long a = pair[0].get<long long>(), b = pair[1].get<long long>();
      if (a < 0 || b < 0 || static_cast<std::size_t>(a) >= n || static_cast<std::size_t>(b) >= n)
        throw Error(ErrorCode::BadLoopIndex,
                    "loop [" + std::to_string(a) + ", " + std::to_string(b) + "] outside " + std::to_string(n) + " poses");
      loops.insert(std::minmax(static_cast<std::size_t>(a), static_cast<std::size_t>(b)));
    }
  }
  overlay.loopClosures.assign(loops.begin(), loops.end());
  return overlay;
}

}  // namespace trajcur
