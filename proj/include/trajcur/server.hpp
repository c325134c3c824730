#pragma once

// JSON-over-HTTP front end: dataset discovery, parsed trajectories, the
// sampling/matching computations, images and saved settings.
//
//   GET  /api/datasets
//   GET  /api/trajectories/{id}?interpolate=bool&offsets=settingsName
//   GET  /api/pointclouds/{id}
//   POST /api/compute/sample   {trajectoryId, params, interpolate?}
//   POST /api/compute/match    {queryId, candidateId, params | profile}
//   GET  /api/images/{datasetId}/{relativePath}
//   GET  /api/settings, GET|PUT /api/settings/{name}
//   GET  /api/health?delayMs=n
//
// Trajectory ids are paths relative to the dataset root. A dataset is a
// top-level entry of the root: a recognised file on its own, or a
// directory holding recognised files at any depth.

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <future>
#include <iostream>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "trajcur/analysis.hpp"
#include "trajcur/error.hpp"
#include "trajcur/matching.hpp"
#include "trajcur/model.hpp"
#include "trajcur/parsers.hpp"
#include "trajcur/sampling.hpp"
#include "trajcur/serialization.hpp"
#include "trajcur/transforms.hpp"

namespace trajcur {

namespace fs = std::filesystem;

inline constexpr int kParserVersion = 1;
inline constexpr int kDefaultPort = 8008;

// ===========================================================================
// Discovery

struct TrajectoryFile {
  std::string id;  // path relative to the root, '/'-separated
  fs::path path;
  ParserDescriptor descriptor;
};

struct DatasetEntry {
  std::string id;
  fs::path directory;  // base for image paths
  std::vector<TrajectoryFile> trajectories;
};

namespace detail {

inline bool hidden(const fs::path& p) {
  const auto name = p.filename().string();
  return !name.empty() && name.front() == '.';
}

inline bool is_sidecar(const fs::path& p) {
  const auto name = p.filename().string();
  constexpr std::string_view suffix = ".columns.json";
  return name.size() > suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
}

/// Descriptor for a file if it is a trajectory we can read, else nullopt.
inline std::optional<ParserDescriptor> recognise(const fs::path& path) {
  if (hidden(path) || is_sidecar(path)) return std::nullopt;
  try {
    if (fs::exists(sidecar_descriptor_path(path))) return load_descriptor(sidecar_descriptor_path(path));
  } catch (const Error& e) {
    std::cerr << "warning: ignoring " << path.string() << ": " << e.what() << "\n";
    return std::nullopt;
  }
  const auto name = path.filename().string();
  for (const auto f : {SourceFormat::Kitti, SourceFormat::CsvIns, SourceFormat::Nvm, SourceFormat::BddJson}) {
    if (!matches_any_glob(builtin_descriptor(f), name)) continue;
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    std::string head(4096, '\0');
    in.read(head.data(), static_cast<std::streamsize>(head.size()));
    head.resize(static_cast<std::size_t>(in.gcount()));
    const auto detected = detect_format(path, head);
    return detected ? std::optional(builtin_descriptor(*detected)) : std::nullopt;
  }
  return std::nullopt;
}

inline std::string relative_id(const fs::path& path, const fs::path& root) {
  return path.lexically_relative(root).generic_string();
}

}  // namespace detail

/// Deterministic (lexicographically sorted) scan of the root. Unreadable
/// subtrees are skipped with a warning on stderr.
inline std::vector<DatasetEntry> discover_datasets(const fs::path& root) {
  std::error_code ec;
  std::vector<fs::path> top;
  for (fs::directory_iterator it(root, ec), end; !ec && it != end; it.increment(ec)) top.push_back(it->path());
  if (ec) throw Error(ErrorCode::Io, "cannot read dataset root " + root.string() + ": " + ec.message());
  std::sort(top.begin(), top.end());

  std::vector<DatasetEntry> out;
  for (const fs::path& entry : top) {
    if (detail::hidden(entry)) continue;
    std::error_code sec;
    if (fs::is_regular_file(entry, sec)) {
      if (auto d = detail::recognise(entry))
        out.push_back({entry.filename().string(), root, {{detail::relative_id(entry, root), entry, *d}}});
      continue;
    }
    if (!fs::is_directory(entry, sec)) continue;

    DatasetEntry ds{entry.filename().string(), entry, {}};
    std::vector<fs::path> files;
    std::vector<fs::path> pending{entry};
    while (!pending.empty()) {
      const fs::path dir = pending.back();
      pending.pop_back();
      std::error_code dec;
      fs::directory_iterator it(dir, dec);
      if (dec) {
        std::cerr << "warning: skipping unreadable directory " << dir.string() << ": " << dec.message() << "\n";
        continue;
      }
      for (fs::directory_iterator end; it != end; it.increment(dec)) {
        if (dec) break;
        const fs::path p = it->path();
        if (detail::hidden(p)) continue;
        std::error_code tec;
        if (it->is_directory(tec)) {
          // Symlinked directories are not followed, so link cycles cannot recurse.
          if (!it->is_symlink(tec)) pending.push_back(p);
        } else if (it->is_regular_file(tec))
          files.push_back(p);
      }
    }
    std::sort(files.begin(), files.end());
    for (const fs::path& f : files)
      if (auto d = detail::recognise(f)) ds.trajectories.push_back({detail::relative_id(f, root), f, *d});
    if (!ds.trajectories.empty()) out.push_back(std::move(ds));
  }
  return out;
}

// ===========================================================================
// Parse cache

/// LRU cache of parsed trajectories keyed by (path, mtime, size, descriptor,
/// parser version). Concurrent first loads of one key share a single parse.
class ParseCache {
 public:
  using Value = std::shared_ptr<const Trajectory>;

  explicit ParseCache(std::size_t capacity = 32) : capacity_(std::max<std::size_t>(capacity, 1)) {}

  Value get(const TrajectoryFile& file) {
    std::error_code ec;
    const auto mtime = fs::last_write_time(file.path, ec);
    const auto size = ec ? 0 : fs::file_size(file.path, ec);
    if (ec) throw Error(ErrorCode::NotFound, "cannot stat " + file.id);
    const std::string key = file.path.string() + '\n' + std::to_string(mtime.time_since_epoch().count()) + '\n' +
                            std::to_string(size) + '\n' + descriptor_to_json(file.descriptor).dump() + '\n' +
                            std::to_string(kParserVersion);

    std::promise<Value> promise;
    std::shared_future<Value> future;
    bool owner = false;
    {
      std::lock_guard lock(mutex_);
      if (const auto it = index_.find(key); it != index_.end()) {
        order_.splice(order_.begin(), order_, it->second);
        future = it->second->second;
      } else {
        future = promise.get_future().share();
        order_.emplace_front(key, future);
        index_[key] = order_.begin();
        owner = true;
        ++parses_;
        while (order_.size() > capacity_) {
          index_.erase(order_.back().first);
          order_.pop_back();
        }
      }
    }
    if (owner) {
      try {
        promise.set_value(std::make_shared<const Trajectory>(parse_text(read_file(file.path), file.descriptor, file.id)));
      } catch (...) {
        promise.set_exception(std::current_exception());
      }
    }
    return future.get();
  }

  /// Number of parses started so far.
  [[nodiscard]] std::size_t parse_count() const {
    std::lock_guard lock(mutex_);
    return parses_;
  }

 private:
  using Entry = std::pair<std::string, std::shared_future<Value>>;
  std::size_t capacity_;
  mutable std::mutex mutex_;
  std::list<Entry> order_;
  std::map<std::string, std::list<Entry>::iterator> index_;
  std::size_t parses_{0};
};

// ===========================================================================
// Path safety

/// Resolves `relative` under `base`, refusing anything that escapes it:
/// absolute paths, ".." segments, and symlinks pointing outside.
inline std::optional<fs::path> resolve_inside(const fs::path& base, std::string_view relative) {
  if (relative.empty() || relative.front() == '/' || relative.find('\\') != std::string_view::npos ||
      relative.find('\0') != std::string_view::npos)
    return std::nullopt;
  const fs::path rel{std::string(relative)};
  for (const auto& part : rel)
    if (part == "..") return std::nullopt;
  std::error_code ec;
  const fs::path canon_base = fs::weakly_canonical(base, ec);
  if (ec) return std::nullopt;
  const fs::path target = fs::weakly_canonical(canon_base / rel, ec);
  if (ec) return std::nullopt;
  auto b = canon_base.begin();
  auto t = target.begin();
  for (; b != canon_base.end(); ++b, ++t)
    if (t == target.end() || *t != *b) return std::nullopt;
  return target;
}

inline std::string content_type_for(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".png") return "image/png";
  if (ext == ".gif") return "image/gif";
  if (ext == ".bmp") return "image/bmp";
  if (ext == ".tif" || ext == ".tiff") return "image/tiff";
  if (ext == ".webp") return "image/webp";
  return "application/octet-stream";
}

// ===========================================================================
// API

struct ServerConfig {
  fs::path root;
  fs::path settingsDir;
  std::optional<fs::path> viewerDir;
  std::string host{"0.0.0.0"};
  int port{kDefaultPort};
  std::size_t cacheCapacity{32};
};

inline int http_status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotFound: return 404;
    case ErrorCode::InvalidParams:
    case ErrorCode::InvalidSettings:
    case ErrorCode::BadK:
    case ErrorCode::IndexOutOfRange: return 400;
    case ErrorCode::StorageFailure:
    case ErrorCode::Io: return 500;
    default: return 422;
  }
}

class ApiServer {
 public:
  explicit ApiServer(ServerConfig config)
      : config_(std::move(config)), cache_(config_.cacheCapacity), settings_(config_.settingsDir) {
    routes();
  }

  ApiServer(const ApiServer&) = delete;
  ApiServer& operator=(const ApiServer&) = delete;

  /// Binds the listening socket; port 0 picks a free port. Returns the bound
  /// port, or nullopt when the address is unavailable.
  std::optional<int> bind() {
    if (config_.port == 0) {
      const int port = http_.bind_to_any_port(config_.host);
      if (port <= 0) return std::nullopt;
      config_.port = port;
      return port;
    }
    if (!http_.bind_to_port(config_.host, config_.port)) return std::nullopt;
    return config_.port;
  }

  /// Serves until stop() is called. Requests already accepted are finished
  /// before this returns.
  bool listen() { return http_.listen_after_bind(); }
  void stop() { http_.stop(); }
  void wait_until_ready() const { http_.wait_until_ready(); }

  [[nodiscard]] const ServerConfig& config() const noexcept { return config_; }
  [[nodiscard]] const ParseCache& cache() const noexcept { return cache_; }

  // Library-level operations behind each endpoint; also used by tests to
  // check the HTTP bodies against direct calls.

  Trajectory load_trajectory(const std::string& id, bool interpolate = false,
                             const std::optional<std::string>& offsetsName = std::nullopt) {
    const TrajectoryFile file = find_trajectory(id);
    Trajectory t = *cache_.get(file);
    if (interpolate) t = interpolate_image_poses(t).trajectory;
    if (offsetsName) t = apply_scene_settings(t, settings_.restore(*offsetsName).offsetSettings);
    return t;
  }

  std::string datasets_body() {
    Json arr = Json::array();
    for (const DatasetEntry& d : discover_datasets(config_.root)) {
      Json j;
      j["id"] = d.id;
      j["format"] = std::string(to_string(d.trajectories.front().descriptor.formatId));
      j["trajectoryCount"] = d.trajectories.size();
      Json ids = Json::array();
      for (const auto& t : d.trajectories) ids.push_back(t.id);
      j["trajectories"] = std::move(ids);
      arr.push_back(std::move(j));
    }
    return dump(arr);
  }

  std::string trajectory_body(const std::string& id, bool interpolate, const std::optional<std::string>& offsets) {
    const Trajectory t = load_trajectory(id, interpolate, offsets);
    std::optional<std::string> cloud_url;
    if (t.pointCloud) cloud_url = "/api/pointclouds/" + id;
    return dump(trajectory_to_json(t, cloud_url));
  }

  std::string sample_body(const std::string& requestBody) {
    const auto req = parse_body(requestBody);
    const std::string id = required_string(req, "trajectoryId");
    const SamplingParams params = sampling_params_from_json(req.contains("params") ? req.at("params") : Json::object());
    const bool interpolate = req.value("interpolate", false);
    const Trajectory t = load_trajectory(id, interpolate);
    return dump(sample_export_json(t, sample(t.poses, params)));
  }

  std::string match_body(const std::string& requestBody) {
    const auto req = parse_body(requestBody);
    const std::string qid = required_string(req, "queryId");
    const std::string cid = required_string(req, "candidateId");
    MatchParams params;
    if (req.contains("profile")) {
      if (!req.at("profile").is_string()) throw Error(ErrorCode::InvalidParams, "profile must be a string", {}, "profile");
      params = settings_.restore(req.at("profile").get<std::string>()).matchParams;
    }
    if (req.contains("params")) params = match_params_from_json(req.at("params"));
    validate(params);
    const Trajectory q = load_trajectory(qid);
    const Trajectory c = qid == cid ? q : load_trajectory(cid);
    return dump(match_export_json(qid, cid, params, find_correspondences(q, c, params)));
  }

  std::string put_settings_body(const std::string& name, const std::string& body) {
    SettingsBundle b = parse_settings(body);
    if (b.name != name)
      throw Error(ErrorCode::InvalidSettings, "bundle name '" + b.name + "' does not match '" + name + "'", {}, "name");
    settings_.save(b);
    return settings_.restore_raw(name);
  }

 private:
  static Json parse_body(const std::string& body) {
    auto j = Json::parse(body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::InvalidParams, "request body must be a JSON object");
    return j;
  }

  static std::string required_string(const Json& j, const char* key) {
    if (!j.contains(key) || !j.at(key).is_string())
      throw Error(ErrorCode::InvalidParams, std::string(key) + " is required", {}, key);
    return j.at(key).get<std::string>();
  }

  TrajectoryFile find_trajectory(const std::string& id) {
    for (DatasetEntry& d : discover_datasets(config_.root))
      for (TrajectoryFile& t : d.trajectories)
        if (t.id == id) return std::move(t);
    throw Error(ErrorCode::NotFound, "unknown trajectory '" + id + "'");
  }

  static void send_json(httplib::Response& res, int status, std::string body) {
    res.status = status;
    res.set_content(std::move(body), "application/json");
  }

  template <typename Fn>
  static void guarded(httplib::Response& res, Fn&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      send_json(res, http_status_for(e.code()), dump(error_to_json(e)));
    } catch (const std::exception& e) {
      send_json(res, 500, dump(error_to_json(Error(ErrorCode::Io, e.what()))));
    }
  }

  static bool query_flag(const httplib::Request& req, const char* key) {
    if (!req.has_param(key)) return false;
    const auto v = req.get_param_value(key);
    return v == "true" || v == "1" || v == "yes";
  }

  void routes() {
    using httplib::Request;
    using httplib::Response;

    http_.Get("/api/health", [](const Request& req, Response& res) {
      if (req.has_param("delayMs")) {
        const long ms = std::clamp(std::atol(req.get_param_value("delayMs").c_str()), 0L, 10'000L);
        std::this_thread::sleep_for(std::chrono::milliseconds(ms));
      }
      send_json(res, 200, "{\"status\":\"ok\"}\n");
    });

    http_.Get("/api/datasets", [this](const Request&, Response& res) {
      guarded(res, [&] { send_json(res, 200, datasets_body()); });
    });

    http_.Get(R"(/api/trajectories/(.+))", [this](const Request& req, Response& res) {
      guarded(res, [&] {
        std::optional<std::string> offsets;
        if (req.has_param("offsets") && !req.get_param_value("offsets").empty())
          offsets = req.get_param_value("offsets");
        send_json(res, 200, trajectory_body(req.matches[1], query_flag(req, "interpolate"), offsets));
      });
    });

    http_.Get(R"(/api/pointclouds/(.+))", [this](const Request& req, Response& res) {
      guarded(res, [&] {
        const Trajectory t = load_trajectory(req.matches[1]);
        if (!t.pointCloud) throw Error(ErrorCode::NotFound, "trajectory has no point cloud");
        res.status = 200;
        res.set_content(point_cloud_to_binary(*t.pointCloud), "application/octet-stream");
      });
    });

    http_.Post("/api/compute/sample", [this](const Request& req, Response& res) {
      guarded(res, [&] { send_json(res, 200, sample_body(req.body)); });
    });

    http_.Post("/api/compute/match", [this](const Request& req, Response& res) {
      guarded(res, [&] { send_json(res, 200, match_body(req.body)); });
    });

    http_.Get(R"(/api/images/([^/]+)/(.+))", [this](const Request& req, Response& res) {
      guarded(res, [&] {
        const std::string dataset = req.matches[1];
        const std::string rel = req.matches[2];
        if (dataset == ".." || dataset == "." || !resolve_inside(config_.root, rel)) {
          send_json(res, 403, "{\"error\":\"Forbidden\"}\n");
          return;
        }
        std::optional<fs::path> base;
        for (const DatasetEntry& d : discover_datasets(config_.root))
          if (d.id == dataset) base = d.directory;
        if (!base) throw Error(ErrorCode::NotFound, "unknown dataset '" + dataset + "'");
        const auto target = resolve_inside(*base, rel);
        if (!target) {
          send_json(res, 403, "{\"error\":\"Forbidden\"}\n");
          return;
        }
        std::error_code ec;
        if (!fs::is_regular_file(*target, ec)) throw Error(ErrorCode::NotFound, "no such image");
        res.status = 200;
        res.set_content(read_file(*target), content_type_for(*target));
      });
    });

    http_.Get("/api/settings", [this](const Request&, Response& res) {
      guarded(res, [&] { send_json(res, 200, dump(Json(settings_.list()))); });
    });

    http_.Get(R"(/api/settings/([^/]+))", [this](const Request& req, Response& res) {
      guarded(res, [&] { send_json(res, 200, settings_.restore_raw(req.matches[1])); });
    });

    http_.Put(R"(/api/settings/([^/]+))", [this](const Request& req, Response& res) {
      guarded(res, [&] {
        try {
          send_json(res, 200, put_settings_body(req.matches[1], req.body));
        } catch (const Error& e) {
          // Any schema problem in a PUT body is the client's fault.
          if (e.code() == ErrorCode::StorageFailure) throw;
          send_json(res, 400, dump(error_to_json(e)));
        }
      });
    });

    if (config_.viewerDir && fs::is_directory(*config_.viewerDir)) http_.set_mount_point("/", config_.viewerDir->string());
  }

  ServerConfig config_;
  ParseCache cache_;
  SettingsStore settings_;
  httplib::Server http_;
};

}  // namespace trajcur
