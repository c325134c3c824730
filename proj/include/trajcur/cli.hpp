#pragma once

// Command-line front end: info, sample, match, serve.
// Exit codes: 0 success, 2 unreadable or unparsable input, 3 invalid
// parameters, 4 environment (port busy, unwritable output, bad root).
// Every flag can also come from an OV_-prefixed environment variable; an
// explicit flag wins.

#include <atomic>
#include <csignal>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <optional>
#include <pthread.h>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "trajcur/analysis.hpp"
#include "trajcur/error.hpp"
#include "trajcur/matching.hpp"
#include "trajcur/parsers.hpp"
#include "trajcur/sampling.hpp"
#include "trajcur/serialization.hpp"
#include "trajcur/server.hpp"

namespace trajcur::cli {

enum ExitCode : int { kOk = 0, kParseFailure = 2, kBadParams = 3, kEnvironment = 4 };

inline int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::InvalidParams:
    case ErrorCode::InvalidSettings:
    case ErrorCode::NotFound: return kBadParams;
    case ErrorCode::StorageFailure: return kEnvironment;
    default: return kParseFailure;  // parse errors, unreadable files, unusable data
  }
}

struct InputOptions {
  std::string path;
  std::string format{"auto"};
  std::string columnMap;
  std::string id;
};

inline Trajectory load_input(const InputOptions& in) {
  std::optional<SourceFormat> forced;
  if (in.format != "auto") {
    forced = source_format_from_string(in.format);
    if (!forced) throw Error(ErrorCode::InvalidParams, "unknown format '" + in.format + "'", {}, "format");
  }
  std::optional<ParserDescriptor> desc;
  if (!in.columnMap.empty()) desc = load_descriptor(in.columnMap);
  if (!std::filesystem::is_regular_file(in.path)) throw Error(ErrorCode::Io, "cannot read " + in.path);
  return parse_file(in.path, forced, desc ? &*desc : nullptr, in.id);
}

struct TrajectorySummary {
  std::size_t poseCount{0};
  double duration{0};
  double pathLength{0};
  Vec3 bboxMin{};
  Vec3 bboxMax{};
  std::size_t imageCount{0};
};

inline TrajectorySummary summarize(const Trajectory& t) {
  TrajectorySummary s;
  s.poseCount = t.poses.size();
  s.imageCount = t.imageManifest.size();
  if (t.poses.empty()) return s;
  s.duration = t.poses.back().timestamp - t.poses.front().timestamp;
  s.pathLength = path_length(t.poses);
  s.bboxMin = s.bboxMax = t.poses.front().position;
  for (const Pose& p : t.poses)
    for (std::size_t k = 0; k < 3; ++k) {
      s.bboxMin[k] = std::min(s.bboxMin[k], p.position[k]);
      s.bboxMax[k] = std::max(s.bboxMax[k], p.position[k]);
    }
  return s;
}

inline Json summary_json(const Trajectory& t, const TrajectorySummary& s) {
  Json j;
  j["id"] = t.id;
  j["format"] = std::string(to_string(t.sourceFormat));
  j["poseCount"] = s.poseCount;
  j["duration"] = s.duration;
  j["pathLength"] = s.pathLength;
  j["bbox"] = {{"min", {s.bboxMin.x, s.bboxMin.y, s.bboxMin.z}}, {"max", {s.bboxMax.x, s.bboxMax.y, s.bboxMax.z}}};
  j["imageCount"] = s.imageCount;
  return j;
}

inline void write_output(const std::string& path, const std::string& body, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << body;
    return;
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f || !f.write(body.data(), static_cast<std::streamsize>(body.size())))
    throw Error(ErrorCode::StorageFailure, "cannot write " + path);
}

namespace detail {

inline void add_input_options(CLI::App& cmd, InputOptions& in, const char* positional) {
  cmd.add_option(positional, in.path, "trajectory file")->required();
  cmd.add_option("--format", in.format, "auto|kitti|csv-ins|nvm|bdd-json|delimited")->envname("OV_FORMAT");
  cmd.add_option("--column-map", in.columnMap, "column descriptor JSON")->envname("OV_COLUMN_MAP");
}

}  // namespace detail

struct ServeOptions {
  std::string root;
  int port{kDefaultPort};
  std::string host{"0.0.0.0"};
  std::string settingsDir;
  std::string viewerDir;
};

/// Runs the server until SIGINT/SIGTERM. Blocks those signals in the calling
/// thread (and so in every thread it starts) and waits for them on a
/// dedicated thread.
inline int serve(const ServeOptions& o, std::ostream& out, std::ostream& err) {
  std::error_code ec;
  if (!std::filesystem::is_directory(o.root, ec)) {
    err << "error: root " << o.root << " is not a readable directory\n";
    return kEnvironment;
  }
  ServerConfig cfg;
  cfg.root = o.root;
  cfg.settingsDir = o.settingsDir.empty() ? std::filesystem::path(o.root) / ".settings" : std::filesystem::path(o.settingsDir);
  if (!o.viewerDir.empty()) cfg.viewerDir = o.viewerDir;
  cfg.host = o.host;
  cfg.port = o.port;

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  ApiServer server(cfg);
  const auto port = server.bind();
  if (!port) {
    err << "error: cannot bind " << o.host << ":" << o.port << "\n";
    return kEnvironment;
  }
  out << "listening on http://" << o.host << ":" << *port << std::endl;

  std::atomic<bool> finished{false};
  std::thread waiter([&] {
    const timespec tick{0, 100'000'000};
    while (!finished) {
      if (sigtimedwait(&signals, nullptr, &tick) > 0) {
        server.stop();
        return;
      }
    }
  });
  server.listen();
  finished = true;
  waiter.join();
  out << "shut down" << std::endl;
  return kOk;
}

inline int run(std::vector<std::string> args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Trajectory curation tool"};
  app.name("trajcur");
  app.require_subcommand(1);

  InputOptions info_in;
  bool info_json = false;
  auto* info = app.add_subcommand("info", "summarise a trajectory file");
  detail::add_input_options(*info, info_in, "path");
  info->add_flag("--json", info_json, "print the summary as JSON");

  InputOptions sample_in;
  std::string mode = "adaptive", sample_out;
  SamplingParams sp;
  bool interpolate = false;
  auto* samp = app.add_subcommand("sample", "decimate a trajectory");
  detail::add_input_options(*samp, sample_in, "path");
  samp->add_option("--mode", mode, "uniform|adaptive")->envname("OV_MODE");
  samp->add_option("--tau-d", sp.tauD, "distance threshold (m)")->envname("OV_TAU_D");
  samp->add_option("--tau-theta", sp.tauTheta, "heading threshold (deg)")->envname("OV_TAU_THETA");
  samp->add_flag("--interpolate", interpolate, "sample the per-image poses")->envname("OV_INTERPOLATE");
  samp->add_option("--id", sample_in.id, "trajectory id written to the export");
  samp->add_option("--out", sample_out, "output file (default stdout)")->envname("OV_OUT");

  InputOptions q_in, c_in;
  MatchParams mp;
  std::string match_out;
  auto* match = app.add_subcommand("match", "find correspondences between two trajectories");
  detail::add_input_options(*match, q_in, "query");
  match->add_option("candidate", c_in.path, "candidate trajectory file")->required();
  match->add_option("--alpha", mp.alpha)->envname("OV_ALPHA");
  match->add_option("--beta", mp.beta)->envname("OV_BETA");
  match->add_option("--tau-beta-theta", mp.tauBetaTheta)->envname("OV_TAU_BETA_THETA");
  match->add_option("--tau-beta-d", mp.tauBetaD)->envname("OV_TAU_BETA_D");
  match->add_option("--tau-loss", mp.tauLoss)->envname("OV_TAU_LOSS");
  match->add_option("--max-distance", mp.maxDistance)->envname("OV_MAX_DISTANCE");
  match->add_option("--query-id", q_in.id);
  match->add_option("--candidate-id", c_in.id);
  match->add_option("--out", match_out)->envname("OV_OUT");

  ServeOptions so;
  auto* srv = app.add_subcommand("serve", "run the HTTP API");
  srv->add_option("--root", so.root, "dataset root")->required()->envname("OV_ROOT");
  srv->add_option("--port", so.port)->envname("OV_PORT");
  srv->add_option("--host", so.host)->envname("OV_HOST");
  srv->add_option("--settings-dir", so.settingsDir)->envname("OV_SETTINGS_DIR");
  srv->add_option("--viewer-dir", so.viewerDir)->envname("OV_VIEWER_DIR");

  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kBadParams;
  }

  try {
    if (*info) {
      const Trajectory t = load_input(info_in);
      const TrajectorySummary s = summarize(t);
      if (info_json) {
        out << dump(summary_json(t, s));
      } else {
        out << std::setprecision(10);
        out << "id:          " << t.id << "\n"
            << "format:      " << to_string(t.sourceFormat) << "\n"
            << "poses:       " << s.poseCount << "\n"
            << "duration:    " << s.duration << " s\n"
            << "path length: " << s.pathLength << " m\n"
            << "bbox min:    " << s.bboxMin.x << " " << s.bboxMin.y << " " << s.bboxMin.z << "\n"
            << "bbox max:    " << s.bboxMax.x << " " << s.bboxMax.y << " " << s.bboxMax.z << "\n"
            << "images:      " << s.imageCount << "\n";
      }
      return kOk;
    }
    if (*samp) {
      if (mode == "uniform")
        sp.mode = SamplingMode::Uniform;
      else if (mode == "adaptive")
        sp.mode = SamplingMode::Adaptive;
      else
        throw Error(ErrorCode::InvalidParams, "mode must be uniform or adaptive", {}, "mode");
      validate(sp);
      Trajectory t = load_input(sample_in);
      if (interpolate) t = interpolate_image_poses(t).trajectory;
      const SampleResult r = sample(t.poses, sp);
      write_output(sample_out, dump(sample_export_json(t, r)), out);
      (sample_out.empty() || sample_out == "-" ? err : out)
          << "selected " << r.selectedIndices.size() << " of " << r.totalCandidates << " poses\n";
      return kOk;
    }
    if (*match) {
      validate(mp);
      c_in.format = q_in.format;
      c_in.columnMap = q_in.columnMap;
      const Trajectory q = load_input(q_in);
      const Trajectory c = load_input(c_in);
      const auto pairs = find_correspondences(q, c, mp);
      write_output(match_out, dump(match_export_json(q.id, c.id, mp, pairs)), out);
      (match_out.empty() || match_out == "-" ? err : out) << "matched " << pairs.size() << " pairs\n";
      return kOk;
    }
    if (*srv) return serve(so, out, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kEnvironment;
  }
  return kBadParams;
}

inline int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(std::move(args));
}

}  // namespace trajcur::cli
