#pragma once

#include <gtest/gtest.h>

#include <filesystem>
#include <optional>
#include <random>
#include <string>

#include "trajcur/error.hpp"
#include "trajcur/model.hpp"

namespace testing_support {

inline std::filesystem::path data(const std::string& rel) { return std::filesystem::path(TRAJCUR_TEST_DATA) / rel; }

template <typename Fn>
trajcur::Error capture_error(Fn&& fn) {
  try {
    fn();
  } catch (const trajcur::Error& e) {
    return e;
  }
  ADD_FAILURE() << "expected an error";
  return trajcur::Error(trajcur::ErrorCode::Io, "no error thrown");
}

#define EXPECT_TRAJCUR_ERROR(expr, code_, line_)                      \
  do {                                                                \
    const auto err_ = testing_support::capture_error([&] { (void)(expr); }); \
    EXPECT_EQ(err_.code(), code_) << err_.what();                     \
    EXPECT_EQ(err_.line(), line_) << err_.what();                     \
  } while (0)

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("trajcur-test-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::permissions(path_, std::filesystem::perms::owner_all, std::filesystem::perm_options::add, ec);
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  [[nodiscard]] const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// Poses along a polyline given as per-step (length, heading change) pairs,
/// starting at the origin heading north. Headings in degrees.
inline std::vector<trajcur::Pose> walk(const std::vector<std::pair<double, double>>& steps, double start_yaw_deg = 0) {
  std::vector<trajcur::Pose> poses;
  double x = 0, y = 0, yaw = start_yaw_deg;
  trajcur::Pose p;
  p.orientation = trajcur::Orientation{0, 0, trajcur::normalize_angle(trajcur::deg_to_rad(yaw))};
  poses.push_back(p);
  for (const auto& [len, turn] : steps) {
    yaw += turn;
    const double r = trajcur::deg_to_rad(yaw);
    x -= len * std::sin(r);  // yaw counter-clockwise from north
    y += len * std::cos(r);
    trajcur::Pose q;
    q.index = poses.size();
    q.timestamp = static_cast<double>(q.index);
    q.position = {x, y, 0};
    q.orientation = trajcur::Orientation{0, 0, trajcur::normalize_angle(r)};
    poses.push_back(q);
  }
  return poses;
}

}  // namespace testing_support
