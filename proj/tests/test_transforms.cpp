#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "test_support.hpp"
#include "trajcur/transforms.hpp"

using namespace trajcur;

namespace {

Trajectory random_trajectory(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> pos(-500, 500), ang(-M_PI, M_PI);
  Trajectory t;
  for (std::size_t i = 0; i < n; ++i) {
    Pose p;
    p.index = i;
    p.timestamp = static_cast<double>(i);
    p.position = {pos(rng), pos(rng), pos(rng)};
    p.orientation = Orientation{ang(rng), ang(rng), ang(rng)};
    t.poses.push_back(p);
  }
  return t;
}

Trajectory line(std::initializer_list<Vec3> pts) {
  Trajectory t;
  for (const Vec3& v : pts) {
    Pose p;
    p.index = t.poses.size();
    p.position = v;
    t.poses.push_back(p);
  }
  return t;
}

}  // namespace

TEST(Offsets, IdentityIsNoOp) {
  std::mt19937_64 rng(1);
  for (int k = 0; k < 50; ++k) {
    const Trajectory t = random_trajectory(rng, 40);
    EXPECT_EQ(apply_offsets(t, OffsetSettings{}), t);
  }
}

TEST(Offsets, ScaleDoublesDistance) {
  OffsetSettings s;
  s.uniformScale = 2;
  const auto out = apply_offsets(line({{1, 0, 0}, {3, 0, 0}}), s);
  EXPECT_EQ(distance(out.poses[0].position, out.poses[1].position), 4.0);
}

TEST(Offsets, SwapYZ) {
  OffsetSettings s;
  s.swapPositionAxes = AxisPair{Axis::Y, Axis::Z};
  EXPECT_EQ(apply_offsets(line({{1, 2, 3}}), s).poses[0].position, (Vec3{1, 3, 2}));
}

TEST(Offsets, FixedOrder) {
  // swap x/y -> (2, 1, 3); invert x -> (-2, 1, 3); scale 10 -> (-20, 10, 30);
  // offset -> (-19, 10, 25).
  OffsetSettings s;
  s.swapPositionAxes = AxisPair{Axis::X, Axis::Y};
  s.invertPosition = {true, false, false};
  s.uniformScale = 10;
  s.positionOffset = {1, 0, -5};
  EXPECT_EQ(apply_offsets(line({{1, 2, 3}}), s).poses[0].position, (Vec3{-19, 10, 25}));

  OffsetSettings r;
  r.swapRotationAxes = AxisPair{Axis::X, Axis::Z};
  r.invertRotation = {true, false, false};
  r.rotationOffset = {0, 0, M_PI};
  Trajectory t = line({{0, 0, 0}});
  t.poses[0].orientation = Orientation{0.1, 0.2, 0.3};
  const auto o = *apply_offsets(t, r).poses[0].orientation;
  EXPECT_NEAR(o.roll, -0.3, 1e-15);
  EXPECT_NEAR(o.pitch, 0.2, 1e-15);
  EXPECT_NEAR(o.yaw, 0.1 + M_PI - 2 * M_PI, 1e-15);
}

TEST(Offsets, ScaleRoundTrip) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> scale(0.01, 100);
  for (int k = 0; k < 200; ++k) {
    const Trajectory t = random_trajectory(rng, 30);
    OffsetSettings up, down;
    up.uniformScale = scale(rng);
    down.uniformScale = 1.0 / up.uniformScale;
    const auto back = apply_offsets(apply_offsets(t, up), down);
    for (std::size_t i = 0; i < t.size(); ++i)
      for (std::size_t c = 0; c < 3; ++c) ASSERT_NEAR(back.poses[i].position[c], t.poses[i].position[c], 1e-9);
  }
}

TEST(Offsets, PairwiseDistancesScaleExactly) {
  std::mt19937_64 rng(3);
  const Trajectory t = random_trajectory(rng, 30);
  OffsetSettings s;
  s.uniformScale = 4;  // power of two keeps the arithmetic exact
  s.positionOffset = {0, 0, 0};
  const auto out = apply_offsets(t, s);
  for (std::size_t i = 0; i < t.size(); ++i)
    for (std::size_t j = 0; j < t.size(); ++j)
      ASSERT_EQ(distance(out.poses[i].position, out.poses[j].position),
                4 * distance(t.poses[i].position, t.poses[j].position));
}

TEST(Offsets, DoubleSwapIsIdentity) {
  std::mt19937_64 rng(4);
  const Axis axes[] = {Axis::X, Axis::Y, Axis::Z};
  for (int k = 0; k < 100; ++k) {
    const Trajectory t = random_trajectory(rng, 20);
    OffsetSettings s;
    s.swapPositionAxes = AxisPair{axes[k % 3], axes[(k + 1 + k / 3 % 2) % 3]};
    s.swapRotationAxes = AxisPair{axes[(k + 2) % 3], axes[k % 3]};
    EXPECT_EQ(apply_offsets(apply_offsets(t, s), s), t);
  }
}

TEST(Offsets, InputUntouchedAndValidated) {
  const Trajectory t = line({{1, 2, 3}});
  OffsetSettings s;
  s.positionOffset = {5, 5, 5};
  (void)apply_offsets(t, s);
  EXPECT_EQ(t.poses[0].position, (Vec3{1, 2, 3}));
  s.uniformScale = -1;
  EXPECT_TRAJCUR_ERROR(apply_offsets(t, s), ErrorCode::InvalidSettings, std::nullopt);
  s.uniformScale = 0;
  EXPECT_THROW(apply_offsets(t, s), Error);
}

TEST(Altitude, FlattenAndIdempotence) {
  const Trajectory t = line({{1, 2, -5}, {3, 4, 0}, {5, 6, 12}});
  const Trajectory f = flatten_altitude(t);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(f.poses[i].position.z, 0.0);
    EXPECT_EQ(f.poses[i].position.x, t.poses[i].position.x);
    EXPECT_EQ(f.poses[i].position.y, t.poses[i].position.y);
  }
  EXPECT_EQ(flatten_altitude(f), f);
}

TEST(ZTime, FormulaAndMonotonicity) {
  Trajectory t;
  for (std::size_t i = 0; i < 200; ++i) {
    Pose p;
    p.index = i;
    const double a = 2 * M_PI * static_cast<double>(i % 100) / 100.0;  // two laps of one loop
    p.position = {std::cos(a), std::sin(a), 7.0 * std::sin(3 * a)};
    t.poses.push_back(p);
  }
  EXPECT_EQ(encode_time_in_z(t, 0), flatten_altitude(t));
  const auto z = encode_time_in_z(t, 0.1);
  EXPECT_NEAR(z.poses[50].position.z, 5.0, 1e-12);
  for (std::size_t i = 1; i < z.size(); ++i) ASSERT_GE(z.poses[i].position.z, z.poses[i - 1].position.z);
  for (std::size_t i = 0; i < 100; ++i) {
    EXPECT_EQ(z.poses[i].position.x, z.poses[i + 100].position.x);
    EXPECT_NEAR(z.poses[i + 100].position.z - z.poses[i].position.z, 10.0, 1e-9);
  }
}

TEST(ZTime, SceneSettingsPrecedence) {
  const Trajectory t = line({{0, 0, 4}, {1, 0, 4}});
  OffsetSettings s;
  s.ignoreAltitude = true;
  EXPECT_EQ(apply_scene_settings(t, s).poses[1].position.z, 0.0);
  s.zTimeRate = 2;
  EXPECT_EQ(apply_scene_settings(t, s).poses[1].position.z, 2.0);
  s.ignoreAltitude = false;
  EXPECT_EQ(apply_scene_settings(t, s).poses[1].position.z, 2.0);
  s.zTimeRate = 0;
  EXPECT_EQ(apply_scene_settings(t, s).poses[1].position.z, 4.0);
}

// --- depth colouring -------------------------------------------------------

TEST(Percentile, Examples) {
  std::vector<double> hundred(100);
  for (int i = 0; i < 100; ++i) hundred[i] = i + 1;
  std::shuffle(hundred.begin(), hundred.end(), std::mt19937_64(9));
  EXPECT_EQ(depth_percentile_threshold(hundred, 90), 90.0);
  EXPECT_EQ(depth_percentile_threshold(hundred), 90.0);
  EXPECT_EQ(depth_percentile_threshold(std::vector<double>{7}, 1), 7.0);
  EXPECT_EQ(depth_percentile_threshold(std::vector<double>{7}, 100), 7.0);
  const std::vector<double> ten{10, 9, 8, 7, 6, 5, 4, 3, 2, 1};
  EXPECT_EQ(depth_percentile_threshold(ten, 100), 10.0);
  EXPECT_EQ(depth_percentile_threshold(ten, 0.5), 1.0);
  EXPECT_TRAJCUR_ERROR(depth_percentile_threshold(std::vector<double>{}, 90), ErrorCode::EmptyInput, std::nullopt);
  EXPECT_TRAJCUR_ERROR(depth_percentile_threshold(ten, 0), ErrorCode::InvalidParams, std::nullopt);
  EXPECT_TRAJCUR_ERROR(depth_percentile_threshold(ten, 100.5), ErrorCode::InvalidParams, std::nullopt);
}

TEST(Percentile, NearestRankAgainstFullSort) {
  std::mt19937_64 rng(10);
  std::uniform_int_distribution<std::size_t> len(1, 300);
  std::uniform_int_distribution<int> pct(1, 100);
  std::uniform_real_distribution<double> depth(0, 80);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> d(len(rng));
    for (double& v : d) v = std::round(depth(rng) * 4) / 4;  // plenty of ties
    const int p = pct(rng);
    std::vector<double> sorted = d;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t rank = (static_cast<std::size_t>(p) * d.size() + 99) / 100;
    ASSERT_EQ(depth_percentile_threshold(d, p), sorted[rank - 1]) << "n=" << d.size() << " p=" << p;
  }
}

TEST(Normalize, Examples) {
  std::vector<double> hundred(100);
  for (int i = 0; i < 100; ++i) hundred[i] = i + 1;
  const auto u = normalize_depths_for_color(hundred);
  EXPECT_DOUBLE_EQ(u[44], 0.5);
  EXPECT_EQ(u[98], 1.0);
  EXPECT_EQ(u[89], 1.0);
  for (double v : normalize_depths_for_color(std::vector<double>{3, 3, 3})) EXPECT_EQ(v, 1.0);
  for (double v : normalize_depths_for_color(std::vector<double>{0, 0, 5}, 50)) EXPECT_EQ(v, 0.0);
}

TEST(Normalize, RangeAndCoverage) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> depth(0, 50);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> d(1 + trial);
    for (double& v : d) v = depth(rng);
    const auto u = normalize_depths_for_color(d, 90);
    const double t = depth_percentile_threshold(d, 90);
    std::size_t at_most = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      ASSERT_GE(u[i], 0.0);
      ASSERT_LE(u[i], 1.0);
      at_most += d[i] / t <= 1.0;
    }
    ASSERT_GE(at_most, static_cast<std::size_t>(std::ceil(0.9 * static_cast<double>(d.size()))));
  }
}

TEST(Viridis, EndpointsAndMidpoint) {
  EXPECT_EQ(colormap_viridis(0), (Rgb{68, 1, 84}));
  EXPECT_EQ(colormap_viridis(1), (Rgb{253, 231, 37}));
  EXPECT_EQ(colormap_viridis(-3), colormap_viridis(0));
  EXPECT_EQ(colormap_viridis(7), colormap_viridis(1));
  EXPECT_EQ(colormap_viridis(std::nan("")), colormap_viridis(0));
  const auto& a = detail::kViridis[127];
  const auto& b = detail::kViridis[128];
  const Rgb mid = colormap_viridis(0.5);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(mid[k], (a[k] + b[k] + 1) / 2);
  for (std::size_t i = 0; i < 256; ++i) EXPECT_EQ(colormap_viridis(static_cast<double>(i) / 255.0), detail::kViridis[i]);
}

TEST(Gradient, EndpointsAndMidpoint) {
  EXPECT_EQ(gradient_color_for_index(0, 11), (Rgb{255, 0, 0}));
  EXPECT_EQ(gradient_color_for_index(10, 11), (Rgb{255, 165, 0}));
  // 165 / 2 = 82.5, rounded half up.
  EXPECT_EQ(gradient_color_for_index(5, 11), (Rgb{255, 83, 0}));
  EXPECT_EQ(gradient_color_for_index(0, 1), (Rgb{255, 0, 0}));
  EXPECT_EQ(gradient_color_for_index(1, 3, {0, 0, 0}, {10, 20, 255}), (Rgb{5, 10, 128}));
  EXPECT_TRAJCUR_ERROR(gradient_color_for_index(3, 3), ErrorCode::IndexOutOfRange, std::nullopt);
  EXPECT_THROW(gradient_color_for_index(0, 0), Error);
}
