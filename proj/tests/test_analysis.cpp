#include <gtest/gtest.h>

#include <cstring>
#include <random>
#include <set>
#include <thread>

#include "test_support.hpp"
#include "trajcur/analysis.hpp"

using namespace trajcur;

namespace {

SettingsBundle sample_bundle() {
  SettingsBundle b;
  b.name = "winter-night_01";
  b.viewState = nlohmann::json::parse(R"({"camera":{"target":[1.5,2,0],"zoom":3},"pinned":false})");
  b.sceneSettings = nlohmann::json::parse(R"({"pointSize":2,"background":"#000000"})");
  b.offsetSettings.positionOffset = {1, -2, 0.5};
  b.offsetSettings.invertRotation = {false, true, false};
  b.offsetSettings.swapPositionAxes = AxisPair{Axis::Y, Axis::Z};
  b.offsetSettings.uniformScale = 0.25;
  b.offsetSettings.zTimeRate = 0.1;
  b.samplingParams = {5, 20, SamplingMode::Uniform};
  b.matchParams.tauLoss = 25;
  b.loadedFileRef = "robotcar/ins.csv";
  b.savedAt = 1700000000.5;
  return with_hash(b);
}

RetrievalEpoch epoch_from(std::size_t rows, std::size_t cols, std::vector<double> d, std::vector<long long> ql,
                          std::vector<long long> gl) {
  RetrievalEpoch e;
  e.rows = rows;
  e.cols = cols;
  e.distances = std::move(d);
  e.queryLabels = std::move(ql);
  e.galleryLabels = std::move(gl);
  validate(e);
  return e;
}

Trajectory n_poses(std::size_t n) {
  Trajectory t;
  t.poses.resize(n);
  for (std::size_t i = 0; i < n; ++i) t.poses[i].index = i;
  return t;
}

}  // namespace

// --- settings --------------------------------------------------------------

TEST(Settings, RoundTripIsByteStable) {
  const SettingsBundle b = sample_bundle();
  const std::string once = serialize_settings(b);
  const SettingsBundle parsed = parse_settings(once);
  EXPECT_EQ(parsed, b);
  EXPECT_EQ(serialize_settings(parsed), once);
  EXPECT_EQ(serialize_settings(parse_settings(serialize_settings(parsed))), once);
}

TEST(Settings, WithDescriptorRoundTrips) {
  SettingsBundle b = sample_bundle();
  ParserDescriptor d;
  d.columnMap = {{"timestamp", std::size_t{0}}, {"latitude", std::string("lat")}, {"longitude", std::size_t{2}}};
  d.hasHeader = true;
  b.parserDescriptor = d;
  b = with_hash(b);
  const auto text = serialize_settings(b);
  EXPECT_EQ(parse_settings(text), b);
  EXPECT_EQ(serialize_settings(parse_settings(text)), text);
}

TEST(Settings, DirtyTracking) {
  const SettingsBundle saved = sample_bundle();
  SettingsBundle cur = saved;
  EXPECT_FALSE(is_dirty(cur, saved));
  cur.savedAt += 1000;
  EXPECT_FALSE(is_dirty(cur, saved));
  cur.samplingParams.tauD = 13;
  EXPECT_TRUE(is_dirty(cur, saved));
  cur = saved;
  cur.viewState["camera"]["zoom"] = 4;
  EXPECT_TRUE(is_dirty(cur, saved));
  cur = saved;
  cur.offsetSettings.swapPositionAxes.reset();
  EXPECT_TRUE(is_dirty(cur, saved));
}

TEST(Settings, HashIsRecomputedNotTrusted) {
  auto j = nlohmann::json::parse(serialize_settings(sample_bundle()));
  j["contentHash"] = "0000000000000000";
  EXPECT_EQ(parse_settings(j.dump()).contentHash, sample_bundle().contentHash);
  EXPECT_EQ(sample_bundle().contentHash.size(), 16u);
}

TEST(Settings, SchemaViolations) {
  const auto bad = [](const std::string& patch) {
    auto j = nlohmann::json::parse(serialize_settings(sample_bundle()));
    j.merge_patch(nlohmann::json::parse(patch));
    return testing_support::capture_error([&] { parse_settings(j.dump()); }).code();
  };
  EXPECT_EQ(bad(R"({"offsetSettings":{"uniformScale":-1}})"), ErrorCode::InvalidSettings);
  EXPECT_EQ(bad(R"({"offsetSettings":{"swapPositionAxes":["x","x"]}})"), ErrorCode::InvalidSettings);
  EXPECT_EQ(bad(R"({"samplingParams":{"tauD":0}})"), ErrorCode::InvalidSettings);
  EXPECT_EQ(bad(R"({"samplingParams":{"mode":"random"}})"), ErrorCode::InvalidSettings);
  EXPECT_EQ(bad(R"({"matchParams":{"alpha":"one"}})"), ErrorCode::InvalidSettings);
  EXPECT_EQ(bad(R"({"name":"../escape"})"), ErrorCode::InvalidSettings);
  EXPECT_EQ(bad(R"({"viewState":[1,2]})"), ErrorCode::InvalidSettings);
  EXPECT_EQ(testing_support::capture_error([] { parse_settings("{"); }).code(), ErrorCode::NotJson);
  EXPECT_EQ(testing_support::capture_error([] { parse_settings("[]"); }).code(), ErrorCode::InvalidSettings);
}

TEST(Settings, NameRules) {
  EXPECT_TRUE(valid_settings_name("a"));
  EXPECT_TRUE(valid_settings_name("Run_2.v3-final"));
  EXPECT_FALSE(valid_settings_name(""));
  EXPECT_FALSE(valid_settings_name(".hidden"));
  EXPECT_FALSE(valid_settings_name("a/b"));
  EXPECT_FALSE(valid_settings_name("a b"));
  EXPECT_FALSE(valid_settings_name(std::string(129, 'a')));
}

TEST(SettingsStore, SaveRestoreOverwrite) {
  testing_support::TempDir dir;
  SettingsStore store(dir.path() / "settings");
  SettingsBundle b = sample_bundle();
  EXPECT_EQ(store.save(b), b.name);
  EXPECT_EQ(store.restore(b.name), b);
  EXPECT_EQ(store.restore_raw(b.name), serialize_settings(b));
  b.samplingParams.tauD = 99;
  b = with_hash(b);
  store.save(b);
  EXPECT_EQ(store.restore(b.name).samplingParams.tauD, 99);
  EXPECT_EQ(store.list(), std::vector<std::string>{b.name});
  EXPECT_TRAJCUR_ERROR(store.restore("nope"), ErrorCode::NotFound, std::nullopt);
  EXPECT_TRAJCUR_ERROR(store.restore("../etc"), ErrorCode::NotFound, std::nullopt);
}

TEST(SettingsStore, ConcurrentSavesLeaveOneCompleteDocument) {
  testing_support::TempDir dir;
  SettingsStore store(dir.path());
  std::vector<std::thread> threads;
  std::vector<std::string> bodies;
  for (int k = 0; k < 8; ++k) {
    SettingsBundle b = sample_bundle();
    b.samplingParams.tauD = 1 + k;
    b = with_hash(b);
    bodies.push_back(serialize_settings(b));
    threads.emplace_back([&store, b] {
      for (int r = 0; r < 20; ++r) store.save(b);
    });
  }
  for (auto& t : threads) t.join();
  const auto raw = store.restore_raw(sample_bundle().name);
  EXPECT_NE(std::find(bodies.begin(), bodies.end(), raw), bodies.end());
}

TEST(SettingsStore, StorageFailure) {
  testing_support::TempDir dir;
  const auto file = dir.path() / "plain-file";
  std::ofstream(file) << "x";
  SettingsStore store(file / "sub");
  EXPECT_TRAJCUR_ERROR(store.save(sample_bundle()), ErrorCode::StorageFailure, std::nullopt);
}

// --- top-k -----------------------------------------------------------------

TEST(TopK, Examples) {
  const auto e = epoch_from(1, 3, {3, 1, 2}, {0}, {0, 1, 2});
  EXPECT_EQ(topk(e, 0, 1), (std::vector<std::pair<std::size_t, double>>{{1, 1}}));
  EXPECT_EQ(topk(e, 0, 3), (std::vector<std::pair<std::size_t, double>>{{1, 1}, {2, 2}, {0, 3}}));
  const auto tie = epoch_from(1, 3, {2, 2, 5}, {0}, {0, 1, 2});
  EXPECT_EQ(topk(tie, 0, 2), (std::vector<std::pair<std::size_t, double>>{{0, 2}, {1, 2}}));
  EXPECT_TRAJCUR_ERROR(topk(e, 1, 1), ErrorCode::IndexOutOfRange, std::nullopt);
  EXPECT_TRAJCUR_ERROR(topk(e, 0, 0), ErrorCode::BadK, std::nullopt);
  EXPECT_TRAJCUR_ERROR(topk(e, 0, 4), ErrorCode::BadK, std::nullopt);
}

TEST(TopK, AccuracyExamples) {
  // Query 0 is right at rank 1, query 1 at rank 2, query 2 only at rank 4.
  const auto e = epoch_from(3, 4, {0.1, 0.5, 0.9, 0.7, 0.2, 0.6, 0.9, 0.8, 0.1, 0.2, 0.9, 0.3}, {0, 1, 2}, {0, 1, 2, 3});
  EXPECT_DOUBLE_EQ(topk_accuracy(e, 1), 1.0 / 3);
  EXPECT_DOUBLE_EQ(topk_accuracy(e, 2), 2.0 / 3);
  EXPECT_DOUBLE_EQ(topk_accuracy(e, 3), 2.0 / 3);
  EXPECT_DOUBLE_EQ(topk_accuracy(e, 4), 1.0);

  const auto self = epoch_from(3, 3, {0, 1, 1, 1, 0, 1, 1, 1, 0}, {5, 6, 7}, {5, 6, 7});
  EXPECT_EQ(topk_accuracy(self, 1), 1.0);
  const auto none = epoch_from(2, 2, {1, 1, 1, 1}, {1, 2}, {3, 4});
  EXPECT_EQ(topk_accuracy(none, 2), 0.0);
}

TEST(TopK, PrefixAndMonotoneOnRandomMatrices) {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<std::size_t> dim(1, 25);
  std::uniform_int_distribution<int> value(0, 9), label(0, 5);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t r = dim(rng), c = dim(rng);
    std::vector<double> d(r * c);
    for (double& v : d) v = value(rng);  // coarse values force ties
    std::vector<long long> ql(r), gl(c);
    for (auto& l : ql) l = label(rng);
    for (auto& l : gl) l = label(rng);
    const auto e = epoch_from(r, c, d, ql, gl);
    double prev_acc = -1;
    for (std::size_t k = 1; k <= c; ++k) {
      const double acc = topk_accuracy(e, k);
      ASSERT_GE(acc, prev_acc);
      prev_acc = acc;
      for (std::size_t row = 0; row < r; ++row) {
        const auto a = topk(e, row, k);
        if (k < c) {
          const auto b = topk(e, row, k + 1);
          ASSERT_TRUE(std::equal(a.begin(), a.end(), b.begin()));
        }
        // Full-sort oracle.
        std::vector<std::pair<double, std::size_t>> all;
        for (std::size_t j = 0; j < c; ++j) all.emplace_back(e.at(row, j), j);
        std::sort(all.begin(), all.end());
        for (std::size_t m = 0; m < k; ++m) ASSERT_EQ(a[m].first, all[m].second);
      }
    }
  }
}

TEST(TopK, LoadJsonAndBinary) {
  const auto e = load_retrieval_epoch(
      R"({"step": 1200, "shape": [2, 2], "distances": [0.5, 0.25, 1, 0],
          "labels": {"query": [1, 2], "gallery": [2, 1]}, "indexToImage": {"0": "a.png", "1": "b.png"}})");
  EXPECT_EQ(e.step, 1200);
  EXPECT_EQ(e.at(1, 1), 0.0);
  EXPECT_EQ(e.indexToImage.at("1"), "b.png");

  std::string bytes(16 + 4 * 4, '\0');
  const std::uint64_t rows = 2, cols = 2;
  std::memcpy(bytes.data(), &rows, 8);
  std::memcpy(bytes.data() + 8, &cols, 8);
  const float vals[] = {0.5f, 0.25f, 1.0f, 0.0f};
  std::memcpy(bytes.data() + 16, vals, sizeof vals);
  const auto b = load_retrieval_epoch(R"({"step": 1, "labels": {"query": [1, 2], "gallery": [2, 1]}})", bytes);
  EXPECT_EQ(b.distances, e.distances);

  EXPECT_EQ(testing_support::capture_error([&] {
              load_retrieval_epoch(R"({"labels": {"query": [1], "gallery": [2, 1]}})", bytes);
            }).code(),
            ErrorCode::LengthMismatch);
  EXPECT_EQ(testing_support::capture_error([&] {
              load_retrieval_epoch(R"({"labels": {"query": [1, 2], "gallery": [2, 1]}})", bytes.substr(0, 20));
            }).code(),
            ErrorCode::TruncatedFile);
  EXPECT_EQ(testing_support::capture_error([] {
              load_retrieval_epoch(R"({"shape":[1,1],"distances":[-1],"labels":{"query":[0],"gallery":[0]}})");
            }).code(),
            ErrorCode::InvalidParams);
  EXPECT_EQ(testing_support::capture_error([] { load_retrieval_epoch("nope"); }).code(), ErrorCode::NotJson);
}

// --- HTMap -----------------------------------------------------------------

TEST(HTMap, Examples) {
  const auto t = n_poses(100);
  std::string nodes = "[0";
  for (int i = 1; i < 100; ++i) nodes += ",0";
  nodes += "]";
  const auto single = load_htmap(R"({"nodes": )" + nodes + "}", t);
  EXPECT_EQ(std::set<long long>(single.nodeOfPose.begin(), single.nodeOfPose.end()).size(), 1u);
  EXPECT_TRUE(single.loopClosures.empty());

  const auto one = load_htmap(R"({"nodes": )" + nodes + R"(, "loops": [[0, 99], [99, 0], [0, 99]]})", t);
  EXPECT_EQ(one.loopClosures, (std::vector<std::pair<std::size_t, std::size_t>>{{0, 99}}));

  EXPECT_EQ(testing_support::capture_error([&] { load_htmap(R"({"nodes": )" + nodes + R"(, "loops": [[0, 200]]})", t); })
                .code(),
            ErrorCode::BadLoopIndex);
  EXPECT_EQ(testing_support::capture_error([&] { load_htmap(R"({"nodes": )" + nodes + R"(, "loops": [[-1, 2]]})", t); })
                .code(),
            ErrorCode::BadLoopIndex);
  EXPECT_EQ(testing_support::capture_error([&] { load_htmap(R"({"nodes": [0, 1]})", t); }).code(),
            ErrorCode::LengthMismatch);
  EXPECT_EQ(testing_support::capture_error([&] { load_htmap("{]", t); }).code(), ErrorCode::NotJson);
  EXPECT_EQ(testing_support::capture_error([&] { load_htmap("{}", t); }).code(), ErrorCode::MissingField);
}

TEST(HTMap, NeverReferencesMissingPoses) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> n(1, 30), idx(-3, 35);
  for (int trial = 0; trial < 300; ++trial) {
    const auto t = n_poses(static_cast<std::size_t>(n(rng)));
    nlohmann::json doc;
    doc["nodes"] = std::vector<int>(t.size(), 3);
    for (int k = 0; k < 4; ++k) doc["loops"].push_back({idx(rng), idx(rng)});
    try {
      const auto o = load_htmap(doc.dump(), t);
      for (const auto& [a, b] : o.loopClosures) {
        ASSERT_LT(a, t.size());
        ASSERT_LT(b, t.size());
        ASSERT_LE(a, b);
      }
    } catch (const Error& e) {
      ASSERT_EQ(e.code(), ErrorCode::BadLoopIndex);
    }
  }
}
