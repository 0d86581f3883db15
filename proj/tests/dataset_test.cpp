#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "mcdrive/dataset.hpp"
#include "mcdrive/error.hpp"
#include "mcdrive/presets.hpp"
#include "mcdrive/rng.hpp"
#include "mcdrive/steering.hpp"

using namespace mcdrive;
namespace fs = std::filesystem;

namespace {

Dataset synthetic(std::size_t n, int h = 2, int w = 3, std::uint64_t seed = 1) {
  Dataset d;
  d.height = h;
  d.width = w;
  d.channels = 3;
  d.source = "synthetic";
  d.seed = seed;
  SplitMix64 rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    Tensor img({static_cast<std::size_t>(h), static_cast<std::size_t>(w), 3});
    for (double& v : img.values()) v = rng.uniform();
    d.add(img, 50.0 * rng.uniform() - 25.0);
  }
  return d;
}

CollectConfig small_camera() {
  CollectConfig cfg;
  cfg.sim.camera.height = 33;
  cfg.sim.camera.width = 100;
  return cfg;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mcdrive_dataset_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(Bucket, Examples) {
  EXPECT_EQ(bucket_angle(-25.0), 0);
  EXPECT_DOUBLE_EQ(unbucket(0), -25.0);
  EXPECT_EQ(bucket_angle(0.0), 100);
  EXPECT_DOUBLE_EQ(unbucket(100), 0.0);
  EXPECT_EQ(bucket_angle(25.0), 199);
  EXPECT_DOUBLE_EQ(unbucket(199), 24.75);
  EXPECT_THROW(bucket_angle(25.01), std::out_of_range);
  EXPECT_THROW(bucket_angle(-25.01), std::out_of_range);
  EXPECT_THROW(bucket_angle(std::nan("")), std::out_of_range);
}

TEST(Bucket, QuantizationError) {
  for (int k = 0; k <= 40000; ++k) {
    const double a = -25.0 + 50.0 * k / 40000.0;
    const double err = std::abs(unbucket(bucket_angle(a)) - a);
    EXPECT_LE(err, a <= 24.875 ? 0.125 + 1e-12 : 0.25 + 1e-12) << a;
  }
}

TEST(Bucket, MirrorReflectsAroundCentre) {
  for (int k = 1; k < 200; ++k) {
    const double a = -25.0 + 0.25 * k;
    EXPECT_EQ(bucket_angle(-a), 200 - bucket_angle(a)) << a;
  }
}

TEST(Collect, ExactFrameCount) {
  const Track t = preset_track("oval");
  const Dataset d = collect_run(t, Policy::expert(), 10, 3, small_camera());
  EXPECT_EQ(d.size(), 10u);
  EXPECT_EQ(d.states.size(), 10u);
  EXPECT_EQ(d.pixels.size(), 10u * 33 * 100 * 3);
  EXPECT_EQ(d.source, "oval");
  EXPECT_THROW(collect_run(t, Policy::expert(), 0, 3, small_camera()), ShapeError);
}

TEST(Collect, ExpertOnStraightStaysNearZero) {
  const Track t = preset_track("oval");
  CollectConfig cfg = small_camera();
  cfg.random_start = false;
  cfg.perturb_interval = 0;
  // The first 40 frames (45 m) stay on the lower straight with the curve
  // beyond the look-ahead point.
  const Dataset d = collect_run(t, Policy::expert(), 40, 1, cfg);
  for (float a : d.angles) EXPECT_LE(std::abs(a), 0.5f);
}

TEST(Collect, SameSeedIsBitIdentical) {
  const Track t = preset_track("serpentine");
  const Dataset a = collect_run(t, Policy::expert(), 60, 9, small_camera());
  const Dataset b = collect_run(t, Policy::expert(), 60, 9, small_camera());
  EXPECT_EQ(a, b);
  const Dataset c = collect_run(t, Policy::expert(), 60, 10, small_camera());
  EXPECT_NE(a.angles, c.angles);
}

TEST(Collect, PerturbedExpertStaysOnRoad) {
  CollectConfig cfg = small_camera();
  cfg.sim.camera.height = 6;
  cfg.sim.camera.width = 10;
  for (const auto& name : preset_track_names()) {
    const Track t = preset_track(name);
    Dataset d;
    EXPECT_NO_THROW(d = collect_run(t, Policy::expert(), 3000, 21, cfg)) << name;
    const auto [lo, hi] = std::minmax_element(d.angles.begin(), d.angles.end());
    EXPECT_LT(*lo, -5.0f) << name;
    EXPECT_GT(*hi, 5.0f) << name;
  }
}

TEST(Collect, CrashBudgetExceeded) {
  const Track t = preset_track("oval");
  CollectConfig cfg = small_camera();
  cfg.random_start = false;
  cfg.perturb_interval = 0;
  NetworkSpec spec = build_preset(HeadKind::Regression, PresetScale::Fast);
  Network net = Network::initialize(spec, 5);
  for (auto& p : net.params()) {
    for (double& b : p.bias.values()) b = 0.0;
    for (double& w : p.weights.values()) w = 0.0;
  }
  // Steers straight ahead and leaves the road at the first curve.
  EXPECT_THROW(collect_run(t, Policy::model(net), 300, 1, cfg), Error);
  cfg.crash_budget = 100;
  EXPECT_NO_THROW(collect_run(t, Policy::model(net), 300, 1, cfg));
}

TEST(Mirror, DoublesCount) {
  Dataset d;
  d.height = 1;
  d.width = 2;
  d.channels = 1;
  for (int i = 0; i < 8037; ++i) {
    d.pixels.push_back(static_cast<float>(i));
    d.pixels.push_back(0.5f);
    d.angles.push_back(static_cast<float>(i % 50) - 24.5f);
  }
  EXPECT_EQ(augment_mirror(d).size(), 16074u);
}

TEST(Mirror, FlipsImagesAndNegatesAngles) {
  Dataset d = synthetic(5);
  d.angles[2] = 0.0f;
  const Dataset m = augment_mirror(d);
  ASSERT_EQ(m.size(), 10u);
  EXPECT_EQ(m.angles[7], 0.0f);
  EXPECT_FALSE(std::signbit(m.angles[2]));
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(m.angles[i], d.angles[i]);
    EXPECT_EQ(m.angles[i + 5], -d.angles[i]);
    const Tensor a = d.image(i);
    const Tensor b = m.image(i + 5);
    for (std::size_t r = 0; r < 2; ++r)
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(b[(r * 3 + c) * 3 + k], a[(r * 3 + (2 - c)) * 3 + k]);
  }
}

TEST(Mirror, IsAnInvolution) {
  const Dataset d = synthetic(7);
  const Dataset m = augment_mirror(d);
  std::vector<std::size_t> second{7, 8, 9, 10, 11, 12, 13};
  const Dataset back = augment_mirror(subset(m, second));
  std::vector<std::size_t> recovered{7, 8, 9, 10, 11, 12, 13};
  EXPECT_EQ(subset(back, recovered), d);
}

TEST(Mirror, AnglesCancelExactly) {
  const Dataset m = augment_mirror(synthetic(500));
  const std::size_t n = m.size() / 2;
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += static_cast<double>(m.angles[i]) + m.angles[i + n];
  EXPECT_EQ(sum / static_cast<double>(m.size()), 0.0);
}

TEST(Mirror, DropsStates) {
  const Dataset d = collect_run(preset_track("oval"), Policy::expert(), 4, 1, small_camera());
  EXPECT_TRUE(augment_mirror(d).states.empty());
}

TEST(Split, SizesAndDeterminism) {
  const Dataset d = synthetic(10);
  const Split a = split(d, 0.2, 4);
  EXPECT_EQ(a.train.size(), 8u);
  EXPECT_EQ(a.test.size(), 2u);
  const Split b = split(d, 0.2, 4);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
  EXPECT_THROW(split(d, 0.0, 1), ShapeError);
  EXPECT_THROW(split(d, 1.0, 1), ShapeError);
  EXPECT_THROW(split(d, 0.05, 1), ShapeError);
}

TEST(Split, PartitionLaw) {
  const Dataset d = synthetic(101);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Split s = split(d, 0.3, seed);
    EXPECT_EQ(s.test.size(), 30u);
    std::vector<float> all(s.train.angles);
    all.insert(all.end(), s.test.angles.begin(), s.test.angles.end());
    std::vector<float> orig(d.angles);
    std::sort(all.begin(), all.end());
    std::sort(orig.begin(), orig.end());
    EXPECT_EQ(all, orig);
  }
}

TEST(Storage, RoundTripWithStates) {
  const Dataset d = collect_run(preset_track("figure8"), Policy::expert(), 25, 2, small_camera());
  const fs::path dir = scratch("rt");
  save_dataset(d, dir);
  EXPECT_TRUE(fs::exists(dir / "states.csv"));
  EXPECT_EQ(load_dataset(dir), d);
  const Dataset m = augment_mirror(d);
  save_dataset(m, dir);
  EXPECT_FALSE(fs::exists(dir / "states.csv"));
  EXPECT_EQ(load_dataset(dir), m);
  fs::remove_all(dir);
}

TEST(Storage, EmptyDataset) {
  Dataset d;
  d.height = 4;
  d.width = 5;
  d.source = "none";
  const fs::path dir = scratch("empty");
  save_dataset(d, dir);
  const Dataset back = load_dataset(dir);
  EXPECT_EQ(back.size(), 0u);
  EXPECT_EQ(back, d);
  fs::remove_all(dir);
}

TEST(Storage, TruncatedFramesNameByteCounts) {
  const Dataset d = synthetic(3);
  const fs::path dir = scratch("trunc");
  save_dataset(d, dir);
  fs::resize_file(dir / "frames.bin", fs::file_size(dir / "frames.bin") - 5);
  try {
    load_dataset(dir);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("expected 228 bytes"), std::string::npos) << msg;
    EXPECT_NE(msg.find("found 223"), std::string::npos) << msg;
  }
  fs::remove_all(dir);
}

TEST(Storage, VersionMismatch) {
  const fs::path dir = scratch("version");
  save_dataset(synthetic(1), dir);
  std::ifstream in(dir / "meta.json");
  std::string text((std::istreambuf_iterator<char>(in)), {});
  in.close();
  text.replace(text.find("\"version\": 1"), 12, "\"version\": 2");
  std::ofstream(dir / "meta.json") << text;
  EXPECT_THROW(load_dataset(dir), FormatError);
  EXPECT_THROW(load_dataset(scratch("missing")), FormatError);
  fs::remove_all(dir);
}

TEST(TrainingView, TargetsAndLabels) {
  Dataset d = synthetic(3);
  d.angles = {-25.0f, 0.0f, 12.5f};
  const TrainingData reg = training_view(d, HeadKind::Regression);
  EXPECT_EQ(reg.targets, (std::vector<double>{-1.0, 0.0, 0.5}));
  EXPECT_EQ(reg.size(), 3u);
  const TrainingData cls = training_view(d, HeadKind::Classification);
  EXPECT_EQ(cls.labels, (std::vector<int>{0, 100, 150}));
}

TEST(Dataset, RejectsBadSamples) {
  Dataset d = synthetic(1);
  EXPECT_THROW(d.add(Tensor({2, 3, 3}), 26.0), ShapeError);
  EXPECT_THROW(d.add(Tensor({3, 3, 3}), 0.0), ShapeError);
  EXPECT_THROW(d.image(1), ShapeError);
}
