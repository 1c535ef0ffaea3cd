#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <unistd.h>

#include "deeplight/dataset.hpp"
#include "deeplight/error.hpp"

namespace fs = std::filesystem;

namespace dl {
namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("dl_dataset_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

double mean_of(const Raster& r) {
  return std::accumulate(r.data.begin(), r.data.end(), 0.0) / static_cast<double>(r.data.size());
}

double zero_one_ratio(const Raster& isp) {
  const auto ones = std::count(isp.data.begin(), isp.data.end(), 1.0f);
  return static_cast<double>(isp.data.size() - ones) / static_cast<double>(ones);
}

// Two-sample Kolmogorov-Smirnov statistic, evaluated at every pooled sample.
double ks_statistic(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::vector<double> pooled = a;
  pooled.insert(pooled.end(), b.begin(), b.end());
  double d = 0.0;
  for (double v : pooled) {
    const double fa = static_cast<double>(std::upper_bound(a.begin(), a.end(), v) - a.begin()) / a.size();
    const double fb = static_cast<double>(std::upper_bound(b.begin(), b.end(), v) - b.begin()) / b.size();
    d = std::max(d, std::abs(fa - fb));
  }
  return d;
}

SceneSpec spec_with_seed(std::uint64_t seed) {
  SceneSpec s;
  s.seed = seed;
  return s;
}

// HR raster with a few blobs kept away from the border.
Raster blob_image(int n, std::uint64_t seed, int margin) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> pos(margin, n - margin), amp(0.3, 1.0);
  Raster r(1, n, n);
  for (int k = 0; k < 4; ++k) {
    const double cy = pos(rng), cx = pos(rng), a = amp(rng);
    for (int y = margin; y < n - margin; ++y) {
      for (int x = margin; x < n - margin; ++x) {
        const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
        r.at(0, y, x) = static_cast<float>(std::min(1.0, r.at(0, y, x) + a * std::exp(-d2 / 18.0)));
      }
    }
  }
  return r;
}

TEST(SceneSpec, ValidationNamesField) {
  SceneSpec s;
  EXPECT_NO_THROW(s.validate());
  s.hr_size = 250;
  EXPECT_THROW(s.validate(), ConfigError);
  s = SceneSpec{};
  s.warp_max_px = 32.0;
  EXPECT_THROW(s.validate(), ConfigError);
  s = SceneSpec{};
  s.saturation_level = 0.0;
  try {
    s.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("saturation_level"), std::string::npos);
  }
}

TEST(GenerateScene, NoSettlementsGivesDarkScene) {
  SceneSpec s = spec_with_seed(5);
  s.settlements_min = s.settlements_max = 0;
  const ModalityBundle b = generate_scene(s);
  EXPECT_TRUE(std::all_of(b.hr_ntl.data.begin(), b.hr_ntl.data.end(), [](float v) { return v == 0.0f; }));
  EXPECT_TRUE(std::all_of(b.isp.data.begin(), b.isp.data.end(), [](float v) { return v == 0.0f; }));
  EXPECT_EQ(b.dmo.bands, kDmoBands);
}

TEST(GenerateScene, SameSeedIsBitIdentical) {
  EXPECT_EQ(generate_scene(spec_with_seed(11)), generate_scene(spec_with_seed(11)));
  EXPECT_NE(generate_scene(spec_with_seed(11)).hr_ntl, generate_scene(spec_with_seed(12)).hr_ntl);
}

TEST(GenerateScene, ShapesRangesAndBinaryIsp) {
  for (const int r : {8, 4}) {
    SceneSpec s = spec_with_seed(3);
    s.hr_size = 128;
    s.scale_r = r;
    const ModalityBundle b = generate_scene(s);
    EXPECT_EQ(b.lr_ntl.height * r, b.hr_ntl.height);
    EXPECT_EQ(b.lr_ntl.width * r, b.hr_ntl.width);
    for (const Raster* ras : {&b.lr_ntl, &b.hr_ntl, &b.dmo, &b.dem, &b.isp}) {
      EXPECT_EQ(ras->height, ras == &b.lr_ntl ? 128 / r : 128);
      for (float v : ras->data) {
        ASSERT_TRUE(std::isfinite(v));
        ASSERT_GE(v, 0.0f);
        ASSERT_LE(v, 1.0f);
      }
    }
    for (float v : b.isp.data) ASSERT_TRUE(v == 0.0f || v == 1.0f);
  }
}

TEST(GenerateScene, QuantisationLevels) {
  const ModalityBundle b = generate_scene(spec_with_seed(21));
  auto on_lattice = [](const Raster& r, int levels) {
    for (float v : r.data) {
      const double k = static_cast<double>(v) * levels;
      if (std::abs(k - std::round(k)) > 1e-3) return false;
    }
    return true;
  };
  EXPECT_TRUE(on_lattice(b.lr_ntl, kLrLevels));
  EXPECT_TRUE(on_lattice(b.hr_ntl, kHrLevels));
  EXPECT_TRUE(on_lattice(b.dmo, kDmoLevels));
}

TEST(GenerateScene, IspRatioInBand) {
  std::size_t zeros = 0, ones = 0;
  for (std::uint64_t seed = 0; seed < 16; ++seed) {
    const ModalityBundle b = generate_scene(spec_with_seed(seed));
    const double ratio = zero_one_ratio(b.isp);
    EXPECT_GE(ratio, 20.0) << "seed " << seed;
    EXPECT_LE(ratio, 200.0) << "seed " << seed;
    const auto n1 = static_cast<std::size_t>(std::count(b.isp.data.begin(), b.isp.data.end(), 1.0f));
    ones += n1;
    zeros += b.isp.data.size() - n1;
  }
  const double aggregate = static_cast<double>(zeros) / static_cast<double>(ones);
  EXPECT_GE(aggregate, 20.0);
  EXPECT_LE(aggregate, 200.0);
}

TEST(GenerateScene, MostHrPixelsDark) {
  std::size_t dark = 0, total = 0;
  for (std::uint64_t seed = 100; seed < 116; ++seed) {
    const ModalityBundle b = generate_scene(spec_with_seed(seed));
    dark += static_cast<std::size_t>(std::count(b.hr_ntl.data.begin(), b.hr_ntl.data.end(), 0.0f));
    total += b.hr_ntl.data.size();
  }
  EXPECT_GE(static_cast<double>(dark) / total, 0.9);
}

TEST(GenerateScene, LrIsDegradedHr) {
  const SceneSpec s = spec_with_seed(8);
  const ModalityBundle b = generate_scene(s);
  EXPECT_EQ(b.lr_ntl, degrade(b.hr_ntl, s));
}

TEST(Degrade, ConstantOneIsFixedPoint) {
  SceneSpec s;
  s.hr_size = 64;
  s.warp_max_px = 0.0;
  s.noise_sigma = 0.0;
  const Raster lr = degrade(Raster(1, 64, 64, 1.0f), s);
  ASSERT_EQ(lr.height, 8);
  for (float v : lr.data) EXPECT_EQ(v, 1.0f);
}

TEST(Degrade, SinglePixelBlooms) {
  SceneSpec s;
  s.hr_size = 64;
  s.warp_max_px = 0.0;
  s.noise_sigma = 0.0;
  // A lone pixel at default saturation falls below half a 6-bit step after
  // the box average, so make it bright enough to survive quantisation.
  s.saturation_level = 0.05;
  Raster hr(1, 64, 64);
  hr.at(0, 29, 29) = 1.0f;
  auto lit = [](const Raster& lr) { return std::count_if(lr.data.begin(), lr.data.end(), [](float v) { return v > 0.0f; }); };
  EXPECT_GT(lit(degrade(hr, s)), 1);
  s.bloom_sigma_px = 0.0;
  EXPECT_EQ(lit(degrade(hr, s)), 1);
}

TEST(Degrade, BoxDownsampleConservesMean) {
  for (const double warp : {0.0, 4.0}) {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
      SceneSpec s = spec_with_seed(seed);
      s.saturation_level = 1.0;
      s.noise_sigma = 0.0;
      s.warp_max_px = warp;
      const ModalityBundle b = generate_scene(s);
      EXPECT_LE(std::abs(mean_of(b.lr_ntl) - mean_of(b.hr_ntl)), 1.0 / 126.0) << "warp " << warp << " seed " << seed;
    }
  }
}

TEST(Degrade, ShiftEquivariantWithoutWarp) {
  SceneSpec s;
  s.hr_size = 128;
  s.warp_max_px = 0.0;
  s.noise_sigma = 0.0;
  const int n = 128, r = 8;
  const Raster base = blob_image(n, 4, 32);
  const Raster lr = degrade(base, s);
  for (const int shift : {8, 16}) {
    Raster moved(1, n, n);
    for (int y = 0; y + shift < n; ++y) {
      for (int x = 0; x + shift < n; ++x) moved.at(0, y + shift, x + shift) = base.at(0, y, x);
    }
    const Raster lr_moved = degrade(moved, s);
    const int k = shift / r;
    for (int y = 0; y < n / r; ++y) {
      for (int x = 0; x < n / r; ++x) {
        const float expect = (y >= k && x >= k) ? lr.at(0, y - k, x - k) : 0.0f;
        ASSERT_EQ(lr_moved.at(0, y, x), expect) << "shift " << shift << " at " << y << "," << x;
      }
    }
  }
}

TEST(Degrade, QuantisedInputStaysOnLattice) {
  SceneSpec s;
  s.hr_size = 64;
  s.bloom_sigma_px = 0.0;
  s.saturation_level = 1.0;
  s.warp_max_px = 0.0;
  s.noise_sigma = 0.0;
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> level(0, kLrLevels);
  Raster hr(1, 64, 64);
  for (auto& v : hr.data) v = static_cast<float>(level(rng)) / kLrLevels;
  const Raster lr = degrade(hr, s);
  for (float v : lr.data) {
    const double k = static_cast<double>(v) * kLrLevels;
    EXPECT_NEAR(k, std::round(k), 1e-4);
  }
  // Constant cells are reproduced exactly.
  Raster flat(1, 64, 64);
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 64; ++x) flat.at(0, y, x) = static_cast<float>((y / 8 * 8 + x / 8) % 64) / kLrLevels;
  }
  const Raster lr_flat = degrade(flat, s);
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) EXPECT_EQ(lr_flat.at(0, y, x), flat.at(0, y * 8, x * 8));
  }
}

TEST(Degrade, DeterministicPerSeed) {
  const Raster hr = generate_scene(spec_with_seed(2)).hr_ntl;
  EXPECT_EQ(degrade(hr, spec_with_seed(30)), degrade(hr, spec_with_seed(30)));
  EXPECT_NE(degrade(hr, spec_with_seed(30)), degrade(hr, spec_with_seed(31)));
}

TEST(Degrade, RejectsIndivisibleSide) {
  SceneSpec s;
  EXPECT_THROW(degrade(Raster(1, 60, 60), s), DimensionError);
}

TEST(Manifest, SplitSizesFloorWithRemainderToTrain) {
  const DatasetManifest m = make_manifest(64, {0.8, 0.1, 0.1}, 7);
  EXPECT_EQ(m.indices(Split::kTrain).size(), 52u);
  EXPECT_EQ(m.indices(Split::kVal).size(), 6u);
  EXPECT_EQ(m.indices(Split::kTest).size(), 6u);
  std::set<std::size_t> seen;
  for (Split s : {Split::kTrain, Split::kVal, Split::kTest}) {
    for (auto i : m.indices(s)) EXPECT_TRUE(seen.insert(i).second);
  }
  EXPECT_EQ(seen.size(), 64u);
  const DatasetManifest again = make_manifest(64, {0.8, 0.1, 0.1}, 7);
  EXPECT_EQ(again.splits, m.splits);
  EXPECT_EQ(again.scene_seeds, m.scene_seeds);
}

TEST(Manifest, EmptyTestFraction) {
  const DatasetManifest m = make_manifest(20, {0.9, 0.1, 0.0}, 1);
  EXPECT_TRUE(m.indices(Split::kTest).empty());
  EXPECT_EQ(m.indices(Split::kVal).size(), 2u);
  EXPECT_EQ(m.indices(Split::kTrain).size(), 18u);
}

TEST(Manifest, BadFractionsAreConfigErrors) {
  EXPECT_THROW(make_manifest(10, {0.5, 0.1, 0.1}, 1), ConfigError);
  EXPECT_THROW(make_manifest(10, {1.2, -0.1, -0.1}, 1), ConfigError);
  EXPECT_THROW(make_manifest(0, {0.8, 0.1, 0.1}, 1), ConfigError);
}

TEST(Manifest, TextRoundTrip) {
  TempDir dir("manifest");
  std::vector<double> strata(30);
  std::iota(strata.begin(), strata.end(), 0.0);
  const DatasetManifest m = make_manifest(30, {0.8, 0.1, 0.1}, 3, SceneSpec{}, &strata);
  write_manifest(m, dir.path);
  const DatasetManifest back = read_manifest(dir.path);
  EXPECT_EQ(back.splits, m.splits);
  EXPECT_EQ(back.scene_seeds, m.scene_seeds);
  EXPECT_EQ(back.spec_hash, m.spec_hash);
  EXPECT_EQ(back.stratified, m.stratified);
  EXPECT_EQ(back.scene_spec(4).seed, m.scene_spec(4).seed);
}

TEST(GenerateDataset, StratifiedSplitAndRegeneration) {
  TempDir dir("gen");
  const DatasetManifest m = generate_dataset(dir.path, 64, {0.8, 0.1, 0.1}, 7);
  EXPECT_TRUE(m.stratified);
  EXPECT_GE(m.dark_fraction, 0.9);
  std::vector<double> train, val;
  for (auto i : m.indices(Split::kTrain)) train.push_back(mean_of(read_bundle(dir.path / scene_dir_name(i)).hr_ntl));
  for (auto i : m.indices(Split::kVal)) val.push_back(mean_of(read_bundle(dir.path / scene_dir_name(i)).hr_ntl));
  EXPECT_LT(ks_statistic(train, val), 0.3);

  const DatasetManifest disk = read_manifest(dir.path);
  for (std::size_t i : {std::size_t{0}, std::size_t{33}, std::size_t{63}}) {
    EXPECT_EQ(generate_scene(disk.scene_spec(i)), read_bundle(dir.path / scene_dir_name(i))) << "scene " << i;
  }
}

TEST(KsOracle, KnownValues) {
  EXPECT_DOUBLE_EQ(ks_statistic({1, 2, 3}, {1, 2, 3}), 0.0);
  EXPECT_DOUBLE_EQ(ks_statistic({1, 2}, {3, 4}), 1.0);
  EXPECT_DOUBLE_EQ(ks_statistic({1, 2, 3, 4}, {3, 4, 5, 6}), 0.5);
}

TEST(Bundle, RoundTripIsBitExact) {
  TempDir dir("bundle");
  SceneSpec s = spec_with_seed(44);
  s.hr_size = 64;
  const ModalityBundle b = generate_scene(s);
  write_bundle(b, dir.path / "scene_0000");
  for (const char* f : {"lr_ntl.dlt", "hr_ntl.dlt", "dmo.dlt", "dem.dlt", "isp.dlt"}) {
    EXPECT_TRUE(fs::exists(dir.path / "scene_0000" / f)) << f;
  }
  EXPECT_EQ(read_bundle(dir.path / "scene_0000"), b);
}

TEST(Bundle, DmoBandOrderPreserved) {
  TempDir dir("bands");
  Raster dmo(kDmoBands, 8, 8);
  for (int b = 0; b < kDmoBands; ++b) {
    for (int y = 0; y < 8; ++y) {
      for (int x = 0; x < 8; ++x) dmo.at(b, y, x) = static_cast<float>(b * 100 + y * 8 + x) / 1024.0f;
    }
  }
  write_raster(dir.path / "dmo.dlt", dmo);
  std::ifstream in(dir.path / "dmo.dlt", std::ios::binary);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), {});
  ASSERT_EQ(bytes.size(), 24u + dmo.data.size() * 4);
  // Band-major: the k-th float in the payload is band k / 64.
  for (std::size_t k = 0; k < dmo.data.size(); ++k) {
    float v;
    std::memcpy(&v, bytes.data() + 24 + 4 * k, 4);
    const int b = static_cast<int>(k / 64), y = static_cast<int>(k % 64 / 8), x = static_cast<int>(k % 8);
    ASSERT_EQ(v, static_cast<float>(b * 100 + y * 8 + x) / 1024.0f);
  }
  EXPECT_EQ(read_raster(dir.path / "dmo.dlt"), dmo);
}

TEST(Bundle, CorruptMagicAndTruncation) {
  TempDir dir("corrupt");
  const Raster r(1, 4, 4, 0.5f);
  const fs::path p = dir.path / "r.dlt";
  write_raster(p, r);
  {
    std::fstream f(p, std::ios::in | std::ios::out | std::ios::binary);
    f.write("XLT1", 4);
  }
  try {
    read_raster(p);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("offset 0"), std::string::npos) << e.what();
  }
  write_raster(p, r);
  fs::resize_file(p, 24 + 30);
  try {
    read_raster(p);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("offset"), std::string::npos) << e.what();
  }
  fs::resize_file(p, 10);
  EXPECT_THROW(read_raster(p), FormatError);
}

TEST(Raster, U8RejectsNonIntegral) {
  TempDir dir("u8");
  Raster ok(1, 2, 2, 3.0f);
  write_raster(dir.path / "a.dlt", ok, RasterDType::kU8);
  EXPECT_EQ(read_raster(dir.path / "a.dlt"), ok);
  Raster bad(1, 2, 2, 0.5f);
  EXPECT_THROW(write_raster(dir.path / "b.dlt", bad, RasterDType::kU8), DataError);
}

// Keys cubic with a = -0.5, half-pixel centres, clamped edges.
double keys(double t) {
  t = std::abs(t);
  if (t <= 1) return 1.5 * t * t * t - 2.5 * t * t + 1;
  if (t < 2) return -0.5 * t * t * t + 2.5 * t * t - 4 * t + 2;
  return 0;
}

TEST(Bicubic, MatchesDirectFormula) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.2, 0.8);
  Raster src(1, 5, 5);
  for (auto& v : src.data) v = static_cast<float>(u(rng));
  const int f = 4;
  const Raster up = bicubic_upsample(src, f);
  ASSERT_EQ(up.height, 20);
  for (int y = 0; y < 20; ++y) {
    for (int x = 0; x < 20; ++x) {
      const double sy = (y + 0.5) / f - 0.5, sx = (x + 0.5) / f - 0.5;
      double acc = 0;
      for (int i = static_cast<int>(std::floor(sy)) - 1; i <= static_cast<int>(std::floor(sy)) + 2; ++i) {
        for (int j = static_cast<int>(std::floor(sx)) - 1; j <= static_cast<int>(std::floor(sx)) + 2; ++j) {
          acc += keys(sy - i) * keys(sx - j) * src.at(0, std::clamp(i, 0, 4), std::clamp(j, 0, 4));
        }
      }
      EXPECT_NEAR(up.at(0, y, x), std::clamp(acc, 0.0, 1.0), 1e-6);
    }
  }
  const Raster flat = bicubic_upsample(Raster(1, 4, 4, 0.25f), 8);
  for (float v : flat.data) EXPECT_NEAR(v, 0.25f, 1e-7);
}

}  // namespace
}  // namespace dl
