#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "deeplight/raster.hpp"

namespace dl {

struct SceneSpec {
  std::uint64_t seed = 0;
  int hr_size = 256;
  int scale_r = 8;
  int settlements_min = 2;
  int settlements_max = 6;
  double terrain_roughness = 0.5;  // persistence of the DEM value-noise octaves
  double saturation_level = 0.6;
  double bloom_sigma_px = 3.0;
  double warp_max_px = 4.0;        // HR pixels
  double noise_sigma = 0.01;

  // Throws ConfigError naming the offending field.
  void validate() const;
  int lr_size() const { return hr_size / scale_r; }
};

/// One geo-aligned sample. Bit depths before normalisation: LR NTL 6-bit,
/// HR NTL 12-bit, DMO 14-bit; DEM is log1p(metres) / log1p(8848).
struct ModalityBundle {
  Raster lr_ntl;  // 1 x h x w
  Raster hr_ntl;  // 1 x H x W
  Raster dmo;     // 7 x H x W
  Raster dem;     // 1 x H x W
  Raster isp;     // 1 x H x W, {0, 1}

  bool operator==(const ModalityBundle&) const = default;
};

inline constexpr int kDmoBands = 7;
inline constexpr int kLrLevels = 63;
inline constexpr int kHrLevels = 4095;
inline constexpr int kDmoLevels = 16383;
inline constexpr double kDemCapMetres = 8848.0;

ModalityBundle generate_scene(const SceneSpec& spec);

/// bloom -> saturation clip and renormalise -> smooth warp -> r x r box
/// average -> Gaussian noise -> 6-bit quantisation -> clamp to [0, 1].
Raster degrade(const Raster& hr_ntl, const SceneSpec& spec);

void write_bundle(const ModalityBundle& bundle, const std::filesystem::path& dir);
ModalityBundle read_bundle(const std::filesystem::path& dir);

enum class Split { kTrain, kVal, kTest };
const char* to_string(Split s);
Split parse_split(const std::string& text);  // throws ConfigError

struct DatasetManifest {
  std::uint64_t seed = 0;
  std::array<double, 3> fractions{0.8, 0.1, 0.1};
  std::vector<std::uint64_t> scene_seeds;
  std::vector<Split> splits;
  std::uint64_t spec_hash = 0;
  SceneSpec spec;  // template; per-scene seeds override spec.seed
  bool stratified = false;
  double dark_fraction = -1.0;  // HR NTL zero-pixel fraction over all scenes; < 0 if unknown

  std::size_t size() const { return scene_seeds.size(); }
  std::vector<std::size_t> indices(Split s) const;
  SceneSpec scene_spec(std::size_t i) const;
};

/// Split sizes: floor(n * f_val) and floor(n * f_test), remainder to train.
/// Without strata the assignment is a seeded shuffle. With one stratification
/// key per scene, scenes are sorted by key and every consecutive block
/// contributes to validation and test so that split distributions match.
DatasetManifest make_manifest(int n_scenes, const std::array<double, 3>& fractions, std::uint64_t seed,
                              const SceneSpec& spec = {}, const std::vector<double>* strata = nullptr);

std::uint64_t spec_hash(const SceneSpec& spec, int n_scenes, const std::array<double, 3>& fractions,
                        std::uint64_t seed);

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& dir);
DatasetManifest read_manifest(const std::filesystem::path& dir);

std::string scene_dir_name(std::size_t index);  // "scene_0000"

/// splitmix64 step, used for all seed derivation.
std::uint64_t splitmix64(std::uint64_t& state);
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

/// Generates the scenes, stratifies the split on HR NTL mean and writes
/// bundles plus manifest.txt under dir.
DatasetManifest generate_dataset(const std::filesystem::path& dir, int n_scenes,
                                 const std::array<double, 3>& fractions, std::uint64_t seed,
                                 const SceneSpec& spec = {});

}  // namespace dl
