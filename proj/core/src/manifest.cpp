#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "deeplight/dataset.hpp"
#include "deeplight/error.hpp"
#include "deeplight/parallel.hpp"

namespace dl {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t s = base ^ (stream * 0xD1B54A32D192ED03ull);
  splitmix64(s);
  return splitmix64(s);
}

const char* to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

Split parse_split(const std::string& text) {
  if (text == "train") return Split::kTrain;
  if (text == "val") return Split::kVal;
  if (text == "test") return Split::kTest;
  throw ConfigError("unknown split '" + text + "' (expected train, val or test)");
}

std::string scene_dir_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "scene_%04zu", index);
  return buf;
}

std::vector<std::size_t> DatasetManifest::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < splits.size(); ++i) {
    if (splits[i] == s) out.push_back(i);
  }
  return out;
}

SceneSpec DatasetManifest::scene_spec(std::size_t i) const {
  SceneSpec s = spec;
  s.seed = scene_seeds.at(i);
  return s;
}

namespace {

std::string spec_canonical(const SceneSpec& spec) {
  std::ostringstream os;
  os.precision(17);
  os << "hr_size=" << spec.hr_size << ";scale_r=" << spec.scale_r << ";settlements=" << spec.settlements_min << ","
     << spec.settlements_max << ";roughness=" << spec.terrain_roughness << ";saturation=" << spec.saturation_level
     << ";bloom=" << spec.bloom_sigma_px << ";warp=" << spec.warp_max_px << ";noise=" << spec.noise_sigma;
  return os.str();
}

std::array<std::size_t, 3> split_sizes(int n, const std::array<double, 3>& f) {
  // The small slack keeps e.g. 10 * 0.3 from flooring to 2.
  const auto n_val = static_cast<std::size_t>(std::floor(n * f[1] + 1e-9));
  const auto n_test = static_cast<std::size_t>(std::floor(n * f[2] + 1e-9));
  return {static_cast<std::size_t>(n) - n_val - n_test, n_val, n_test};
}

}  // namespace

std::uint64_t spec_hash(const SceneSpec& spec, int n_scenes, const std::array<double, 3>& fractions,
                        std::uint64_t seed) {
  std::ostringstream os;
  os.precision(17);
  os << spec_canonical(spec) << ";n=" << n_scenes << ";fractions=" << fractions[0] << "," << fractions[1] << ","
     << fractions[2] << ";seed=" << seed;
  std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
  for (unsigned char c : os.str()) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

DatasetManifest make_manifest(int n_scenes, const std::array<double, 3>& fractions, std::uint64_t seed,
                              const SceneSpec& spec, const std::vector<double>* strata) {
  if (n_scenes < 1) throw ConfigError("need ≥ 1 scene");
  for (double f : fractions) {
    if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("split fractions must lie in [0, 1]");
  }
  const double total = fractions[0] + fractions[1] + fractions[2];
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1, got " + std::to_string(total));
  if (strata != nullptr && strata->size() != static_cast<std::size_t>(n_scenes)) {
    throw ConfigError("stratification needs one key per scene");
  }

  DatasetManifest m;
  m.seed = seed;
  m.fractions = fractions;
  m.spec = spec;
  m.spec_hash = spec_hash(spec, n_scenes, fractions, seed);
  std::uint64_t state = seed;
  for (int i = 0; i < n_scenes; ++i) m.scene_seeds.push_back(splitmix64(state));

  const auto sizes = split_sizes(n_scenes, fractions);
  m.splits.assign(static_cast<std::size_t>(n_scenes), Split::kTrain);
  std::uint64_t shuffle_state = derive_seed(seed, 2);
  auto draw = [&](std::size_t bound) { return static_cast<std::size_t>(splitmix64(shuffle_state) % bound); };

  std::vector<std::size_t> order(static_cast<std::size_t>(n_scenes));
  std::iota(order.begin(), order.end(), 0);
  if (strata == nullptr) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[draw(i)]);
    for (std::size_t k = 0; k < sizes[1]; ++k) m.splits[order[k]] = Split::kVal;
    for (std::size_t k = 0; k < sizes[2]; ++k) m.splits[order[sizes[1] + k]] = Split::kTest;
    return m;
  }

  m.stratified = true;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return (*strata)[a] < (*strata)[b]; });
  // One scene per block for each held-out split, at a seeded offset.
  auto assign = [&](std::size_t count, Split target) {
    if (count == 0) return;
    std::vector<std::size_t> free;
    for (std::size_t i : order) {
      if (m.splits[i] == Split::kTrain) free.push_back(i);
    }
    const double block = static_cast<double>(free.size()) / count;
    for (std::size_t k = 0; k < count; ++k) {
      const auto lo = static_cast<std::size_t>(std::floor(k * block));
      const auto hi = std::max(lo + 1, static_cast<std::size_t>(std::floor((k + 1) * block)));
      m.splits[free[lo + draw(hi - lo)]] = target;
    }
  };
  assign(sizes[1], Split::kVal);
  assign(sizes[2], Split::kTest);
  return m;
}

void write_manifest(const DatasetManifest& m, const std::filesystem::path& dir) {
  const auto path = dir / "manifest.txt";
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
  out.precision(17);
  const SceneSpec& s = m.spec;
  out << "format=deeplight-manifest-1\n";
  out << "seed=" << m.seed << "\n";
  out << "scenes=" << m.size() << "\n";
  out << "fractions=" << m.fractions[0] << "," << m.fractions[1] << "," << m.fractions[2] << "\n";
  out << "stratified=" << (m.stratified ? 1 : 0) << "\n";
  char hash[32];
  std::snprintf(hash, sizeof(hash), "%016llx", static_cast<unsigned long long>(m.spec_hash));
  out << "spec_hash=" << hash << "\n";
  out << "spec.hr_size=" << s.hr_size << "\n";
  out << "spec.scale_r=" << s.scale_r << "\n";
  out << "spec.settlements_min=" << s.settlements_min << "\n";
  out << "spec.settlements_max=" << s.settlements_max << "\n";
  out << "spec.terrain_roughness=" << s.terrain_roughness << "\n";
  out << "spec.saturation_level=" << s.saturation_level << "\n";
  out << "spec.bloom_sigma_px=" << s.bloom_sigma_px << "\n";
  out << "spec.warp_max_px=" << s.warp_max_px << "\n";
  out << "spec.noise_sigma=" << s.noise_sigma << "\n";
  out << "normalization.lr_ntl=6-bit levels k/" << kLrLevels << "\n";
  out << "normalization.hr_ntl=12-bit levels k/" << kHrLevels << "\n";
  out << "normalization.dmo=14-bit levels k/" << kDmoLevels << "\n";
  out << "normalization.dem=log1p(m)/log1p(" << kDemCapMetres << ")\n";
  if (m.dark_fraction >= 0.0) out << "stats.dark_fraction=" << m.dark_fraction << "\n";
  for (std::size_t i = 0; i < m.size(); ++i) {
    out << scene_dir_name(i) << ".seed=" << m.scene_seeds[i] << "\n";
    out << scene_dir_name(i) << ".split=" << to_string(m.splits[i]) << "\n";
  }
  out.flush();
  if (!out) throw FormatError("write to '" + path.string() + "' failed");
}

DatasetManifest read_manifest(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.txt";
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open manifest '" + path.string() + "'");
  std::map<std::string, std::string> kv;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw FormatError(path.string() + ": line " + std::to_string(line_no) + " is not key=value");
    }
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw FormatError(path.string() + ": missing key '" + key + "'");
    return it->second;
  };
  try {
    DatasetManifest m;
    m.seed = std::stoull(get("seed"));
    const auto n = static_cast<std::size_t>(std::stoull(get("scenes")));
    {
      std::istringstream fs(get("fractions"));
      std::string part;
      for (auto& f : m.fractions) {
        std::getline(fs, part, ',');
        f = std::stod(part);
      }
    }
    m.stratified = get("stratified") == "1";
    m.spec_hash = std::stoull(get("spec_hash"), nullptr, 16);
    SceneSpec& s = m.spec;
    s.hr_size = std::stoi(get("spec.hr_size"));
    s.scale_r = std::stoi(get("spec.scale_r"));
    s.settlements_min = std::stoi(get("spec.settlements_min"));
    s.settlements_max = std::stoi(get("spec.settlements_max"));
    s.terrain_roughness = std::stod(get("spec.terrain_roughness"));
    s.saturation_level = std::stod(get("spec.saturation_level"));
    s.bloom_sigma_px = std::stod(get("spec.bloom_sigma_px"));
    s.warp_max_px = std::stod(get("spec.warp_max_px"));
    s.noise_sigma = std::stod(get("spec.noise_sigma"));
    if (auto it = kv.find("stats.dark_fraction"); it != kv.end()) m.dark_fraction = std::stod(it->second);
    for (std::size_t i = 0; i < n; ++i) {
      m.scene_seeds.push_back(std::stoull(get(scene_dir_name(i) + ".seed")));
      m.splits.push_back(parse_split(get(scene_dir_name(i) + ".split")));
    }
    return m;
  } catch (const std::invalid_argument&) {
    throw FormatError(path.string() + ": malformed numeric value");
  } catch (const std::out_of_range&) {
    throw FormatError(path.string() + ": numeric value out of range");
  } catch (const ConfigError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_bundle(const ModalityBundle& b, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw FormatError("cannot create '" + dir.string() + "': " + ec.message());
  write_raster(dir / "lr_ntl.dlt", b.lr_ntl);
  write_raster(dir / "hr_ntl.dlt", b.hr_ntl);
  write_raster(dir / "dmo.dlt", b.dmo);
  write_raster(dir / "dem.dlt", b.dem);
  write_raster(dir / "isp.dlt", b.isp, RasterDType::kU8);
}

ModalityBundle read_bundle(const std::filesystem::path& dir) {
  ModalityBundle b;
  b.lr_ntl = read_raster(dir / "lr_ntl.dlt");
  b.hr_ntl = read_raster(dir / "hr_ntl.dlt");
  b.dmo = read_raster(dir / "dmo.dlt");
  b.dem = read_raster(dir / "dem.dlt");
  b.isp = read_raster(dir / "isp.dlt");
  const int h = b.hr_ntl.height, w = b.hr_ntl.width;
  auto check = [&](const Raster& r, int bands, int rh, int rw, const char* name) {
    if (r.bands != bands || r.height != rh || r.width != rw) {
      throw FormatError(dir.string() + ": " + name + " is " + std::to_string(r.bands) + "x" +
                        std::to_string(r.height) + "x" + std::to_string(r.width) + ", expected " +
                        std::to_string(bands) + "x" + std::to_string(rh) + "x" + std::to_string(rw));
    }
  };
  if (b.lr_ntl.height < 1 || h % b.lr_ntl.height != 0 || w % b.lr_ntl.width != 0 ||
      h / b.lr_ntl.height != w / b.lr_ntl.width) {
    throw FormatError(dir.string() + ": LR/HR sizes do not share one integer ratio");
  }
  check(b.lr_ntl, 1, b.lr_ntl.height, b.lr_ntl.width, "lr_ntl");
  check(b.hr_ntl, 1, h, w, "hr_ntl");
  check(b.dmo, kDmoBands, h, w, "dmo");
  check(b.dem, 1, h, w, "dem");
  check(b.isp, 1, h, w, "isp");
  return b;
}

DatasetManifest generate_dataset(const std::filesystem::path& dir, int n_scenes,
                                 const std::array<double, 3>& fractions, std::uint64_t seed, const SceneSpec& spec) {
  spec.validate();
  // Validates counts and fractions before any work.
  const DatasetManifest plain = make_manifest(n_scenes, fractions, seed, spec);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw FormatError("cannot create '" + dir.string() + "': " + ec.message());

  std::vector<double> means(plain.size());
  std::vector<std::size_t> dark(plain.size());
  parallel_for(plain.size(), [&](std::size_t i) {
    const ModalityBundle b = generate_scene(plain.scene_spec(i));
    write_bundle(b, dir / scene_dir_name(i));
    double acc = 0.0;
    std::size_t zeros = 0;
    for (float v : b.hr_ntl.data) {
      acc += v;
      zeros += v == 0.0f;
    }
    means[i] = acc / static_cast<double>(b.hr_ntl.data.size());
    dark[i] = zeros;
  });
  DatasetManifest m = make_manifest(n_scenes, fractions, seed, spec, &means);
  const double pixels = static_cast<double>(spec.hr_size) * spec.hr_size * static_cast<double>(m.size());
  m.dark_fraction = static_cast<double>(std::accumulate(dark.begin(), dark.end(), std::size_t{0})) / pixels;
  write_manifest(m, dir);
  return m;
}

}  // namespace dl
