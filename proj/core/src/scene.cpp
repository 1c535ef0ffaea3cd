#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "deeplight/dataset.hpp"
#include "deeplight/error.hpp"
#include "random.hpp"

namespace dl {

void SceneSpec::validate() const {
  if (scale_r < 1) throw ConfigError("scene.scale_r must be positive");
  if (hr_size < scale_r || hr_size % scale_r != 0) {
    throw ConfigError("scene.hr_size " + std::to_string(hr_size) + " must be a positive multiple of scene.scale_r " +
                      std::to_string(scale_r));
  }
  if (settlements_min < 0 || settlements_max < settlements_min) {
    throw ConfigError("scene.settlements_min/max must satisfy 0 <= min <= max");
  }
  if (!(terrain_roughness > 0.0 && terrain_roughness < 1.0)) {
    throw ConfigError("scene.terrain_roughness must lie in (0, 1)");
  }
  if (!(saturation_level > 0.0 && saturation_level <= 1.0)) {
    throw ConfigError("scene.saturation_level must lie in (0, 1]");
  }
  if (!(bloom_sigma_px >= 0.0)) throw ConfigError("scene.bloom_sigma_px must be non-negative");
  if (!(warp_max_px >= 0.0 && warp_max_px < static_cast<double>(hr_size) / scale_r)) {
    throw ConfigError("scene.warp_max_px must lie in [0, hr_size / scale_r)");
  }
  if (!(noise_sigma >= 0.0)) throw ConfigError("scene.noise_sigma must be non-negative");
}

namespace {

using detail::Rng;

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

// Multi-octave value noise in [0, 1].
std::vector<double> value_noise(int size, int base_cells, int octaves, double persistence, Rng& rng) {
  std::vector<double> out(static_cast<std::size_t>(size) * size, 0.0);
  double amplitude = 1.0, total = 0.0;
  for (int o = 0; o < octaves; ++o) {
    const int cells = base_cells << o;
    std::vector<double> lattice(static_cast<std::size_t>(cells + 1) * (cells + 1));
    for (auto& v : lattice) v = rng.uniform();
    const double step = static_cast<double>(cells) / size;
    for (int y = 0; y < size; ++y) {
      const double fy = (y + 0.5) * step;
      const int y0 = std::min(static_cast<int>(fy), cells - 1);
      const double ty = smoothstep(fy - y0);
      for (int x = 0; x < size; ++x) {
        const double fx = (x + 0.5) * step;
        const int x0 = std::min(static_cast<int>(fx), cells - 1);
        const double tx = smoothstep(fx - x0);
        const double v00 = lattice[y0 * (cells + 1) + x0], v01 = lattice[y0 * (cells + 1) + x0 + 1];
        const double v10 = lattice[(y0 + 1) * (cells + 1) + x0], v11 = lattice[(y0 + 1) * (cells + 1) + x0 + 1];
        const double top = v00 + (v01 - v00) * tx, bot = v10 + (v11 - v10) * tx;
        out[static_cast<std::size_t>(y) * size + x] += amplitude * (top + (bot - top) * ty);
      }
    }
    total += amplitude;
    amplitude *= persistence;
  }
  for (auto& v : out) v /= total;
  return out;
}

float quantize(double v, int levels) {
  return static_cast<float>(std::round(std::clamp(v, 0.0, 1.0) * levels) / levels);
}

struct Settlement {
  double cy, cx, radius, peak;
  std::array<double, 3> amp, phase;  // boundary harmonics k = 2, 3, 4

  double boundary(double theta) const {
    double b = 1.0;
    for (int k = 0; k < 3; ++k) b += amp[k] * std::cos((k + 2) * theta + phase[k]);
    return b;
  }
};

// Landsat-like reflectance (coastal, blue, green, red, NIR, SWIR1, SWIR2).
constexpr double kWater[kDmoBands] = {0.08, 0.07, 0.06, 0.04, 0.02, 0.01, 0.01};
constexpr double kVegetation[kDmoBands] = {0.04, 0.05, 0.08, 0.05, 0.40, 0.20, 0.10};
constexpr double kBare[kDmoBands] = {0.12, 0.14, 0.18, 0.22, 0.28, 0.35, 0.30};
constexpr double kUrban[kDmoBands] = {0.15, 0.16, 0.18, 0.20, 0.22, 0.25, 0.24};
constexpr double kReflectanceStretch = 0.5;
constexpr double kPixelMetres = 30.0;

}  // namespace

ModalityBundle generate_scene(const SceneSpec& spec) {
  spec.validate();
  const int n = spec.hr_size;
  const std::size_t pixels = static_cast<std::size_t>(n) * n;
  Rng rng(derive_seed(spec.seed, 0));

  // Terrain.
  const auto relief_noise = value_noise(n, 3, 5, spec.terrain_roughness, rng);
  const double relief = rng.uniform(600.0, 3000.0);
  const double base_height = rng.uniform(0.0, 400.0);
  std::vector<double> metres(pixels);
  for (std::size_t i = 0; i < pixels; ++i) metres[i] = base_height + relief * std::pow(relief_noise[i], 1.8);

  ModalityBundle b;
  b.dem = Raster(1, n, n);
  for (std::size_t i = 0; i < pixels; ++i) {
    b.dem.data[i] = static_cast<float>(std::log1p(metres[i]) / std::log1p(kDemCapMetres));
  }
  std::vector<double> grad_y(pixels), grad_x(pixels), slope(pixels);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const int ym = std::max(y - 1, 0), yp = std::min(y + 1, n - 1);
      const int xm = std::max(x - 1, 0), xp = std::min(x + 1, n - 1);
      const std::size_t i = static_cast<std::size_t>(y) * n + x;
      grad_y[i] = (metres[static_cast<std::size_t>(yp) * n + x] - metres[static_cast<std::size_t>(ym) * n + x]) /
                  ((yp - ym) * kPixelMetres);
      grad_x[i] = (metres[static_cast<std::size_t>(y) * n + xp] - metres[static_cast<std::size_t>(y) * n + xm]) /
                  ((xp - xm) * kPixelMetres);
      slope[i] = std::hypot(grad_y[i], grad_x[i]);
    }
  }

  // Settlements: rank-size areas summing to a built fraction of 1-3 %,
  // each sited at the flattest of several random candidates.
  const int count = rng.integer(spec.settlements_min, spec.settlements_max);
  const double built_fraction = rng.uniform(0.01, 0.03);
  double weight_sum = 0.0;
  for (int k = 0; k < count; ++k) weight_sum += 1.0 / (k + 1);
  std::vector<Settlement> towns;
  for (int k = 0; k < count; ++k) {
    Settlement s{};
    const double area = built_fraction * static_cast<double>(pixels) * (1.0 / (k + 1)) / weight_sum;
    s.radius = std::sqrt(area / std::numbers::pi);
    double best = 1e300;
    for (int c = 0; c < 24; ++c) {
      const double cy = rng.uniform(0.0, n), cx = rng.uniform(0.0, n);
      const std::size_t i = static_cast<std::size_t>(cy) * n + static_cast<std::size_t>(cx);
      if (slope[i] < best) {
        best = slope[i];
        s.cy = cy;
        s.cx = cx;
      }
    }
    for (int h = 0; h < 3; ++h) {
      s.amp[h] = rng.uniform(0.0, 0.12);
      s.phase[h] = rng.uniform(0.0, 2.0 * std::numbers::pi);
    }
    s.peak = std::min(1.0, (0.35 + 0.65 * std::sqrt(1.0 / (k + 1))) * rng.uniform(0.85, 1.0));
    towns.push_back(s);
  }

  // Built surface and night lights.
  const auto texture = value_noise(n, 32, 2, 0.5, rng);
  b.isp = Raster(1, n, n);
  b.hr_ntl = Raster(1, n, n);
  std::vector<double> light(pixels, 0.0);
  for (const auto& s : towns) {
    const double reach = s.radius * 1.5;
    const int y0 = std::max(0, static_cast<int>(s.cy - reach)), y1 = std::min(n - 1, static_cast<int>(s.cy + reach));
    const int x0 = std::max(0, static_cast<int>(s.cx - reach)), x1 = std::min(n - 1, static_cast<int>(s.cx + reach));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double dy = y + 0.5 - s.cy, dx = x + 0.5 - s.cx;
        const double rel = std::hypot(dy, dx) / (s.radius * s.boundary(std::atan2(dy, dx)));
        if (rel >= 1.0) continue;
        const std::size_t i = static_cast<std::size_t>(y) * n + x;
        b.isp.data[i] = 1.0f;
        const double v = s.peak * std::exp(-2.0 * rel * rel) * (0.85 + 0.3 * texture[i]);
        light[i] = std::max(light[i], v);
      }
    }
  }
  for (std::size_t i = 0; i < pixels; ++i) b.hr_ntl.data[i] = quantize(light[i], kHrLevels);

  // Daytime multispectral: water / vegetation / bare mixture, built-up
  // surfaces from the ISP mask, Lambertian hill shading.
  const auto moisture = value_noise(n, 6, 3, 0.5, rng);
  const double water_level = rng.uniform(0.04, 0.14);
  const double sun_zenith = std::numbers::pi / 4, sun_azimuth = 7.0 * std::numbers::pi / 4;
  b.dmo = Raster(kDmoBands, n, n);
  for (std::size_t i = 0; i < pixels; ++i) {
    const double elev = relief_noise[i];
    double w_water = elev < water_level ? 1.0 : 0.0;
    double w_veg = std::clamp(1.1 - 1.3 * elev + 0.4 * (moisture[i] - 0.5), 0.0, 1.0) * (1.0 - w_water);
    double w_bare = (1.0 - w_water) - w_veg;
    double w_urban = 0.0;
    if (b.isp.data[i] > 0.0f) {
      w_urban = 0.85;
      w_water *= 0.15;
      w_veg *= 0.15;
      w_bare *= 0.15;
    }
    const double slope_angle = std::atan(slope[i]);
    const double aspect = std::atan2(grad_y[i], -grad_x[i]);
    const double shade = std::max(0.0, std::cos(sun_zenith) * std::cos(slope_angle) +
                                           std::sin(sun_zenith) * std::sin(slope_angle) *
                                               std::cos(sun_azimuth - aspect));
    const double lit = 0.6 + 0.4 * shade / std::cos(sun_zenith);
    for (int band = 0; band < kDmoBands; ++band) {
      const double refl =
          w_water * kWater[band] + w_veg * kVegetation[band] + w_bare * kBare[band] + w_urban * kUrban[band];
      const double v = refl * lit / kReflectanceStretch + 0.004 * rng.normal();
      b.dmo.data[band * pixels + i] = quantize(v, kDmoLevels);
    }
  }

  b.lr_ntl = degrade(b.hr_ntl, spec);
  return b;
}

}  // namespace dl
