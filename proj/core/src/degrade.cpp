#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "deeplight/dataset.hpp"
#include "deeplight/error.hpp"
#include "random.hpp"

namespace dl {
namespace {

using detail::Rng;

// Half-sample symmetric index: ... 1 0 | 0 1 ... n-1 | n-1 n-2 ...
int reflect(int i, int n) {
  while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - i - 1;
  return i;
}

// Separable Gaussian with a normalised kernel and symmetric padding, so both
// constants and total mass are preserved.
std::vector<double> gaussian_bloom(const std::vector<double>& img, int n, double sigma) {
  if (sigma <= 0.0) return img;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (int t = -radius; t <= radius; ++t) total += k[t + radius] = std::exp(-0.5 * t * t / (sigma * sigma));
  for (auto& v : k) v /= total;
  std::vector<double> tmp(img.size()), out(img.size());
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      double acc = 0.0;
      for (int t = -radius; t <= radius; ++t) acc += k[t + radius] * img[static_cast<std::size_t>(y) * n + reflect(x + t, n)];
      tmp[static_cast<std::size_t>(y) * n + x] = acc;
    }
  }
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      double acc = 0.0;
      for (int t = -radius; t <= radius; ++t) acc += k[t + radius] * tmp[static_cast<std::size_t>(reflect(y + t, n)) * n + x];
      out[static_cast<std::size_t>(y) * n + x] = acc;
    }
  }
  return out;
}

// Per-axis displacement: a global translation (60 % of the budget) plus a
// smooth field interpolated from a 4 x 4 control lattice (40 %).
std::vector<double> smooth_warp(const std::vector<double>& img, int n, double max_px, Rng& rng) {
  constexpr int kLattice = 4;
  std::array<double, 2> shift{};
  for (auto& s : shift) s = 0.6 * max_px * rng.uniform(-1.0, 1.0);
  std::array<std::array<double, (kLattice + 1) * (kLattice + 1)>, 2> lattice{};
  for (auto& axis : lattice) {
    for (auto& v : axis) v = 0.4 * max_px * rng.uniform(-1.0, 1.0);
  }
  auto field = [&](int axis, double y, double x) {
    const double fy = y / n * kLattice, fx = x / n * kLattice;
    const int y0 = std::min(static_cast<int>(fy), kLattice - 1), x0 = std::min(static_cast<int>(fx), kLattice - 1);
    const double ty = fy - y0, tx = fx - x0;
    const double sy = ty * ty * (3 - 2 * ty), sx = tx * tx * (3 - 2 * tx);
    const auto& l = lattice[axis];
    const double top = l[y0 * (kLattice + 1) + x0] * (1 - sx) + l[y0 * (kLattice + 1) + x0 + 1] * sx;
    const double bot = l[(y0 + 1) * (kLattice + 1) + x0] * (1 - sx) + l[(y0 + 1) * (kLattice + 1) + x0 + 1] * sx;
    return shift[axis] + top * (1 - sy) + bot * sy;
  };
  auto pixel = [&](int y, int x) {
    return (y >= 0 && y < n && x >= 0 && x < n) ? img[static_cast<std::size_t>(y) * n + x] : 0.0;
  };
  std::vector<double> out(img.size());
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const double sy = y + field(0, y + 0.5, x + 0.5);
      const double sx = x + field(1, y + 0.5, x + 0.5);
      const double fy = std::floor(sy), fx = std::floor(sx);
      const int iy = static_cast<int>(fy), ix = static_cast<int>(fx);
      const double ly = sy - fy, lx = sx - fx;
      out[static_cast<std::size_t>(y) * n + x] =
          (1 - ly) * ((1 - lx) * pixel(iy, ix) + lx * pixel(iy, ix + 1)) +
          ly * ((1 - lx) * pixel(iy + 1, ix) + lx * pixel(iy + 1, ix + 1));
    }
  }
  return out;
}

}  // namespace

Raster degrade(const Raster& hr_ntl, const SceneSpec& spec) {
  if (hr_ntl.bands != 1 || hr_ntl.height != hr_ntl.width) {
    throw DimensionError("degrade: expected a square single-band raster");
  }
  const int n = hr_ntl.height, r = spec.scale_r;
  if (r < 1 || n % r != 0) {
    throw DimensionError("degrade: side " + std::to_string(n) + " not divisible by scale " + std::to_string(r));
  }
  Rng rng(derive_seed(spec.seed, 1));

  std::vector<double> img(hr_ntl.data.begin(), hr_ntl.data.end());
  img = gaussian_bloom(img, n, spec.bloom_sigma_px);
  for (auto& v : img) v = std::min(v, spec.saturation_level) / spec.saturation_level;
  if (spec.warp_max_px > 0.0) img = smooth_warp(img, n, spec.warp_max_px, rng);

  const int m = n / r;
  Raster lr(1, m, m);
  for (int y = 0; y < m; ++y) {
    for (int x = 0; x < m; ++x) {
      double acc = 0.0;
      for (int dy = 0; dy < r; ++dy) {
        for (int dx = 0; dx < r; ++dx) acc += img[static_cast<std::size_t>(y * r + dy) * n + (x * r + dx)];
      }
      double v = acc / (r * r);
      if (spec.noise_sigma > 0.0) v += spec.noise_sigma * rng.normal();
      v = std::round(v * kLrLevels) / kLrLevels;
      lr.at(0, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return lr;
}

}  // namespace dl
