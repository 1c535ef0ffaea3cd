#include <algorithm>
#include <cmath>

#include "deeplight/error.hpp"
#include "deeplight/metrics.hpp"

namespace dl {
namespace {

constexpr int kBlock = 16;
constexpr double kActivityThreshold = 0.1;
constexpr double kImpairedThreshold = 0.1;
constexpr int kSegment = 6;
constexpr int kSegments = kBlock - kSegment + 1;  // 11 per edge
constexpr double kStabilizer = 1.0 / 255.0;       // C = 1 on a [0, 255] scale
constexpr double kGaussSigma = 7.0 / 6.0;
constexpr int kGaussSize = 7;
constexpr double kScoreOffset = 1.0;

// 'same' separable Gaussian with replicate padding.
std::vector<double> gauss_replicate(const std::vector<double>& img, int h, int w) {
  constexpr int r = kGaussSize / 2;
  double k[kGaussSize];
  double total = 0.0;
  for (int t = -r; t <= r; ++t) total += k[t + r] = std::exp(-t * t / (2.0 * kGaussSigma * kGaussSigma));
  for (double& v : k) v /= total;
  std::vector<double> tmp(img.size()), out(img.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int t = -r; t <= r; ++t) acc += k[t + r] * img[static_cast<std::size_t>(y) * w + std::clamp(x + t, 0, w - 1)];
      tmp[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int t = -r; t <= r; ++t) acc += k[t + r] * tmp[static_cast<std::size_t>(std::clamp(y + t, 0, h - 1)) * w + x];
      out[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
  return out;
}

// Sample standard deviation (N - 1), two-pass.
double stddev(const double* v, int n) {
  double m = 0.0;
  for (int i = 0; i < n; ++i) m += v[i];
  m /= n;
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += (v[i] - m) * (v[i] - m);
  return std::sqrt(s / (n - 1));
}

// Any 6-sample segment along any block edge with std below threshold.
bool noticeable_distortion(const double* blk) {
  double edges[4][kBlock];
  for (int t = 0; t < kBlock; ++t) {
    edges[0][t] = blk[t];                              // top
    edges[1][t] = blk[t * kBlock + kBlock - 1];        // right
    edges[2][t] = blk[(kBlock - 1) * kBlock + t];      // bottom
    edges[3][t] = blk[t * kBlock];                     // left
  }
  for (int s = 0; s < kSegments; ++s) {
    for (const auto& edge : edges) {
      if (stddev(edge + s, kSegment) < kImpairedThreshold) return true;
    }
  }
  return false;
}

// Centre (columns 8 and 9, 1-based) against surround std ratio; NaN -> 0.
bool noisy(const double* blk, double block_sigma) {
  constexpr int c1 = kBlock / 2 - 1, c2 = kBlock / 2;
  double centre[2 * kBlock], surround[kBlock * (kBlock - 2)];
  int nc = 0, ns = 0;
  // Column-major order, as the reference flattens columns.
  for (int x = 0; x < kBlock; ++x) {
    for (int y = 0; y < kBlock; ++y) {
      const double v = blk[y * kBlock + x];
      if (x == c1 || x == c2) {
        centre[nc++] = v;
      } else {
        surround[ns++] = v;
      }
    }
  }
  double ratio = stddev(centre, nc) / stddev(surround, ns);
  if (std::isnan(ratio)) ratio = 0.0;
  const double beta = std::abs(block_sigma - ratio) / std::max(block_sigma, ratio);
  return block_sigma > 2.0 * beta;
}

}  // namespace

const std::vector<std::string>& piqe_divergences() {
  static const std::vector<std::string> notes = {
      "input is a float image in [0,1]; the stabilizer C=1/255 matches C=1 on the reference 8-bit scale but no "
      "8-bit quantization is applied",
      "per-block terms (1 - block variance) and block variance are each clamped to [0,1] so a block contributes "
      "at most 1",
  };
  return notes;
}

PiqeResult piqe(const Raster& image) {
  if (image.bands != 1) throw DimensionError("piqe: expected a single-band raster");
  if (image.height < 32 || image.width < 32) throw DimensionError("piqe: image side must be >= 32");
  // Replicate-pad to a multiple of the block size (bottom and right).
  const int h = (image.height + kBlock - 1) / kBlock * kBlock;
  const int w = (image.width + kBlock - 1) / kBlock * kBlock;
  std::vector<double> img(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      img[static_cast<std::size_t>(y) * w + x] =
          image.at(0, std::min(y, image.height - 1), std::min(x, image.width - 1));
    }
  }
  std::vector<double> sq(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) sq[i] = img[i] * img[i];
  const auto mu = gauss_replicate(img, h, w);
  const auto mu2 = gauss_replicate(sq, h, w);
  std::vector<double> mscn(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double sigma = std::sqrt(std::abs(mu2[i] - mu[i] * mu[i]));
    mscn[i] = (img[i] - mu[i]) / (sigma + kStabilizer);
  }

  PiqeResult r;
  double distortion = 0.0;
  double blk[kBlock * kBlock];
  for (int by = 0; by < h; by += kBlock) {
    for (int bx = 0; bx < w; bx += kBlock) {
      ++r.total_blocks;
      for (int y = 0; y < kBlock; ++y) {
        for (int x = 0; x < kBlock; ++x) blk[y * kBlock + x] = mscn[static_cast<std::size_t>(by + y) * w + bx + x];
      }
      const double sigma = stddev(blk, kBlock * kBlock);
      const double var = sigma * sigma;
      if (!(var > kActivityThreshold)) continue;
      ++r.active_blocks;
      const bool artifact = noticeable_distortion(blk);
      const bool noise = noisy(blk, sigma);
      r.artifact_blocks += artifact;
      r.noise_blocks += noise;
      const double w_var = std::clamp(var, 0.0, 1.0);
      distortion += (artifact ? 1.0 - w_var : 0.0) + (noise ? w_var : 0.0);
    }
  }
  if (r.active_blocks == 0) {
    r.degenerate = true;
    r.score = 100.0 * kScoreOffset / kScoreOffset;
    return r;
  }
  r.score = 100.0 * (distortion + kScoreOffset) / (r.active_blocks + kScoreOffset);
  return r;
}

}  // namespace dl
