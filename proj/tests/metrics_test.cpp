#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "deeplight/dataset.hpp"
#include "deeplight/error.hpp"
#include "deeplight/metrics.hpp"
#include "json.hpp"

namespace dl {
namespace {

using nlohmann::json;

struct Pair {
  Raster pred, target;
};

Pair random_pair(std::uint64_t seed, int n = 32) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.1);
  Pair p{Raster(1, n, n), Raster(1, n, n)};
  for (std::size_t i = 0; i < p.target.data.size(); ++i) {
    const double t = u(rng);
    p.target.data[i] = static_cast<float>(t);
    p.pred.data[i] = static_cast<float>(std::clamp(t + noise(rng), 0.0, 1.0));
  }
  return p;
}

double px(const Raster& r, int y, int x) { return static_cast<double>(r.at(0, y, x)); }

// --- brute-force oracles, written from the formulas ---

double psnr_ref(const Raster& a, const Raster& b) {
  long double se = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const long double d = static_cast<long double>(a.data[i]) - b.data[i];
    se += d * d;
  }
  return static_cast<double>(10.0L * std::log10(1.0L / (se / a.data.size())));
}

double ssim_ref(const Raster& a, const Raster& b) {
  double w[11][11], total = 0;
  for (int i = 0; i < 11; ++i) {
    for (int j = 0; j < 11; ++j) total += w[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / 4.5);
  }
  const double c1 = 1e-4, c2 = 9e-4;
  double acc = 0;
  int count = 0;
  for (int y0 = 0; y0 + 11 <= a.height; ++y0) {
    for (int x0 = 0; x0 + 11 <= a.width; ++x0) {
      double mx = 0, my = 0;
      for (int i = 0; i < 11; ++i) {
        for (int j = 0; j < 11; ++j) {
          mx += w[i][j] / total * px(a, y0 + i, x0 + j);
          my += w[i][j] / total * px(b, y0 + i, x0 + j);
        }
      }
      double vx = 0, vy = 0, cxy = 0;
      for (int i = 0; i < 11; ++i) {
        for (int j = 0; j < 11; ++j) {
          const double dx = px(a, y0 + i, x0 + j) - mx, dy = px(b, y0 + i, x0 + j) - my;
          vx += w[i][j] / total * dx * dx;
          vy += w[i][j] / total * dy * dy;
          cxy += w[i][j] / total * dx * dy;
        }
      }
      acc += (2 * mx * my + c1) * (2 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  }
  return acc / count;
}

double sam_ref(const Raster& a, const Raster& b) {
  long double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    ab += static_cast<long double>(a.data[i]) * b.data[i];
    aa += static_cast<long double>(a.data[i]) * a.data[i];
    bb += static_cast<long double>(b.data[i]) * b.data[i];
  }
  return static_cast<double>(std::acos(std::clamp(ab / std::sqrt(aa * bb), -1.0L, 1.0L)));
}

double uiqi_ref(const Raster& a, const Raster& b) {
  double acc = 0;
  int used = 0;
  for (int y0 = 0; y0 + 8 <= a.height; ++y0) {
    for (int x0 = 0; x0 + 8 <= a.width; ++x0) {
      double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
      for (int i = 0; i < 8; ++i) {
        for (int j = 0; j < 8; ++j) {
          const double x = px(a, y0 + i, x0 + j), y = px(b, y0 + i, x0 + j);
          sx += x;
          sy += y;
          sxx += x * x;
          syy += y * y;
          sxy += x * y;
        }
      }
      const double n = 64, mx = sx / n, my = sy / n;
      const double vx = (sxx - n * mx * mx) / (n - 1), vy = (syy - n * my * my) / (n - 1);
      const double cxy = (sxy - n * mx * my) / (n - 1);
      const double den = (vx + vy) * (mx * mx + my * my);
      if (den == 0) continue;
      acc += 4 * cxy * mx * my / den;
      ++used;
    }
  }
  return acc / used;
}

double cc_ref(const Raster& a, const Raster& b) {
  const std::size_t n = a.data.size();
  long double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const long double x = a.data[i], y = b.data[i];
    sx += x;
    sy += y;
    sxx += x * x;
    syy += y * y;
    sxy += x * y;
  }
  const long double cov = sxy - sx * sy / n, vx = sxx - sx * sx / n, vy = syy - sy * sy / n;
  return static_cast<double>(cov / std::sqrt(vx * vy));
}

// PIQE on an image whose sides are multiples of 16: 7x7 Gaussian MSCN with
// replicate borders, sample-variance activity test, edge-segment and
// centre/surround noise tests, C0 = 1.
double piqe_ref(const Raster& img, bool* degenerate = nullptr) {
  const int h = img.height, w = img.width;
  double g[7][7], total = 0;
  const double s2 = 2 * (7.0 / 6.0) * (7.0 / 6.0);
  for (int i = 0; i < 7; ++i) {
    for (int j = 0; j < 7; ++j) total += g[i][j] = std::exp(-((i - 3) * (i - 3) + (j - 3) * (j - 3)) / s2);
  }
  std::vector<double> m(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double mu = 0, mu2 = 0;
      for (int i = 0; i < 7; ++i) {
        for (int j = 0; j < 7; ++j) {
          const double v = px(img, std::clamp(y + i - 3, 0, h - 1), std::clamp(x + j - 3, 0, w - 1));
          mu += g[i][j] / total * v;
          mu2 += g[i][j] / total * v * v;
        }
      }
      m[static_cast<std::size_t>(y) * w + x] = (px(img, y, x) - mu) / (std::sqrt(std::abs(mu2 - mu * mu)) + 1.0 / 255);
    }
  }
  auto sample_std = [](const std::vector<double>& v) {
    double mean = 0;
    for (double e : v) mean += e;
    mean /= v.size();
    double s = 0;
    for (double e : v) s += (e - mean) * (e - mean);
    return std::sqrt(s / (v.size() - 1));
  };
  double dist = 0;
  int active = 0;
  for (int by = 0; by < h; by += 16) {
    for (int bx = 0; bx < w; bx += 16) {
      auto at = [&](int y, int x) { return m[static_cast<std::size_t>(by + y) * w + bx + x]; };
      std::vector<double> all;
      for (int y = 0; y < 16; ++y) {
        for (int x = 0; x < 16; ++x) all.push_back(at(y, x));
      }
      const double sigma = sample_std(all), var = sigma * sigma;
      if (var <= 0.1) continue;
      ++active;
      bool artifact = false;
      for (int s = 0; s + 6 <= 16 && !artifact; ++s) {
        std::vector<double> top, bottom, left, right;
        for (int t = s; t < s + 6; ++t) {
          top.push_back(at(0, t));
          bottom.push_back(at(15, t));
          left.push_back(at(t, 0));
          right.push_back(at(t, 15));
        }
        for (const auto* seg : {&top, &bottom, &left, &right}) artifact = artifact || sample_std(*seg) < 0.1;
      }
      std::vector<double> centre, surround;
      for (int x = 0; x < 16; ++x) {
        for (int y = 0; y < 16; ++y) (x == 7 || x == 8 ? centre : surround).push_back(at(y, x));
      }
      double ratio = sample_std(centre) / sample_std(surround);
      if (std::isnan(ratio)) ratio = 0;
      const double beta = std::abs(sigma - ratio) / std::max(sigma, ratio);
      const bool noise = sigma > 2 * beta;
      const double wv = std::min(var, 1.0);
      if (artifact) dist += 1 - wv;
      if (noise) dist += wv;
    }
  }
  if (degenerate) *degenerate = active == 0;
  return 100.0 * (dist + 1) / (active + 1);
}

// --- oracle agreement on random pairs ---

TEST(MetricOracles, TenRandomPairs) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Pair p = random_pair(seed);
    SCOPED_TRACE("seed " + std::to_string(seed));
    EXPECT_NEAR(psnr(p.pred, p.target).value, psnr_ref(p.pred, p.target), 1e-9);
    EXPECT_NEAR(ssim(p.pred, p.target).value, ssim_ref(p.pred, p.target), 1e-6);
    EXPECT_NEAR(sam(p.pred, p.target).value, sam_ref(p.pred, p.target), 1e-9);
    EXPECT_NEAR(uiqi(p.pred, p.target).value, uiqi_ref(p.pred, p.target), 1e-9);
    EXPECT_NEAR(cc(p.pred, p.target).value, cc_ref(p.pred, p.target), 1e-12);
    bool degenerate = true;
    const double ref = piqe_ref(p.pred, &degenerate);
    const PiqeResult q = piqe(p.pred);
    EXPECT_EQ(q.degenerate, degenerate);
    EXPECT_NEAR(q.score, ref, 1e-6);
  }
}

TEST(MetricOracles, Uiqi16x16) {
  for (std::uint64_t seed = 20; seed < 25; ++seed) {
    const Pair p = random_pair(seed, 16);
    EXPECT_NEAR(uiqi(p.pred, p.target).value, uiqi_ref(p.pred, p.target), 1e-9);
  }
}

TEST(MetricOracles, PiqeOnStructuredImages) {
  // Smooth field with a few sharp steps, so both tests fire on some blocks.
  Raster r(1, 64, 48);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0, 0.02);
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 48; ++x) {
      const double v = 0.3 + 0.2 * std::sin(y / 5.0) + (x > 20 ? 0.3 : 0.0) + (y % 16 < 3 ? 0.1 : 0.0) + n(rng);
      r.at(0, y, x) = static_cast<float>(v);
    }
  }
  const PiqeResult q = piqe(r);
  EXPECT_NEAR(q.score, piqe_ref(r), 1e-6);
  EXPECT_GT(q.active_blocks, 0);
}

// --- PSNR ---

TEST(Psnr, ConstantOffsetIsTwentyDb) {
  Raster t(1, 16, 16, 0.25f), p(1, 16, 16, 0.35f);
  EXPECT_NEAR(psnr(p, t).value, 20.0, 1e-5);
  EXPECT_FALSE(psnr(p, t).degenerate);
}

TEST(Psnr, ExactMatchIsFlaggedInfinity) {
  const Pair p = random_pair(1);
  const MetricValue v = psnr(p.target, p.target);
  EXPECT_TRUE(v.degenerate);
  EXPECT_TRUE(std::isinf(v.value));
}

TEST(Psnr, DecreasesWithNoise) {
  const Pair base = random_pair(2, 64);
  double last = std::numeric_limits<double>::infinity();
  for (double sigma : {0.01, 0.05, 0.1}) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n(0, sigma);
    Raster noisy = base.target;
    for (auto& v : noisy.data) v = static_cast<float>(v + n(rng));
    const double value = psnr(noisy, base.target).value;
    EXPECT_LT(value, last);
    last = value;
  }
}

TEST(Psnr, ShapeMismatchAndBadPeak) {
  EXPECT_THROW(psnr(Raster(1, 4, 4), Raster(1, 4, 5)), DimensionError);
  EXPECT_THROW(psnr(Raster(1, 4, 4), Raster(1, 4, 4), 0.0), ConfigError);
}

// --- SSIM ---

TEST(Ssim, IdentityIsOne) {
  const Pair p = random_pair(3);
  EXPECT_NEAR(ssim(p.target, p.target).value, 1.0, 1e-12);
}

TEST(Ssim, ConstantsClosedForm) {
  for (const auto [a, b] : {std::pair{0.2, 0.7}, std::pair{0.5, 0.5}, std::pair{0.0, 0.9}}) {
    const Raster x(1, 16, 16, static_cast<float>(a)), y(1, 16, 16, static_cast<float>(b));
    const double fa = static_cast<float>(a), fb = static_cast<float>(b);
    EXPECT_NEAR(ssim(x, y).value, (2 * fa * fb + 1e-4) / (fa * fa + fb * fb + 1e-4), 1e-9);
  }
}

TEST(Ssim, TooSmallIsError) { EXPECT_THROW(ssim(Raster(1, 10, 10), Raster(1, 10, 10)), DimensionError); }

// --- SAM ---

TEST(Sam, IdentityAndScaling) {
  const Pair p = random_pair(4);
  EXPECT_NEAR(sam(p.target, p.target).value, 0.0, 1e-7);
  Raster twice = p.target;
  for (auto& v : twice.data) v *= 2;
  EXPECT_NEAR(sam(twice, p.target).value, 0.0, 1e-7);
  Raster scaled = p.pred;
  for (auto& v : scaled.data) v *= 0.37f;
  EXPECT_NEAR(sam(scaled, p.target).value, sam(p.pred, p.target).value, 1e-7);
  EXPECT_NEAR(sam(p.pred, twice).value, sam(p.pred, p.target).value, 1e-7);
}

TEST(Sam, DisjointSupportIsRightAngle) {
  Raster a(1, 8, 8), b(1, 8, 8);
  for (int i = 0; i < 64; ++i) (i % 2 ? a : b).data[i] = 1.0f;
  EXPECT_NEAR(sam(a, b).value, std::numbers::pi / 2, 1e-12);
}

TEST(Sam, AllZeroIsDegenerate) {
  EXPECT_TRUE(sam(Raster(1, 8, 8), Raster(1, 8, 8, 0.5f)).degenerate);
  EXPECT_TRUE(sam(Raster(1, 8, 8, 0.5f), Raster(1, 8, 8)).degenerate);
}

// --- UIQI ---

TEST(Uiqi, IdentityIsOne) {
  const Pair p = random_pair(5);
  const UiqiResult r = uiqi(p.target, p.target);
  EXPECT_NEAR(r.value, 1.0, 1e-12);
  EXPECT_EQ(r.windows, 25u * 25u);
  EXPECT_EQ(r.skipped, 0u);
}

TEST(Uiqi, ReflectionAboutMeanIsMinusOne) {
  // One 8x8 window: reflecting about the mean keeps the mean and flips the
  // covariance sign, so Q = -1.
  const Pair p = random_pair(6, 8);
  double mean = 0;
  for (float v : p.target.data) mean += v;
  mean /= 64;
  Raster reflected = p.target;
  for (auto& v : reflected.data) v = static_cast<float>(2 * mean - v);
  EXPECT_NEAR(uiqi(reflected, p.target).value, -1.0, 1e-6);
  EXPECT_NEAR(uiqi(p.pred, p.target).value, -uiqi(p.pred, reflected).value, 1e-6);
}

TEST(Uiqi, ZeroDenominatorWindowsSkipped) {
  Raster a(1, 16, 16), b(1, 16, 16);
  for (int y = 8; y < 16; ++y) {
    for (int x = 8; x < 16; ++x) a.at(0, y, x) = b.at(0, y, x) = static_cast<float>((x * 7 + y * 3) % 5) / 5.0f;
  }
  const UiqiResult r = uiqi(a, b);
  EXPECT_GT(r.skipped, 0u);
  EXPECT_LT(r.skipped, r.windows);
  EXPECT_NEAR(r.value, uiqi_ref(a, b), 1e-9);
  EXPECT_TRUE(uiqi(Raster(1, 8, 8), Raster(1, 8, 8)).degenerate);
}

// --- CC ---

TEST(Cc, AffineAndSign) {
  const Pair p = random_pair(7);
  Raster affine = p.target, neg = p.target;
  for (auto& v : affine.data) v = 3 * v + 5;
  for (auto& v : neg.data) v = -v;
  EXPECT_NEAR(cc(affine, p.target).value, 1.0, 1e-6);
  EXPECT_NEAR(cc(neg, p.target).value, -1.0, 1e-12);
  EXPECT_NEAR(cc(p.target, p.target).value, 1.0, 1e-12);
  EXPECT_TRUE(cc(Raster(1, 32, 32, 0.3f), p.target).degenerate);
}

TEST(Symmetry, SsimUiqiCc) {
  for (std::uint64_t seed = 30; seed < 33; ++seed) {
    const Pair p = random_pair(seed);
    EXPECT_NEAR(ssim(p.pred, p.target).value, ssim(p.target, p.pred).value, 1e-12);
    EXPECT_NEAR(uiqi(p.pred, p.target).value, uiqi(p.target, p.pred).value, 1e-12);
    EXPECT_NEAR(cc(p.pred, p.target).value, cc(p.target, p.pred).value, 1e-12);
  }
}

// --- PIQE ---

TEST(Piqe, ConstantImageIsDegenerate) {
  const PiqeResult q = piqe(Raster(1, 32, 32, 0.4f));
  EXPECT_TRUE(q.degenerate);
  EXPECT_EQ(q.active_blocks, 0);
  EXPECT_EQ(q.score, 100.0);
}

TEST(Piqe, NoiseScoresWorseThanSmoothGradient) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0, 1);
  std::normal_distribution<double> grain(0, 0.01);
  Raster noise(1, 64, 64), smooth(1, 64, 64), ideal(1, 64, 64);
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 64; ++x) {
      noise.at(0, y, x) = static_cast<float>(u(rng));
      ideal.at(0, y, x) = static_cast<float>(0.1 + 0.8 * (x + y) / 126.0);
      smooth.at(0, y, x) = static_cast<float>(ideal.at(0, y, x) + grain(rng));
    }
  }
  const PiqeResult qn = piqe(noise), qs = piqe(smooth);
  ASSERT_FALSE(qn.degenerate);
  ASSERT_FALSE(qs.degenerate);
  EXPECT_GT(qn.score, qs.score);
  // A grain-free ramp has a flat MSCN field: no active block at all.
  EXPECT_TRUE(piqe(ideal).degenerate);
}

TEST(Piqe, ScoreWithinBounds) {
  for (std::uint64_t seed = 40; seed < 46; ++seed) {
    const PiqeResult q = piqe(random_pair(seed, 48).pred);
    ASSERT_FALSE(q.degenerate);
    EXPECT_GE(q.score, 0.0);
    EXPECT_LE(q.score, 100.0);
  }
  const PiqeResult dark = piqe(generate_scene(SceneSpec{}).hr_ntl);
  EXPECT_GE(dark.score, 0.0);
  EXPECT_LE(dark.score, 100.0);
}

TEST(Piqe, BrightnessOffsetInvariant) {
  for (std::uint64_t seed = 50; seed < 53; ++seed) {
    const Raster base = random_pair(seed, 32).pred;
    Raster shifted = base;
    for (auto& v : shifted.data) v += 0.3f;
    EXPECT_NEAR(piqe(shifted).score, piqe(base).score, 1e-6);
  }
}

TEST(Piqe, RejectsSmallOrMultiband) {
  EXPECT_THROW(piqe(Raster(1, 31, 40)), DimensionError);
  EXPECT_THROW(piqe(Raster(2, 32, 32)), DimensionError);
}

// --- bundle evaluation and aggregation ---

TEST(EvaluateBundle, IdentityHitsOptima) {
  const ModalityBundle b = generate_scene(SceneSpec{});
  const MetricsReport m = evaluate_bundle(b.hr_ntl, b);
  EXPECT_TRUE(m.psnr_exact);
  EXPECT_NEAR(m.ssim, 1.0, 1e-12);
  EXPECT_NEAR(m.sam_rad, 0.0, 1e-7);
  EXPECT_NEAR(m.uiqi, 1.0, 1e-12);
  EXPECT_NEAR(m.cc, 1.0, 1e-12);
  EXPECT_EQ(m.n_pixels, 256 * 256);
}

TEST(EvaluateBundle, BicubicWorseThanIdentity) {
  for (std::uint64_t seed = 60; seed < 63; ++seed) {
    SceneSpec s;
    s.seed = seed;
    const ModalityBundle b = generate_scene(s);
    const MetricsReport bic = evaluate_bundle(bicubic_upsample(b.lr_ntl, s.scale_r), b);
    const MetricsReport id = evaluate_bundle(b.hr_ntl, b);
    EXPECT_FALSE(bic.psnr_exact);
    EXPECT_LT(bic.psnr_db, id.psnr_db);
    EXPECT_LT(bic.ssim, id.ssim);
  }
}

TEST(Aggregate, EqualsMeanOfTilesWithDegenerateExcluded) {
  std::vector<MetricsReport> tiles;
  for (std::uint64_t seed = 70; seed < 74; ++seed) {
    const Pair p = random_pair(seed);
    tiles.push_back(evaluate_prediction(p.pred, p.target));
  }
  const Pair same = random_pair(80);
  tiles.push_back(evaluate_prediction(same.target, same.target));  // exact PSNR
  tiles.push_back(evaluate_prediction(Raster(1, 32, 32), Raster(1, 32, 32)));  // degenerate nearly everywhere
  const AggregateReport a = aggregate(tiles);
  auto mean = [&](auto field, auto flag) {
    double s = 0;
    int n = 0;
    for (const auto& t : tiles) {
      if (t.*flag) continue;
      s += t.*field;
      ++n;
    }
    return s / n;
  };
  EXPECT_EQ(a.tiles, 6u);
  EXPECT_NEAR(a.psnr, mean(&MetricsReport::psnr_db, &MetricsReport::psnr_exact), 1e-12);
  EXPECT_NEAR(a.ssim, mean(&MetricsReport::ssim, &MetricsReport::ssim_degenerate), 1e-12);
  EXPECT_NEAR(a.sam, mean(&MetricsReport::sam_rad, &MetricsReport::sam_degenerate), 1e-12);
  EXPECT_NEAR(a.uiqi, mean(&MetricsReport::uiqi, &MetricsReport::uiqi_degenerate), 1e-12);
  EXPECT_NEAR(a.cc, mean(&MetricsReport::cc, &MetricsReport::cc_degenerate), 1e-12);
  EXPECT_NEAR(a.piqe, mean(&MetricsReport::piqe, &MetricsReport::piqe_degenerate), 1e-12);
  EXPECT_EQ(a.psnr_degenerate, 2u);
  EXPECT_EQ(a.sam_degenerate, 1u);
  EXPECT_EQ(a.cc_degenerate, 1u);
  EXPECT_EQ(a.uiqi_degenerate, 1u);
  EXPECT_EQ(a.piqe_degenerate, 1u);
}

TEST(Report, JsonShapeAndNulls) {
  std::vector<TileEntry> tiles;
  const Pair p = random_pair(90);
  tiles.push_back({"a", evaluate_prediction(p.pred, p.target)});
  tiles.push_back({"b", evaluate_prediction(p.target, p.target)});
  const json doc = json::parse(report_json(tiles, "unit"));
  ASSERT_EQ(doc["tiles"].size(), 2u);
  EXPECT_TRUE(doc["tiles"][1]["psnr"].is_null());
  EXPECT_TRUE(doc["tiles"][1]["flags"]["psnr_exact_match"].get<bool>());
  for (const char* k : {"psnr", "ssim", "sam", "uiqi", "cc", "piqe", "degenerate_counts"}) {
    EXPECT_TRUE(doc["aggregate"].contains(k)) << k;
  }
  EXPECT_EQ(doc["aggregate"]["degenerate_counts"]["psnr"].get<int>(), 1);
  EXPECT_NEAR(doc["aggregate"]["psnr"].get<double>(), tiles[0].report.psnr_db, 1e-9);
  EXPECT_EQ(doc["metadata"]["sam_vectorization"].get<std::string>(), "flattened single-band intensity vector");
  EXPECT_FALSE(doc["metadata"]["piqe_divergences"].empty());
  // No contributing tile gives null, not NaN.
  const json none = json::parse(report_json({{"b", tiles[1].report}}));
  EXPECT_TRUE(none["aggregate"]["psnr"].is_null());
}

}  // namespace
}  // namespace dl
