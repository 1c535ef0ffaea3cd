#include "deeplight/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "deeplight/error.hpp"

namespace dl {
namespace {

void check_pair(const Raster& pred, const Raster& target, const char* op) {
  if (pred.bands != 1 || target.bands != 1) throw DimensionError(std::string(op) + ": expected single-band rasters");
  if (pred.height != target.height || pred.width != target.width) {
    throw DimensionError(std::string(op) + ": size mismatch " + std::to_string(pred.height) + "x" +
                         std::to_string(pred.width) + " vs " + std::to_string(target.height) + "x" +
                         std::to_string(target.width));
  }
}

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;
constexpr int kUiqiWindow = 8;

// Valid-mode separable filtering with a normalised 1-D kernel.
std::vector<double> filter_valid(const std::vector<double>& img, int h, int w, const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const int oh = h - n + 1, ow = w - n + 1;
  std::vector<double> rows(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int t = 0; t < n; ++t) acc += k[t] * img[static_cast<std::size_t>(y) * w + x + t];
      rows[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int t = 0; t < n; ++t) acc += k[t] * rows[static_cast<std::size_t>(y + t) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  }
  return out;
}

std::vector<double> to_double(const Raster& r) { return {r.data.begin(), r.data.end()}; }

}  // namespace

MetricValue psnr(const Raster& pred, const Raster& target, double peak) {
  check_pair(pred, target, "psnr");
  if (!(peak > 0.0)) throw ConfigError("psnr: peak must be positive");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const double d = static_cast<double>(pred.data[i]) - target.data[i];
    acc += d * d;
  }
  const double mse = acc / static_cast<double>(pred.data.size());
  if (mse == 0.0) return {std::numeric_limits<double>::infinity(), true};
  return {10.0 * std::log10(peak * peak / mse), false};
}

MetricValue ssim(const Raster& pred, const Raster& target) {
  check_pair(pred, target, "ssim");
  if (pred.height < kSsimWindow || pred.width < kSsimWindow) {
    throw DimensionError("ssim: image " + std::to_string(pred.height) + "x" + std::to_string(pred.width) +
                         " smaller than the 11x11 window");
  }
  std::vector<double> k(kSsimWindow);
  double total = 0.0;
  for (int t = 0; t < kSsimWindow; ++t) {
    const double d = t - kSsimWindow / 2;
    total += k[t] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
  }
  for (auto& v : k) v /= total;
  const int h = pred.height, w = pred.width;
  const auto x = to_double(pred), y = to_double(target);
  std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mx = filter_valid(x, h, w, k), my = filter_valid(y, h, w, k);
  const auto sxx = filter_valid(xx, h, w, k), syy = filter_valid(yy, h, w, k), sxy = filter_valid(xy, h, w, k);
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double acc = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = sxx[i] - mx[i] * mx[i], vy = syy[i] - my[i] * my[i], cxy = sxy[i] - mx[i] * my[i];
    acc += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cxy + c2)) /
           ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
  }
  return {acc / static_cast<double>(mx.size()), false};
}

MetricValue sam(const Raster& pred, const Raster& target) {
  check_pair(pred, target, "sam");
  double pp = 0.0, tt = 0.0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    pp += static_cast<double>(pred.data[i]) * pred.data[i];
    tt += static_cast<double>(target.data[i]) * target.data[i];
  }
  if (pp == 0.0 || tt == 0.0) return {0.0, true};
  const double np = std::sqrt(pp), nt = std::sqrt(tt);
  // 2 atan2(|a - b|, |a + b|) on unit vectors: the arccos angle without its
  // loss of precision near 0 and pi.
  double diff = 0.0, sum = 0.0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const double a = pred.data[i] / np, b = target.data[i] / nt;
    diff += (a - b) * (a - b);
    sum += (a + b) * (a + b);
  }
  return {2.0 * std::atan2(std::sqrt(diff), std::sqrt(sum)), false};
}

MetricValue cc(const Raster& pred, const Raster& target) {
  check_pair(pred, target, "cc");
  const double n = static_cast<double>(pred.data.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    mx += pred.data[i];
    my += target.data[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const double dx = pred.data[i] - mx, dy = target.data[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return {0.0, true};
  return {sxy / std::sqrt(sxx * syy), false};
}

UiqiResult uiqi(const Raster& pred, const Raster& target) {
  check_pair(pred, target, "uiqi");
  if (pred.height < kUiqiWindow || pred.width < kUiqiWindow) {
    throw DimensionError("uiqi: image smaller than the 8x8 window");
  }
  const int h = pred.height, w = pred.width;
  constexpr int n = kUiqiWindow * kUiqiWindow;
  UiqiResult r;
  double acc = 0.0;
  for (int y0 = 0; y0 + kUiqiWindow <= h; ++y0) {
    for (int x0 = 0; x0 + kUiqiWindow <= w; ++x0) {
      ++r.windows;
      double mx = 0.0, my = 0.0;
      for (int y = y0; y < y0 + kUiqiWindow; ++y) {
        for (int x = x0; x < x0 + kUiqiWindow; ++x) {
          mx += pred.at(0, y, x);
          my += target.at(0, y, x);
        }
      }
      mx /= n;
      my /= n;
      double vx = 0.0, vy = 0.0, cxy = 0.0;
      for (int y = y0; y < y0 + kUiqiWindow; ++y) {
        for (int x = x0; x < x0 + kUiqiWindow; ++x) {
          const double dx = pred.at(0, y, x) - mx, dy = target.at(0, y, x) - my;
          vx += dx * dx;
          vy += dy * dy;
          cxy += dx * dy;
        }
      }
      vx /= n - 1;
      vy /= n - 1;
      cxy /= n - 1;
      const double denom = (vx + vy) * (mx * mx + my * my);
      if (denom == 0.0) {
        ++r.skipped;
        continue;
      }
      acc += 4.0 * cxy * mx * my / denom;
    }
  }
  const std::size_t used = r.windows - r.skipped;
  if (used == 0) {
    r.degenerate = true;
    return r;
  }
  r.value = acc / static_cast<double>(used);
  return r;
}

MetricsReport evaluate_prediction(const Raster& pred, const Raster& target) {
  check_pair(pred, target, "evaluate");
  MetricsReport m;
  const auto p = psnr(pred, target);
  m.psnr_db = p.value;
  m.psnr_exact = p.degenerate;
  const auto s = ssim(pred, target);
  m.ssim = s.value;
  m.ssim_degenerate = s.degenerate;
  const auto a = sam(pred, target);
  m.sam_rad = a.value;
  m.sam_degenerate = a.degenerate;
  const auto u = uiqi(pred, target);
  m.uiqi = u.value;
  m.uiqi_degenerate = u.degenerate;
  m.uiqi_skipped_windows = u.skipped;
  const auto c = cc(pred, target);
  m.cc = c.value;
  m.cc_degenerate = c.degenerate;
  const auto q = piqe(pred);
  m.piqe = q.score;
  m.piqe_degenerate = q.degenerate;
  m.n_pixels = static_cast<std::int64_t>(pred.data.size());
  return m;
}

MetricsReport evaluate_bundle(const Raster& pred_sr, const ModalityBundle& bundle) {
  return evaluate_prediction(pred_sr, bundle.hr_ntl);
}

AggregateReport aggregate(const std::vector<MetricsReport>& tiles) {
  AggregateReport a;
  a.tiles = tiles.size();
  struct Acc {
    double sum = 0.0;
    std::size_t n = 0;
    void add(double v, bool degenerate, std::size_t& excluded) {
      if (degenerate) {
        ++excluded;
        return;
      }
      sum += v;
      ++n;
    }
    double mean() const { return n == 0 ? std::numeric_limits<double>::quiet_NaN() : sum / static_cast<double>(n); }
  } psnr_acc, ssim_acc, sam_acc, uiqi_acc, cc_acc, piqe_acc;
  for (const auto& t : tiles) {
    psnr_acc.add(t.psnr_db, t.psnr_exact, a.psnr_degenerate);
    ssim_acc.add(t.ssim, t.ssim_degenerate, a.ssim_degenerate);
    sam_acc.add(t.sam_rad, t.sam_degenerate, a.sam_degenerate);
    uiqi_acc.add(t.uiqi, t.uiqi_degenerate, a.uiqi_degenerate);
    cc_acc.add(t.cc, t.cc_degenerate, a.cc_degenerate);
    piqe_acc.add(t.piqe, t.piqe_degenerate, a.piqe_degenerate);
  }
  a.psnr = psnr_acc.mean();
  a.ssim = ssim_acc.mean();
  a.sam = sam_acc.mean();
  a.uiqi = uiqi_acc.mean();
  a.cc = cc_acc.mean();
  a.piqe = piqe_acc.mean();
  return a;
}

}  // namespace dl
