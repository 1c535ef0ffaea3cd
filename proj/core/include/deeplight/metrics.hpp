#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "deeplight/dataset.hpp"
#include "deeplight/raster.hpp"

namespace dl {

/// A score plus a flag for the undefined cases (exact match for PSNR, zero
/// norm or variance elsewhere); flagged values are excluded from aggregates.
struct MetricValue {
  double value = 0.0;
  bool degenerate = false;
};

// Full-reference metrics on single-band rasters of equal size.
MetricValue psnr(const Raster& pred, const Raster& target, double peak = 1.0);  // +inf, flagged, on exact match
MetricValue ssim(const Raster& pred, const Raster& target);  // 11x11 Gaussian (1.5), valid windows
MetricValue sam(const Raster& pred, const Raster& target);   // radians over the flattened images
MetricValue cc(const Raster& pred, const Raster& target);    // Pearson

struct UiqiResult {
  double value = 0.0;
  bool degenerate = false;   // every window had a zero denominator
  std::size_t windows = 0;
  std::size_t skipped = 0;
};
UiqiResult uiqi(const Raster& pred, const Raster& target);  // 8x8 windows, stride 1

struct PiqeResult {
  double score = 100.0;
  bool degenerate = false;  // no spatially active block
  int active_blocks = 0;
  int total_blocks = 0;
  int artifact_blocks = 0;
  int noise_blocks = 0;
};
PiqeResult piqe(const Raster& image);

/// Deviations of piqe() from the reference procedure, for report metadata.
const std::vector<std::string>& piqe_divergences();

struct MetricsReport {
  double psnr_db = 0.0, ssim = 0.0, sam_rad = 0.0, uiqi = 0.0, cc = 0.0, piqe = 0.0;
  bool psnr_exact = false, ssim_degenerate = false, sam_degenerate = false, uiqi_degenerate = false,
       cc_degenerate = false, piqe_degenerate = false;
  std::size_t uiqi_skipped_windows = 0;
  std::int64_t n_pixels = 0;
};

MetricsReport evaluate_prediction(const Raster& pred, const Raster& target);
/// All six metrics of pred against bundle.hr_ntl (PIQE on pred).
MetricsReport evaluate_bundle(const Raster& pred_sr, const ModalityBundle& bundle);

struct AggregateReport {
  std::size_t tiles = 0;
  double psnr = 0.0, ssim = 0.0, sam = 0.0, uiqi = 0.0, cc = 0.0, piqe = 0.0;
  // Tiles excluded from each mean.
  std::size_t psnr_degenerate = 0, ssim_degenerate = 0, sam_degenerate = 0, uiqi_degenerate = 0,
              cc_degenerate = 0, piqe_degenerate = 0;
};

/// Unweighted mean over tiles, degenerate tiles excluded per metric. A mean
/// with no contributing tile is NaN.
AggregateReport aggregate(const std::vector<MetricsReport>& tiles);

struct TileEntry {
  std::string id;
  MetricsReport report;
};

/// JSON document: {"metadata", "tiles": [...], "aggregate": {...,
/// "degenerate_counts": {...}}}. Non-finite values are written as null.
std::string report_json(const std::vector<TileEntry>& tiles, const std::string& label = "");
void write_report(const std::filesystem::path& path, const std::vector<TileEntry>& tiles,
                  const std::string& label = "");

}  // namespace dl
