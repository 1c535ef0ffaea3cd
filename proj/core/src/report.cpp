#include <cmath>
#include <fstream>

#include "deeplight/error.hpp"
#include "deeplight/metrics.hpp"
#include "json.hpp"

namespace dl {
namespace {

using nlohmann::json;

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json tile_json(const TileEntry& t) {
  const MetricsReport& m = t.report;
  return json{{"id", t.id},
              {"psnr", number_or_null(m.psnr_db)},
              {"ssim", number_or_null(m.ssim)},
              {"sam", number_or_null(m.sam_rad)},
              {"uiqi", number_or_null(m.uiqi)},
              {"cc", number_or_null(m.cc)},
              {"piqe", number_or_null(m.piqe)},
              {"n_pixels", m.n_pixels},
              {"uiqi_skipped_windows", m.uiqi_skipped_windows},
              {"flags",
               {{"psnr_exact_match", m.psnr_exact},
                {"ssim_degenerate", m.ssim_degenerate},
                {"sam_degenerate", m.sam_degenerate},
                {"uiqi_degenerate", m.uiqi_degenerate},
                {"cc_degenerate", m.cc_degenerate},
                {"piqe_degenerate", m.piqe_degenerate}}}};
}

}  // namespace

std::string report_json(const std::vector<TileEntry>& tiles, const std::string& label) {
  std::vector<MetricsReport> reports;
  json tile_array = json::array();
  for (const auto& t : tiles) {
    reports.push_back(t.report);
    tile_array.push_back(tile_json(t));
  }
  const AggregateReport a = aggregate(reports);
  json doc;
  doc["metadata"] = {
      {"label", label},
      {"psnr_peak", 1.0},
      {"ssim", "11x11 Gaussian window sigma 1.5, C1=(0.01)^2, C2=(0.03)^2, valid windows"},
      {"sam_vectorization", "flattened single-band intensity vector"},
      {"uiqi", "8x8 windows, stride 1; zero-denominator windows skipped"},
      {"piqe_divergences", piqe_divergences()},
      {"aggregation", "unweighted mean over tiles; degenerate tiles excluded per metric"},
  };
  doc["tiles"] = std::move(tile_array);
  doc["aggregate"] = {{"tiles", a.tiles},
                      {"psnr", number_or_null(a.psnr)},
                      {"ssim", number_or_null(a.ssim)},
                      {"sam", number_or_null(a.sam)},
                      {"uiqi", number_or_null(a.uiqi)},
                      {"cc", number_or_null(a.cc)},
                      {"piqe", number_or_null(a.piqe)},
                      {"degenerate_counts",
                       {{"psnr", a.psnr_degenerate},
                        {"ssim", a.ssim_degenerate},
                        {"sam", a.sam_degenerate},
                        {"uiqi", a.uiqi_degenerate},
                        {"cc", a.cc_degenerate},
                        {"piqe", a.piqe_degenerate}}}};
  return doc.dump(2);
}

void write_report(const std::filesystem::path& path, const std::vector<TileEntry>& tiles, const std::string& label) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open report '" + path.string() + "' for writing");
  out << report_json(tiles, label) << "\n";
  out.flush();
  if (!out) throw FormatError("write to '" + path.string() + "' failed");
}

}  // namespace dl
