#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "deeplight/dataset.hpp"
#include "deeplight/error.hpp"
#include "deeplight/harness.hpp"
#include "deeplight/metrics.hpp"
#include "deeplight/run_config.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

struct GenArgs {
  fs::path out;
  int scenes = 64;
  std::uint64_t seed = 0;
  double val_frac = 0.1, test_frac = 0.1;
  dl::SceneSpec spec;
};

struct TrainArgs {
  fs::path data, config, out;
  std::string ablation;
  std::vector<std::string> overrides;
  std::optional<int> steps, batch_size;
  std::optional<std::uint64_t> seed;
  bool resume = false;
  int stop_at = -1;
  bool quiet = false;
};

struct EvalArgs {
  fs::path data, ckpt, report, config;
  std::string split = "val";
  std::string baseline;
  bool fresh = false;
  std::uint64_t seed = 0;
};

struct AblateArgs {
  fs::path data, config, matrix, work;
  std::vector<std::string> overrides;
  std::optional<int> steps;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

struct MetricsArgs {
  fs::path pred, target, report;
};

dl::RunConfig assemble_config(const fs::path& config_path, const fs::path& data,
                              const std::vector<std::string>& overrides) {
  dl::RunConfig c = config_path.empty() ? dl::RunConfig{} : dl::load_run_config(config_path);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw dl::ConfigError("--set expects key=value, got '" + kv + "'");
    auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(' '));
      s.erase(s.find_last_not_of(' ') + 1);
      return s;
    };
    dl::set_config_value(c, trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
  if (!data.empty()) c.data_dir = data;
  return c;
}

void print_aggregate(const std::string& label, const dl::AggregateReport& a) {
  std::cout << std::left << std::setw(14) << label << std::right << std::fixed << std::setprecision(4)
            << " psnr " << std::setw(8) << a.psnr << "  ssim " << a.ssim << "  sam " << a.sam << "  uiqi " << a.uiqi
            << "  cc " << a.cc << "  piqe " << std::setw(8) << a.piqe << "\n";
  std::cout.unsetf(std::ios::floatfield);
}

dl::AggregateReport aggregate_of(const std::vector<dl::TileEntry>& tiles) {
  std::vector<dl::MetricsReport> r;
  for (const auto& t : tiles) r.push_back(t.report);
  return dl::aggregate(r);
}

void write_json(const fs::path& path, const json& doc) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  out << doc.dump(2) << "\n";
  out.flush();
  if (!out) throw dl::FormatError("cannot write '" + path.string() + "'");
}

int run_gen(const GenArgs& a) {
  if (a.scenes < 1) throw dl::ConfigError("need ≥ 1 scene");
  const std::array<double, 3> fractions{1.0 - a.val_frac - a.test_frac, a.val_frac, a.test_frac};
  const dl::DatasetManifest m = dl::generate_dataset(a.out, a.scenes, fractions, a.seed, a.spec);
  std::cout << "wrote " << m.size() << " scenes to " << a.out.string() << " (train " << m.indices(dl::Split::kTrain).size()
            << ", val " << m.indices(dl::Split::kVal).size() << ", test " << m.indices(dl::Split::kTest).size()
            << ")\n";
  std::cout << "dark pixel fraction: " << m.dark_fraction << "\n";
  return kOk;
}

int run_train(const TrainArgs& a) {
  dl::RunConfig c = assemble_config(a.config, a.data, a.overrides);
  if (!a.ablation.empty()) c.model.ablation = dl::parse_ablation(a.ablation);
  if (a.steps) c.steps = *a.steps;
  if (a.batch_size) c.batch_size = *a.batch_size;
  if (a.seed) c.seed = *a.seed;
  dl::TrainOptions opts;
  opts.config = c;
  opts.out_dir = a.out;
  opts.resume = a.resume;
  opts.stop_at_step = a.stop_at;
  opts.progress = a.quiet ? nullptr : &std::cerr;
  const dl::TrainResult r = dl::train(opts);
  std::cout << "steps " << r.start_step << ".." << r.end_step;
  if (!r.trace.empty()) {
    std::cout << "  loss " << r.trace.front().loss << " -> " << dl::tail_mean_loss(r.trace) << " (last-100 mean)";
  }
  std::cout << "\n";
  if (std::isfinite(r.best_val_psnr)) std::cout << "best val psnr " << r.best_val_psnr << " dB\n";
  std::cout << "checkpoints in " << a.out.string() << "\n";
  return kOk;
}

int run_eval(const EvalArgs& a) {
  if (a.data.empty()) throw dl::ConfigError("--data is required");
  if (a.baseline.size() && a.baseline != "bicubic") {
    throw dl::ConfigError("--baseline: unknown value '" + a.baseline + "' (expected bicubic)");
  }
  if (a.ckpt.empty() == !a.fresh) throw dl::ConfigError("give exactly one of --ckpt or --fresh");
  const dl::LoadedSplit split = dl::load_split(a.data, dl::parse_split(a.split));
  if (split.bundles.empty()) throw dl::DataError("split '" + a.split + "' is empty");

  dl::ModelState model;
  std::string label;
  if (a.fresh) {
    dl::RunConfig c = assemble_config(a.config, a.data, {});
    c.model = dl::model_config_for(c.model, split.bundles.front());
    model = dl::build(c.model, a.seed);
    label = "untrained (seed " + std::to_string(a.seed) + ")";
  } else {
    model = dl::load_checkpoint(a.ckpt).model;
    label = a.ckpt.string();
  }
  const auto& s = split.bundles.front();
  if (model.config.lr_h != s.lr_ntl.height || model.config.lr_w != s.lr_ntl.width ||
      model.config.hr_h() != s.hr_ntl.height || model.config.hr_w() != s.hr_ntl.width ||
      model.config.dmo_bands != s.dmo.bands) {
    throw dl::DimensionError("checkpoint expects LR " + std::to_string(model.config.lr_h) + "x" +
                             std::to_string(model.config.lr_w) + ", ratio " + std::to_string(model.config.scale_r) +
                             ", " + std::to_string(model.config.dmo_bands) + " DMO bands; dataset has LR " +
                             std::to_string(s.lr_ntl.height) + "x" + std::to_string(s.lr_ntl.width) + ", HR " +
                             std::to_string(s.hr_ntl.height) + "x" + std::to_string(s.hr_ntl.width) + ", " +
                             std::to_string(s.dmo.bands) + " DMO bands");
  }

  const auto tiles = dl::evaluate_model(model, split);
  json doc = json::parse(dl::report_json(tiles, label));
  doc["metadata"]["split"] = a.split;
  const dl::AggregateReport agg = aggregate_of(tiles);
  print_aggregate("model", agg);
  if (a.baseline == "bicubic") {
    const auto base_tiles = dl::evaluate_bicubic(split);
    const dl::AggregateReport base = aggregate_of(base_tiles);
    doc["baseline"] = json::parse(dl::report_json(base_tiles, "bicubic"));
    const double gain = agg.psnr - base.psnr;
    doc["psnr_gain_db"] = std::isfinite(gain) ? json(gain) : json(nullptr);
    print_aggregate("bicubic", base);
    std::cout << "psnr gain over bicubic: " << gain << " dB\n";
  }
  if (!a.report.empty()) write_json(a.report, doc);
  return kOk;
}

int run_ablate(const AblateArgs& a) {
  dl::RunConfig c = assemble_config(a.config, a.data, a.overrides);
  if (a.steps) c.steps = *a.steps;
  if (a.seed) c.seed = *a.seed;
  c.model.ablation = dl::Ablation::kNone;
  const fs::path work = a.work.empty() ? fs::path(a.matrix).replace_extension("") += "_runs" : a.work;
  const auto rows = dl::run_ablation(c, work, a.quiet ? nullptr : &std::cerr);
  if (a.matrix.has_parent_path()) fs::create_directories(a.matrix.parent_path());
  {
    std::ofstream out(a.matrix, std::ios::trunc);
    out << dl::ablation_matrix_json(rows, c) << "\n";
    if (!out) throw dl::FormatError("cannot write '" + a.matrix.string() + "'");
  }
  int failed = 0;
  for (const auto& r : rows) {
    if (r.ok) {
      print_aggregate(r.label, r.metrics);
    } else {
      ++failed;
      std::cout << std::left << std::setw(14) << r.label << " FAILED: " << r.error << "\n";
    }
  }
  std::cout << "matrix written to " << a.matrix.string() << "\n";
  return failed == static_cast<int>(rows.size()) ? kData : kOk;
}

int run_metrics(const MetricsArgs& a) {
  const dl::Raster pred = dl::read_raster(a.pred);
  const dl::Raster target = dl::read_raster(a.target);
  const dl::MetricsReport r = dl::evaluate_prediction(pred, target);
  std::cout << "psnr " << r.psnr_db << (r.psnr_exact ? " (exact match)" : "") << "\n"
            << "ssim " << r.ssim << "\nsam  " << r.sam_rad << "\nuiqi " << r.uiqi << "\ncc   " << r.cc
            << "\npiqe " << r.piqe << (r.piqe_degenerate ? " (no active blocks)" : "") << "\n";
  if (!a.report.empty()) dl::write_report(a.report, {{a.pred.filename().string(), r}}, "pair");
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deeplight: multimodal nighttime-light super-resolution"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "generate a synthetic dataset");
  g->add_option("--out", gen.out, "output directory")->required();
  g->add_option("--scenes", gen.scenes, "number of scenes")->capture_default_str();
  g->add_option("--seed", gen.seed, "base seed")->capture_default_str();
  g->add_option("--hr-size", gen.spec.hr_size, "HR side in pixels")->capture_default_str();
  g->add_option("--scale", gen.spec.scale_r, "HR/LR ratio")->capture_default_str();
  g->add_option("--val-frac", gen.val_frac)->capture_default_str();
  g->add_option("--test-frac", gen.test_frac)->capture_default_str();
  g->add_option("--settlements-min", gen.spec.settlements_min)->capture_default_str();
  g->add_option("--settlements-max", gen.spec.settlements_max)->capture_default_str();
  g->add_option("--roughness", gen.spec.terrain_roughness)->capture_default_str();
  g->add_option("--saturation", gen.spec.saturation_level)->capture_default_str();
  g->add_option("--bloom-sigma", gen.spec.bloom_sigma_px, "HR pixels")->capture_default_str();
  g->add_option("--warp-max", gen.spec.warp_max_px, "HR pixels")->capture_default_str();
  g->add_option("--noise-sigma", gen.spec.noise_sigma)->capture_default_str();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "train one model");
  t->add_option("--data", tr.data, "dataset directory");
  t->add_option("--config", tr.config, "key = value config file")->check(CLI::ExistingFile);
  t->add_option("--out", tr.out, "run directory")->required();
  t->add_option("--ablation", tr.ablation, "none, no-lr-ntl, no-dmo, no-dem, no-isp, no-caa, no-amff, no-aer");
  t->add_option("--set", tr.overrides, "config override key=value (repeatable)");
  t->add_option("--steps", tr.steps);
  t->add_option("--batch-size", tr.batch_size);
  t->add_option("--seed", tr.seed);
  t->add_flag("--resume", tr.resume, "continue from <out>/last.dlck");
  t->add_option("--stop-at", tr.stop_at, "stop before this step, leaving last.dlck");
  t->add_flag("--quiet", tr.quiet);

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "score a checkpoint on a split");
  e->add_option("--data", ev.data, "dataset directory")->required();
  e->add_option("--ckpt", ev.ckpt, "checkpoint");
  e->add_flag("--fresh", ev.fresh, "evaluate an untrained model instead of --ckpt");
  e->add_option("--config", ev.config, "model config for --fresh")->check(CLI::ExistingFile);
  e->add_option("--seed", ev.seed, "initialisation seed for --fresh");
  e->add_option("--split", ev.split, "train, val or test")->capture_default_str();
  e->add_option("--report", ev.report, "JSON report path");
  e->add_option("--baseline", ev.baseline, "also score a baseline (bicubic)");

  AblateArgs ab;
  auto* x = app.add_subcommand("ablate", "train and score every ablation variant");
  x->add_option("--data", ab.data, "dataset directory");
  x->add_option("--config", ab.config, "key = value config file")->check(CLI::ExistingFile);
  x->add_option("--matrix", ab.matrix, "JSON matrix path")->required();
  x->add_option("--work", ab.work, "run directories (default <matrix>_runs)");
  x->add_option("--set", ab.overrides, "config override key=value (repeatable)");
  x->add_option("--steps", ab.steps);
  x->add_option("--seed", ab.seed);
  x->add_flag("--quiet", ab.quiet);

  MetricsArgs me;
  auto* m = app.add_subcommand("metrics", "score a prediction raster against a target raster");
  m->add_option("pred", me.pred, "DLT1 prediction")->required();
  m->add_option("target", me.target, "DLT1 target")->required();
  m->add_option("--report", me.report, "JSON report path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*g) return run_gen(gen);
    if (*t) return run_train(tr);
    if (*e) return run_eval(ev);
    if (*x) return run_ablate(ab);
    if (*m) return run_metrics(me);
  } catch (const dl::ConfigError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kUsage;
  } catch (const dl::NumericError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kNumeric;
  } catch (const dl::Error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kData;
  } catch (const fs::filesystem_error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kData;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kData;
  }
  return kUsage;
}
