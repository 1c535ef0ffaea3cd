#include "deeplight/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include "deeplight/error.hpp"
#include "deeplight/parallel.hpp"
#include "json.hpp"

namespace dl {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

constexpr std::uint64_t kBatchStream = 3;
constexpr int kProgressEvery = 50;

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void append_image(std::vector<Scalar>& dst, const Raster& r) { dst.insert(dst.end(), r.data.begin(), r.data.end()); }

bool same_shape(const Raster& a, const Raster& b) {
  return a.bands == b.bands && a.height == b.height && a.width == b.width;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) return {};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  out << text;
  out.flush();
  if (!out) throw FormatError("cannot write '" + path.string() + "'");
}

// Config identity for resume and ablation reuse; the data path may be spelled differently.
std::string config_identity(RunConfig c) {
  c.data_dir.clear();
  return to_text(c);
}

json step_json(const StepRecord& r) {
  json scales = json::array();
  for (double v : r.scale_l1) scales.push_back(number_or_null(v));
  return json{{"type", "step"},           {"step", r.step},     {"loss", number_or_null(r.loss)},
              {"l1", number_or_null(r.l1)}, {"bce", number_or_null(r.bce)}, {"alpha", r.alpha},
              {"scale_l1", scales},         {"wall_s", r.wall_s}};
}

StepRecord step_from_json(const json& j) {
  auto num = [](const json& v) {
    return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
  };
  StepRecord r;
  r.step = j.at("step").get<int>();
  r.loss = num(j.at("loss"));
  r.l1 = num(j.at("l1"));
  r.bce = num(j.at("bce"));
  r.alpha = j.at("alpha").get<double>();
  for (const auto& v : j.at("scale_l1")) r.scale_l1.push_back(num(v));
  r.wall_s = j.at("wall_s").get<double>();
  return r;
}

json metrics_json(const AggregateReport& a) {
  return json{{"tiles", a.tiles},
              {"psnr", number_or_null(a.psnr)},
              {"ssim", number_or_null(a.ssim)},
              {"sam", number_or_null(a.sam)},
              {"uiqi", number_or_null(a.uiqi)},
              {"cc", number_or_null(a.cc)},
              {"piqe", number_or_null(a.piqe)}};
}

AggregateReport aggregate_tiles(const std::vector<TileEntry>& tiles) {
  std::vector<MetricsReport> reports;
  reports.reserve(tiles.size());
  for (const auto& t : tiles) reports.push_back(t.report);
  return aggregate(reports);
}

// Keeps log lines that precede the resume point.
void truncate_log(const fs::path& path, int resume_step) {
  std::ifstream in(path);
  if (!in) return;
  std::string kept, line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception&) {
      break;  // torn final line from an interrupted write
    }
    const std::string type = j.value("type", "");
    const int step = j.value("step", 0);
    if ((type == "step" && step < resume_step) || (type == "eval" && step <= resume_step)) kept += line + "\n";
  }
  in.close();
  write_text(path, kept);
}

double extra_value(const NamedTensors& extra, const std::string& name, double fallback) {
  for (const auto& [n, t] : extra) {
    if (n == name) return t.item();
  }
  return fallback;
}

std::vector<std::size_t> batch_indices(std::uint64_t seed, int step, int batch_size, std::size_t n) {
  std::uint64_t state = derive_seed(derive_seed(seed, kBatchStream), static_cast<std::uint64_t>(step));
  std::vector<std::size_t> idx(static_cast<std::size_t>(batch_size));
  for (auto& i : idx) i = static_cast<std::size_t>(splitmix64(state) % n);
  return idx;
}

}  // namespace

LoadedSplit load_split(const fs::path& data_dir, Split split) {
  if (!fs::is_directory(data_dir)) throw DataError("dataset directory '" + data_dir.string() + "' not found");
  const DatasetManifest manifest = read_manifest(data_dir);
  LoadedSplit out;
  out.split = split;
  out.ids = manifest.indices(split);
  out.bundles.resize(out.ids.size());
  parallel_for(out.ids.size(), [&](std::size_t i) {
    out.bundles[i] = read_bundle(data_dir / scene_dir_name(out.ids[i]));
  });
  return out;
}

Batch make_batch(const std::vector<const ModalityBundle*>& items) {
  if (items.empty()) throw DimensionError("make_batch: empty batch");
  const ModalityBundle& first = *items.front();
  std::vector<Scalar> nl, dmo, dem, nh, isp;
  for (const ModalityBundle* b : items) {
    if (!same_shape(b->lr_ntl, first.lr_ntl) || !same_shape(b->hr_ntl, first.hr_ntl) ||
        !same_shape(b->dmo, first.dmo) || !same_shape(b->dem, first.dem) || !same_shape(b->isp, first.isp)) {
      throw DimensionError("make_batch: bundles differ in raster shape");
    }
    append_image(nl, b->lr_ntl);
    append_image(dmo, b->dmo);
    append_image(dem, b->dem);
    append_image(nh, b->hr_ntl);
    append_image(isp, b->isp);
  }
  const auto n = static_cast<std::int64_t>(items.size());
  auto shape = [n](const Raster& r) { return Shape{n, r.bands, r.height, r.width}; };
  Batch batch;
  batch.n_l = Tensor::from(shape(first.lr_ntl), std::move(nl));
  batch.m_dmo = Tensor::from(shape(first.dmo), std::move(dmo));
  batch.m_dem = Tensor::from(shape(first.dem), std::move(dem));
  batch.n_h = Tensor::from(shape(first.hr_ntl), std::move(nh));
  batch.m_isp = Tensor::from(shape(first.isp), std::move(isp));
  return batch;
}

ModelConfig model_config_for(const ModelConfig& requested, const ModalityBundle& sample) {
  const int lr_h = sample.lr_ntl.height, lr_w = sample.lr_ntl.width;
  if (lr_h < 1 || lr_w < 1 || sample.hr_ntl.height % lr_h != 0 || sample.hr_ntl.width % lr_w != 0 ||
      sample.hr_ntl.height / lr_h != sample.hr_ntl.width / lr_w) {
    throw DataError("dataset rasters do not share an integer LR-to-HR ratio");
  }
  const int ratio = sample.hr_ntl.height / lr_h;
  if (requested.scale_r != ratio) {
    throw ConfigError("model.scale_r = " + std::to_string(requested.scale_r) + " but the dataset ratio is " +
                      std::to_string(ratio));
  }
  if (requested.dmo_bands != sample.dmo.bands) {
    throw ConfigError("model.dmo_bands = " + std::to_string(requested.dmo_bands) + " but the dataset has " +
                      std::to_string(sample.dmo.bands) + " DMO bands");
  }
  ModelConfig c = requested;
  c.lr_h = lr_h;
  c.lr_w = lr_w;
  c.validate();
  return c;
}

TrainResult train(const TrainOptions& options) {
  RunConfig cfg = options.config;
  if (cfg.data_dir.empty()) throw ConfigError("data.dir is not set");
  if (cfg.steps < 1) throw ConfigError("train.steps must be >= 1");
  const LoadedSplit train_split = load_split(cfg.data_dir, Split::kTrain);
  if (train_split.bundles.empty()) throw DataError("dataset '" + cfg.data_dir.string() + "' has no train scenes");
  const LoadedSplit val_split = load_split(cfg.data_dir, Split::kVal);
  cfg.model = model_config_for(cfg.model, train_split.bundles.front());
  cfg.validate();

  const fs::path out = options.out_dir;
  fs::create_directories(out);
  TrainResult result;
  result.log_path = out / "train_log.jsonl";
  result.last_ckpt = out / "last.dlck";
  result.final_ckpt = out / "final.dlck";
  result.best_ckpt = out / "best.dlck";

  ModelState model;
  Adam adam(cfg.optimizer);
  int start = 0;
  double best = -std::numeric_limits<double>::infinity();
  if (options.resume) {
    if (!fs::exists(result.last_ckpt)) {
      throw DataError("cannot resume: '" + result.last_ckpt.string() + "' does not exist");
    }
    const std::string saved = read_text(out / "config.txt");
    if (saved.empty() || config_identity(parse_run_config(saved, (out / "config.txt").string())) !=
                             config_identity(cfg)) {
      throw ConfigError("cannot resume: configuration differs from '" + (out / "config.txt").string() + "'");
    }
    Checkpoint ck = load_checkpoint(result.last_ckpt);
    if (!(ck.model.config == cfg.model)) throw ConfigError("cannot resume: checkpoint model configuration differs");
    model = std::move(ck.model);
    start = static_cast<int>(extra_value(ck.extra, "train.step", 0.0));
    best = extra_value(ck.extra, "train.best_val_psnr", best);
    NamedTensors adam_state;
    for (auto& rec : ck.extra) {
      if (rec.first.rfind("adam.", 0) == 0) adam_state.push_back(rec);
    }
    adam.load_state(adam_state);
    truncate_log(result.log_path, start);
  } else {
    model = build(cfg.model, cfg.seed);
    write_text(out / "config.txt", to_text(cfg));
    write_text(result.log_path, "");
  }
  for (auto& [name, p] : model.params()) p.set_requires_grad(true);
  result.start_step = start;
  result.end_step = start;

  std::ofstream log(result.log_path, std::ios::app);
  if (!log) throw FormatError("cannot open '" + result.log_path.string() + "' for appending");

  auto save = [&](const fs::path& path, int step) {
    NamedTensors extra = adam.state();
    extra.emplace_back("train.step", Tensor::from({1}, {static_cast<Scalar>(step)}));
    extra.emplace_back("train.best_val_psnr", Tensor::from({1}, {static_cast<Scalar>(best)}));
    // Write then rename so an interrupted save never clobbers the previous file.
    const fs::path tmp = path.string() + ".tmp";
    save_checkpoint(tmp, model, extra);
    fs::rename(tmp, path);
  };

  auto evaluate = [&](int step) {
    if (val_split.bundles.empty()) return;
    const AggregateReport a = aggregate_tiles(evaluate_model(model.inference_copy(), val_split));
    json line = metrics_json(a);
    line["type"] = "eval";
    line["step"] = step;
    log << line.dump() << "\n";
    log.flush();
    if (options.progress) *options.progress << "eval step " << step << ": val psnr " << a.psnr << " dB\n";
    if (std::isfinite(a.psnr) && a.psnr > best) {
      best = a.psnr;
      save(result.best_ckpt, step);
    }
  };

  for (int step = start; step < cfg.steps; ++step) {
    if (options.stop_at_step >= 0 && step >= options.stop_at_step) {
      save(result.last_ckpt, step);
      result.end_step = step;
      result.best_val_psnr = best;
      return result;
    }
    const auto t0 = Clock::now();
    std::vector<const ModalityBundle*> items;
    for (std::size_t i : batch_indices(cfg.seed, step, cfg.batch_size, train_split.bundles.size())) {
      items.push_back(&train_split.bundles[i]);
    }
    const Batch b = make_batch(items);
    const ForwardOutputs outputs = forward(model, b.n_l, b.m_dmo, b.m_dem);
    const LossTerms terms = composite(outputs, b.n_h, b.m_isp, cfg.loss);

    StepRecord rec;
    rec.step = step;
    rec.loss = terms.total.item();
    rec.l1 = terms.l1.item();
    if (terms.bce.defined()) rec.bce = terms.bce.item();
    rec.alpha = terms.alpha;
    rec.scale_l1 = terms.per_scale;
    if (!std::isfinite(rec.loss)) {
      // Parameters still hold the result of the last finite step.
      save(result.last_ckpt, step);
      log << json{{"type", "abort"}, {"step", step}, {"reason", "non-finite loss"}}.dump() << "\n";
      log.flush();
      throw NumericError("non-finite training loss at step " + std::to_string(step) + "; last finite state saved to '" +
                         result.last_ckpt.string() + "'");
    }
    backward(terms.total);
    adam.step(model.params());
    rec.wall_s = seconds_since(t0);
    log << step_json(rec).dump() << "\n";
    log.flush();
    result.trace.push_back(rec);
    result.end_step = step + 1;

    if (options.progress && (step % kProgressEvery == 0 || step + 1 == cfg.steps)) {
      *options.progress << "step " << step << ": loss " << rec.loss << " (" << rec.wall_s << " s)\n";
    }
    if ((step + 1) % cfg.checkpoint_every == 0) save(result.last_ckpt, step + 1);
    if (cfg.eval_every > 0 && (step + 1) % cfg.eval_every == 0 && step + 1 < cfg.steps) evaluate(step + 1);
  }

  evaluate(cfg.steps);
  save(result.last_ckpt, cfg.steps);
  save(result.final_ckpt, cfg.steps);
  if (!fs::exists(result.best_ckpt)) save(result.best_ckpt, cfg.steps);
  result.best_val_psnr = best;
  return result;
}

std::vector<StepRecord> read_train_log(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot read training log '" + path.string() + "'");
  std::vector<StepRecord> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      if (j.value("type", "") == "step") out.push_back(step_from_json(j));
    } catch (const json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

double tail_mean_loss(const std::vector<StepRecord>& trace, std::size_t window) {
  if (trace.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t n = std::min(window, trace.size());
  double s = 0.0;
  for (std::size_t i = trace.size() - n; i < trace.size(); ++i) s += trace[i].loss;
  return s / static_cast<double>(n);
}

Raster predict(const ModelState& model, const ModalityBundle& bundle) {
  const Batch b = make_batch({&bundle});
  const ForwardOutputs outputs = forward(model, b.n_l, b.m_dmo, b.m_dem);
  const Tensor& y = outputs.sr_pyramid.back();
  Raster r(1, static_cast<int>(y.dim(2)), static_cast<int>(y.dim(3)));
  const auto values = y.data();
  for (std::size_t i = 0; i < r.data.size(); ++i) r.data[i] = std::clamp(static_cast<float>(values[i]), 0.0f, 1.0f);
  return r;
}

std::vector<TileEntry> evaluate_model(const ModelState& model, const LoadedSplit& split) {
  const ModelState frozen = model.inference_copy();
  std::vector<TileEntry> tiles(split.bundles.size());
  parallel_for(tiles.size(), [&](std::size_t i) {
    tiles[i].id = scene_dir_name(split.ids[i]);
    try {
      tiles[i].report = evaluate_bundle(predict(frozen, split.bundles[i]), split.bundles[i]);
    } catch (const Error& e) {
      throw DataError(tiles[i].id + ": " + e.what());
    }
  });
  return tiles;
}

std::vector<TileEntry> evaluate_bicubic(const LoadedSplit& split) {
  std::vector<TileEntry> tiles(split.bundles.size());
  parallel_for(tiles.size(), [&](std::size_t i) {
    const ModalityBundle& b = split.bundles[i];
    tiles[i].id = scene_dir_name(split.ids[i]);
    if (b.lr_ntl.height < 1 || b.hr_ntl.height % b.lr_ntl.height != 0) {
      throw DataError(tiles[i].id + ": HR size is not an integer multiple of LR size");
    }
    tiles[i].report = evaluate_bundle(bicubic_upsample(b.lr_ntl, b.hr_ntl.height / b.lr_ntl.height), b);
  });
  return tiles;
}

std::vector<AblationRow> run_ablation(const RunConfig& base, const fs::path& out_dir, std::ostream* progress) {
  if (base.data_dir.empty()) throw ConfigError("data.dir is not set");
  const LoadedSplit val = load_split(base.data_dir, Split::kVal);
  if (val.bundles.empty()) throw DataError("dataset '" + base.data_dir.string() + "' has no validation scenes");
  fs::create_directories(out_dir);

  std::vector<AblationRow> rows;
  for (Ablation a : all_ablations()) {
    AblationRow row;
    row.ablation = a;
    row.label = std::string(ablation_label(a));
    const fs::path dir = out_dir / std::string(to_string(a));
    const auto t0 = Clock::now();
    try {
      RunConfig cfg = base;
      cfg.model.ablation = a;
      cfg.model = model_config_for(cfg.model, val.bundles.front());
      cfg.validate();
      std::vector<StepRecord> trace;
      const bool done = fs::exists(dir / "final.dlck") && fs::exists(dir / "train_log.jsonl") &&
                        config_identity(parse_run_config(read_text(dir / "config.txt"))) == config_identity(cfg);
      if (done) {
        if (progress) *progress << "[" << to_string(a) << "] reusing " << dir.string() << "\n";
        trace = read_train_log(dir / "train_log.jsonl");
      } else {
        if (progress) *progress << "[" << to_string(a) << "] training\n";
        TrainOptions opts;
        opts.config = cfg;
        opts.out_dir = dir;
        opts.progress = progress;
        trace = train(opts).trace;
      }
      if (trace.empty()) throw DataError("empty training trace in '" + dir.string() + "'");
      row.initial_loss = trace.front().loss;
      row.final_loss = tail_mean_loss(trace);
      const Checkpoint ck = load_checkpoint(dir / "final.dlck");
      row.metrics = aggregate_tiles(evaluate_model(ck.model, val));
      double wall = 0.0;
      for (const auto& r : trace) wall += r.wall_s;
      row.wall_s = done ? wall : seconds_since(t0);
      row.ok = true;
      if (progress) *progress << "[" << to_string(a) << "] val psnr " << row.metrics.psnr << " dB\n";
    } catch (const Error& e) {
      row.ok = false;
      row.error = e.what();
      row.wall_s = seconds_since(t0);
      if (progress) *progress << "[" << to_string(a) << "] failed: " << e.what() << "\n";
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string ablation_matrix_json(const std::vector<AblationRow>& rows, const RunConfig& base) {
  json doc;
  doc["metadata"] = {{"seed", base.seed},
                     {"steps", base.steps},
                     {"batch_size", base.batch_size},
                     {"split", "val"},
                     {"final_loss", "mean composite loss over the last 100 steps"},
                     {"nondeterministic_fields", {"wall_s"}}};
  json arr = json::array();
  for (const auto& r : rows) {
    json j = metrics_json(r.metrics);
    j["ablation"] = std::string(to_string(r.ablation));
    j["label"] = r.label;
    j["ok"] = r.ok;
    j["error"] = r.ok ? json(nullptr) : json(r.error);
    j["initial_loss"] = number_or_null(r.initial_loss);
    j["final_loss"] = number_or_null(r.final_loss);
    j["wall_s"] = r.wall_s;
    arr.push_back(std::move(j));
  }
  doc["rows"] = std::move(arr);
  return doc.dump(2);
}

}  // namespace dl
