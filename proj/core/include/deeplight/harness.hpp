#pragma once

#include <filesystem>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "deeplight/dataset.hpp"
#include "deeplight/metrics.hpp"
#include "deeplight/run_config.hpp"

namespace dl {

struct LoadedSplit {
  Split split = Split::kTrain;
  std::vector<std::size_t> ids;  // scene indices in the manifest
  std::vector<ModalityBundle> bundles;
};

LoadedSplit load_split(const std::filesystem::path& data_dir, Split split);

/// Batch tensors, N x C x H x W.
struct Batch {
  Tensor n_l, m_dmo, m_dem, n_h, m_isp;
};
Batch make_batch(const std::vector<const ModalityBundle*>& items);

/// Model configuration completed with the dataset's LR size and ratio.
/// Throws ConfigError when an explicit model.scale_r disagrees.
ModelConfig model_config_for(const ModelConfig& requested, const ModalityBundle& sample);

struct StepRecord {
  int step = 0;
  double loss = 0.0;
  double l1 = 0.0;
  double bce = std::numeric_limits<double>::quiet_NaN();  // NaN without an ISP head
  double alpha = 1.0;
  std::vector<double> scale_l1;
  double wall_s = 0.0;
};

struct TrainOptions {
  RunConfig config;
  std::filesystem::path out_dir;
  bool resume = false;       // continue from out_dir/last.dlck
  int stop_at_step = -1;     // end this invocation early (before this step), leaving last.dlck
  std::ostream* progress = nullptr;
};

struct TrainResult {
  int start_step = 0;
  int end_step = 0;
  std::vector<StepRecord> trace;  // steps run by this invocation
  double best_val_psnr = -std::numeric_limits<double>::infinity();
  std::filesystem::path log_path, last_ckpt, final_ckpt, best_ckpt;
};

/// Trains with Adam on the train split. Writes config.txt, train_log.jsonl
/// (one JSON object per line), last.dlck every checkpoint_every steps, and
/// final.dlck / best.dlck (best validation PSNR) on completion. Batches are
/// drawn from (seed, step) so a resumed run repeats the uninterrupted trace.
/// A non-finite loss writes last.dlck with the parameters of the last finite
/// step and throws NumericError.
TrainResult train(const TrainOptions& options);

/// Step records of a training log, in file order.
std::vector<StepRecord> read_train_log(const std::filesystem::path& path);

/// Mean loss over the last `window` steps of a trace (all steps if shorter).
double tail_mean_loss(const std::vector<StepRecord>& trace, std::size_t window = 100);

/// Full-scale prediction clamped to [0, 1]. `model` should be an inference copy.
Raster predict(const ModelState& model, const ModalityBundle& bundle);

std::vector<TileEntry> evaluate_model(const ModelState& model, const LoadedSplit& split);
std::vector<TileEntry> evaluate_bicubic(const LoadedSplit& split);

struct AblationRow {
  Ablation ablation = Ablation::kNone;
  std::string label;
  bool ok = false;
  std::string error;
  AggregateReport metrics;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double wall_s = 0.0;
};

/// Trains the full model and every ablation with the shared seed and budget under
/// out_dir/<variant>/ and scores the final model on the validation split.
/// Failures are recorded per row; completed variants are not retrained when
/// their final checkpoint and config already exist.
std::vector<AblationRow> run_ablation(const RunConfig& base, const std::filesystem::path& out_dir,
                                      std::ostream* progress = nullptr);
std::string ablation_matrix_json(const std::vector<AblationRow>& rows, const RunConfig& base);

}  // namespace dl
