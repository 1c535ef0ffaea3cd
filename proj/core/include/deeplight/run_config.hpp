#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "deeplight/model.hpp"
#include "deeplight/objective.hpp"

namespace dl {

struct RunConfig {
  ModelConfig model;  // lr_h / lr_w and scale_r are taken from the dataset
  LossConfig loss;
  AdamOptions optimizer;
  int steps = 2000;
  int batch_size = 2;
  std::uint64_t seed = 0;
  std::filesystem::path data_dir;
  int eval_every = 500;        // 0 disables intermediate evaluation
  int checkpoint_every = 100;  // cadence of last.dlck

  // Throws ConfigError naming the offending key.
  void validate() const;
};

/// Flat `key = value` text; '#' starts a comment; nested keys are dotted:
///   model.base_channels = 32
///   loss.betas = 0.2, 0.3, 0.5
///   optim.lr = 1e-3
///   train.steps = 2000
///   ablation = no-dmo
RunConfig parse_run_config(const std::string& text, const std::string& source = "<config>");
RunConfig load_run_config(const std::filesystem::path& path);

/// Applies one key; throws ConfigError for unknown keys or bad values.
void set_config_value(RunConfig& config, const std::string& key, const std::string& value);

/// Canonical text form; parse_run_config(to_text(c)) == c.
std::string to_text(const RunConfig& config);

}  // namespace dl
