#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "deeplight/ops.hpp"
#include "deeplight/optim.hpp"

namespace dl {

/// Ablation variants. Each removes one input modality, the auxiliary
/// supervision, or one architectural stage.
enum class Ablation { kNone, kNoLrNtl, kNoDmo, kNoDem, kNoIsp, kNoCaa, kNoAmff, kNoAer };

std::string_view to_string(Ablation a);           // "none", "no-lr-ntl", ...
std::string_view ablation_label(Ablation a);      // "Ours full", "w/o LR NTL", ...
Ablation parse_ablation(std::string_view text);   // throws ConfigError
const std::vector<Ablation>& all_ablations();     // the seven "w/o" rows, then full

struct ModelConfig {
  int scale_r = 8;
  int lr_h = 32;
  int lr_w = 32;
  int base_channels = 32;
  int num_res_blocks = 3;
  int num_scales_m = 3;
  int dmo_bands = 7;
  int offset_kernel = 3;
  int fusion_resize_divisor = 2;  // shallow features are resized by 1/divisor and back
  Ablation ablation = Ablation::kNone;

  // Throws ConfigError naming the first invalid field.
  void validate() const;

  bool uses_lr_ntl() const { return ablation != Ablation::kNoLrNtl; }
  bool uses_dmo() const { return ablation != Ablation::kNoDmo; }
  bool uses_dem() const { return ablation != Ablation::kNoDem; }
  bool has_alignment() const { return ablation != Ablation::kNoCaa; }
  bool has_cross_fusion() const { return ablation != Ablation::kNoAmff; }
  bool has_multiscale_heads() const { return ablation != Ablation::kNoAer; }
  bool has_isp_head() const { return ablation != Ablation::kNoAer && ablation != Ablation::kNoIsp; }
  int hr_h() const { return lr_h * scale_r; }
  int hr_w() const { return lr_w * scale_r; }

  bool operator==(const ModelConfig&) const = default;
};

/// All learnable parameters plus the configuration that shaped them.
class ModelState {
 public:
  ModelConfig config;

  const Tensor& param(const std::string& name) const;
  bool has_param(const std::string& name) const;
  NamedTensors& params() { return params_; }
  const NamedTensors& params() const { return params_; }
  std::int64_t parameter_count() const;

  void add_param(std::string name, Tensor value);

  // Detached parameters: forward passes record no graph, so the copy can be
  // shared read-only across evaluation workers.
  ModelState inference_copy() const;

 private:
  NamedTensors params_;
};

struct FeatureSet {
  Tensor f_ntl, f_dmo, f_dem;
  Tensor f_aux_fused, f_main_fused;
  Tensor warp_omega;  // N x 2 x 3, undefined when the alignment stage is ablated
};

struct ForwardOutputs {
  std::vector<Tensor> sr_pyramid;  // coarse to fine; last is the full-scale prediction
  Tensor isp_logits;               // undefined when the ISP head is absent
};

/// He-initialised parameters; the localisation regressor starts at the
/// identity warp and the offset predictor at zero. Deterministic in seed.
ModelState build(const ModelConfig& config, std::uint64_t seed);

struct CmfmOptions {
  int res_blocks = 3;
  bool cross = true;  // exchange projected features between the branches
  int resize_divisor = 2;
};

/// Registers the parameters of one cross-modality fusion module under
/// `prefix`. Exposed so the module can be exercised on its own.
void build_cmfm(ModelState& state, const std::string& prefix, int channels_a, int channels_b, int channels,
                const CmfmOptions& options, std::mt19937_64& rng);

/// Two-branch fusion of feat_a and feat_b into N x C x h x w.
Tensor cmfm(const ModelState& state, const std::string& prefix, const Tensor& feat_a, const Tensor& feat_b,
            const CmfmOptions& options);

FeatureSet caa_forward(const ModelState& state, const Tensor& n_l, const Tensor& m_dmo, const Tensor& m_dem);
void amff_forward(const ModelState& state, FeatureSet& feats);
/// Heads predict a residual over the bilinear upsampling of lr_skip when it is given.
ForwardOutputs aer_forward(const ModelState& state, const Tensor& f_main, const Tensor& lr_skip = {});
ForwardOutputs forward(const ModelState& state, const Tensor& n_l, const Tensor& m_dmo, const Tensor& m_dem);

/// Checkpoint file ("DLCK"): config block plus named f32 records. Extra
/// records (optimizer state) are carried alongside the model parameters.
struct Checkpoint {
  ModelState model;
  NamedTensors extra;
};

void save_checkpoint(const std::filesystem::path& path, const ModelState& state, const NamedTensors& extra = {});
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace dl
