#include "deeplight/model.hpp"

#include <array>
#include <cmath>

namespace dl {
namespace {

constexpr Scalar kSlope = Scalar(0.1);
// Gain for convs with no activation after them, and for cross-branch injections.
const double kLinearGain = 1.0 / std::sqrt(2.0);
const double kCrossGain = 0.5 * kLinearGain;

struct AblationInfo {
  Ablation value;
  std::string_view key;
  std::string_view label;
};

constexpr std::array<AblationInfo, 8> kAblations = {{
    {Ablation::kNoLrNtl, "no-lr-ntl", "w/o LR NTL"},
    {Ablation::kNoDmo, "no-dmo", "w/o DMO"},
    {Ablation::kNoDem, "no-dem", "w/o DEM"},
    {Ablation::kNoIsp, "no-isp", "w/o ISP"},
    {Ablation::kNoCaa, "no-caa", "w/o CAA"},
    {Ablation::kNoAmff, "no-amff", "w/o AMFF"},
    {Ablation::kNoAer, "no-aer", "w/o AER"},
    {Ablation::kNone, "none", "Ours full"},
}};

const AblationInfo& info(Ablation a) {
  for (const auto& i : kAblations) {
    if (i.value == a) return i;
  }
  throw ConfigError("unknown ablation value");
}

Tensor act(const Tensor& x) { return leaky_relu(x, kSlope); }

Tensor conv(const ModelState& s, const std::string& name, const Tensor& x, int stride = 1) {
  const Tensor& w = s.param(name + ".weight");
  const int pad = static_cast<int>(w.dim(2) / 2);
  return conv2d(x, w, s.param(name + ".bias"), stride, pad);
}

// He-normal weights for a leaky-ReLU network, zero bias.
void add_conv(ModelState& s, const std::string& name, int in, int out, int k, std::mt19937_64& rng,
              double gain = 1.0) {
  const double fan_in = static_cast<double>(in) * k * k;
  std::normal_distribution<double> dist(0.0, gain * std::sqrt(2.0 / ((1.0 + kSlope * kSlope) * fan_in)));
  std::vector<Scalar> w(static_cast<std::size_t>(out) * in * k * k);
  for (auto& v : w) v = static_cast<Scalar>(dist(rng));
  s.add_param(name + ".weight", Tensor::from({out, in, k, k}, std::move(w), true));
  s.add_param(name + ".bias", Tensor::zeros({out}, true));
}

void add_zero_conv(ModelState& s, const std::string& name, int in, int out, int k, std::vector<Scalar> bias = {}) {
  s.add_param(name + ".weight", Tensor::zeros({out, in, k, k}, true));
  if (bias.empty()) bias.assign(static_cast<std::size_t>(out), Scalar(0));
  s.add_param(name + ".bias", Tensor::from({out}, std::move(bias), true));
}

int log2_exact(int v) {
  int n = 0;
  while ((1 << n) < v) ++n;
  return (1 << n) == v ? n : -1;
}

void check_image(const Tensor& t, const char* what, std::int64_t channels, std::int64_t h, std::int64_t w,
                 std::int64_t batch) {
  if (!t.defined()) throw DimensionError(std::string(what) + " is required but was not provided");
  if (t.rank() != 4 || t.dim(1) != channels || t.dim(2) != h || t.dim(3) != w || (batch >= 0 && t.dim(0) != batch)) {
    throw DimensionError(std::string(what) + " must be " + shape_str({batch < 0 ? t.dim(0) : batch, channels, h, w}) +
                         ", got " + shape_str(t.shape()));
  }
}

Tensor downsample(const ModelState& s, const std::string& prefix, Tensor x, int layers) {
  for (int i = 0; i < layers; ++i) x = act(conv(s, prefix + "." + std::to_string(i), x, 2));
  return x;
}

Tensor calibrate(const ModelState& s, const std::string& prefix, const Tensor& x) {
  return conv(s, prefix + ".1", act(conv(s, prefix + ".0", x)));
}

}  // namespace

std::string_view to_string(Ablation a) { return info(a).key; }
std::string_view ablation_label(Ablation a) { return info(a).label; }

Ablation parse_ablation(std::string_view text) {
  for (const auto& i : kAblations) {
    if (i.key == text) return i.value;
  }
  throw ConfigError("ablation: unknown value '" + std::string(text) +
                    "' (expected none, no-lr-ntl, no-dmo, no-dem, no-isp, no-caa, no-amff, no-aer)");
}

const std::vector<Ablation>& all_ablations() {
  static const std::vector<Ablation> order = [] {
    std::vector<Ablation> v;
    for (const auto& i : kAblations) v.push_back(i.value);
    return v;
  }();
  return order;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError("model." + field + ": " + why);
  };
  if (scale_r < 2) fail("scale_r", "must be >= 2");
  if (log2_exact(scale_r) < 0) fail("scale_r", "must be a power of two");
  if (num_scales_m < 1 || num_scales_m > 16 || (1 << num_scales_m) != scale_r) {
    fail("num_scales_m", "2^num_scales_m must equal scale_r");
  }
  if (lr_h < 4 || lr_w < 4) fail("lr_size", "LR extent must be >= 4");
  if (lr_h % 4 != 0 || lr_w % 4 != 0) fail("lr_size", "LR extent must be divisible by 4");
  if (base_channels < 4) fail("base_channels", "must be >= 4");
  if (num_res_blocks < 1) fail("num_res_blocks", "must be >= 1");
  if (dmo_bands < 1) fail("dmo_bands", "must be >= 1");
  if (offset_kernel < 1 || offset_kernel % 2 == 0) fail("offset_kernel", "must be a positive odd integer");
  if (fusion_resize_divisor < 1) fail("fusion_resize_divisor", "must be >= 1");
}

const Tensor& ModelState::param(const std::string& name) const {
  for (const auto& [n, t] : params_) {
    if (n == name) return t;
  }
  throw StateError("model has no parameter '" + name + "'");
}

bool ModelState::has_param(const std::string& name) const {
  for (const auto& [n, t] : params_) {
    if (n == name) return true;
  }
  return false;
}

std::int64_t ModelState::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& [name, t] : params_) n += t.numel();
  return n;
}

ModelState ModelState::inference_copy() const {
  ModelState out;
  out.config = config;
  for (const auto& [n, t] : params_) out.params_.emplace_back(n, t.detach());
  return out;
}

void ModelState::add_param(std::string name, Tensor value) {
  if (has_param(name)) throw StateError("duplicate parameter '" + name + "'");
  params_.emplace_back(std::move(name), std::move(value));
}

void build_cmfm(ModelState& s, const std::string& prefix, int channels_a, int channels_b, int channels,
                const CmfmOptions& options, std::mt19937_64& rng) {
  const int c = channels;
  add_conv(s, prefix + ".in_a", channels_a, c, 1, rng, kLinearGain);
  add_conv(s, prefix + ".in_b", channels_b, c, 1, rng, kLinearGain);
  for (int k = 0; k < options.res_blocks; ++k) {
    const std::string ks = std::to_string(k);
    if (options.cross) {
      add_conv(s, prefix + ".cross_ba." + ks, c, c, 1, rng, kCrossGain);
      add_conv(s, prefix + ".cross_ab." + ks, c, c, 1, rng, kCrossGain);
    }
    if (k > 0) {
      add_conv(s, prefix + ".merge_a." + ks, 2 * c, c, 1, rng, kLinearGain);
      add_conv(s, prefix + ".merge_b." + ks, 2 * c, c, 1, rng, kLinearGain);
    }
    for (const char* branch : {"res_a.", "res_b."}) {
      add_conv(s, prefix + "." + branch + ks + ".0", c, c, 3, rng);
      add_conv(s, prefix + "." + branch + ks + ".1", c, c, 3, rng, 0.1);
    }
  }
  add_conv(s, prefix + ".fuse.0", 2 * c, c, 3, rng);
  add_conv(s, prefix + ".fuse.1", c, c, 3, rng, kLinearGain);
}

ModelState build(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ModelState s;
  s.config = config;
  std::mt19937_64 rng(seed);
  const int c = config.base_channels;
  const int levels = log2_exact(config.scale_r);
  const int k = config.offset_kernel;

  auto add_downsampler = [&](const std::string& prefix, int in) {
    for (int i = 0; i < levels; ++i) add_conv(s, prefix + "." + std::to_string(i), i == 0 ? in : c, c, 3, rng);
  };
  if (config.uses_dmo()) {
    add_downsampler("caa.dmo_down", config.dmo_bands);
    add_conv(s, "caa.dmo_calib.0", c, c, 3, rng);
    add_conv(s, "caa.dmo_calib.1", c, c, 3, rng, kLinearGain);
  }
  if (config.uses_dem()) {
    add_downsampler("caa.dem_down", 1);
    add_conv(s, "caa.dem_calib.0", c, c, 3, rng);
    add_conv(s, "caa.dem_calib.1", c, c, 3, rng, kLinearGain);
  }
  if (config.uses_lr_ntl()) {
    if (config.has_alignment()) {
      add_conv(s, "caa.loc.0", 1, c, 3, rng);
      add_conv(s, "caa.loc.1", c, c, 3, rng);
      add_zero_conv(s, "caa.loc.fc", c, 6, 1, {1, 0, 0, 0, 1, 0});
      add_zero_conv(s, "caa.defcan.offset", 1, 2 * k * k, 3);
    }
    add_conv(s, "caa.defcan.deform", 1, c, k, rng);
    add_conv(s, "caa.defcan.recon", c, c, 3, rng, kLinearGain);
  }

  const CmfmOptions fusion{config.num_res_blocks, config.has_cross_fusion(), config.fusion_resize_divisor};
  build_cmfm(s, "amff.aux", c, c, c, fusion, rng);
  build_cmfm(s, "amff.main", c, c, c, fusion, rng);

  for (int j = 0; j < config.num_scales_m; ++j) add_conv(s, "aer.up." + std::to_string(j), c, 4 * c, 1, rng);
  for (int j = 0; j < config.num_scales_m; ++j) {
    if (config.has_multiscale_heads() || j == config.num_scales_m - 1) {
      add_conv(s, "aer.head." + std::to_string(j), c, 1, 1, rng, kLinearGain);
    }
  }
  if (config.has_isp_head()) add_conv(s, "aer.isp", 1, 1, 3, rng);
  return s;
}

Tensor cmfm(const ModelState& s, const std::string& prefix, const Tensor& feat_a, const Tensor& feat_b,
            const CmfmOptions& options) {
  if (feat_a.rank() != 4 || feat_b.rank() != 4 || feat_a.dim(0) != feat_b.dim(0) ||
      feat_a.dim(2) != feat_b.dim(2) || feat_a.dim(3) != feat_b.dim(3)) {
    throw DimensionError("cmfm(" + prefix + "): features " + shape_str(feat_a.shape()) + " and " +
                         shape_str(feat_b.shape()) + " must share N, h, w");
  }
  const std::int64_t h = feat_a.dim(2), w = feat_a.dim(3);
  const std::int64_t sh = std::max<std::int64_t>(1, h / options.resize_divisor);
  const std::int64_t sw = std::max<std::int64_t>(1, w / options.resize_divisor);
  auto coarse = [&](const Tensor& x) { return resize_bilinear(resize_bilinear(x, sh, sw), h, w); };

  Tensor xa = conv(s, prefix + ".in_a", feat_a);
  Tensor xb = conv(s, prefix + ".in_b", feat_b);
  Tensor shallow_a, shallow_b;
  for (int k = 0; k < options.res_blocks; ++k) {
    const std::string ks = std::to_string(k);
    Tensor ia = xa, ib = xb;
    if (options.cross) {
      ia = add(xa, conv(s, prefix + ".cross_ba." + ks, xb));
      ib = add(xb, conv(s, prefix + ".cross_ab." + ks, xa));
    }
    if (k > 0) {
      ia = conv(s, prefix + ".merge_a." + ks, concat({ia, coarse(shallow_a)}, 1));
      ib = conv(s, prefix + ".merge_b." + ks, concat({ib, coarse(shallow_b)}, 1));
    }
    xa = add(ia, conv(s, prefix + ".res_a." + ks + ".1", act(conv(s, prefix + ".res_a." + ks + ".0", ia))));
    xb = add(ib, conv(s, prefix + ".res_b." + ks + ".1", act(conv(s, prefix + ".res_b." + ks + ".0", ib))));
    if (k == 0) {
      shallow_a = xa;
      shallow_b = xb;
    }
  }
  return conv(s, prefix + ".fuse.1", act(conv(s, prefix + ".fuse.0", concat({xa, xb}, 1))));
}

FeatureSet caa_forward(const ModelState& s, const Tensor& n_l, const Tensor& m_dmo, const Tensor& m_dem) {
  const ModelConfig& cfg = s.config;
  const std::int64_t h = cfg.lr_h, w = cfg.lr_w;
  const int levels = log2_exact(cfg.scale_r);

  // Batch size comes from whichever input the variant consumes first.
  std::int64_t batch = -1;
  if (cfg.uses_lr_ntl()) {
    check_image(n_l, "n_l", 1, h, w, batch);
    batch = n_l.dim(0);
  }
  if (cfg.uses_dmo()) {
    check_image(m_dmo, "m_dmo", cfg.dmo_bands, h * cfg.scale_r, w * cfg.scale_r, batch);
    batch = m_dmo.dim(0);
  }
  if (cfg.uses_dem()) check_image(m_dem, "m_dem", 1, h * cfg.scale_r, w * cfg.scale_r, batch);

  FeatureSet f;
  Tensor grid;
  if (cfg.uses_lr_ntl()) {
    Tensor x = n_l;
    if (cfg.has_alignment()) {
      Tensor loc = act(conv(s, "caa.loc.1", act(conv(s, "caa.loc.0", n_l, 2)), 2));
      f.warp_omega = reshape(conv(s, "caa.loc.fc", global_avg_pool(loc)), {n_l.dim(0), 2, 3});
      grid = affine_grid(f.warp_omega, h, w);
      x = grid_sample(n_l, grid);
      Tensor offsets = conv(s, "caa.defcan.offset", x);
      x = deformable_conv2d(x, offsets, s.param("caa.defcan.deform.weight"), s.param("caa.defcan.deform.bias"));
    } else {
      x = conv(s, "caa.defcan.deform", x);
    }
    f.f_ntl = conv(s, "caa.defcan.recon", act(x));
  }
  auto auxiliary = [&](const Tensor& input, const std::string& name) {
    Tensor x = downsample(s, "caa." + name + "_down", input, levels);
    if (grid.defined()) x = grid_sample(x, grid);
    return calibrate(s, "caa." + name + "_calib", x);
  };
  if (cfg.uses_dmo()) f.f_dmo = auxiliary(m_dmo, "dmo");
  if (cfg.uses_dem()) f.f_dem = auxiliary(m_dem, "dem");
  return f;
}

void amff_forward(const ModelState& s, FeatureSet& f) {
  const ModelConfig& cfg = s.config;
  // Missing modalities are substituted by the remaining features.
  const Tensor& aux_a = cfg.uses_dmo() ? f.f_dmo : f.f_dem;
  const Tensor& aux_b = cfg.uses_dem() ? f.f_dem : f.f_dmo;
  if (!aux_a.defined() || !aux_b.defined()) throw StateError("amff_forward: auxiliary features not populated");
  if (cfg.uses_lr_ntl() && !f.f_ntl.defined()) throw StateError("amff_forward: NTL features not populated");

  const CmfmOptions fusion{cfg.num_res_blocks, cfg.has_cross_fusion(), cfg.fusion_resize_divisor};
  f.f_aux_fused = cmfm(s, "amff.aux", aux_a, aux_b, fusion);
  const Tensor& main_b = cfg.uses_lr_ntl() ? f.f_ntl : f.f_aux_fused;
  f.f_main_fused = cmfm(s, "amff.main", f.f_aux_fused, main_b, fusion);
}

ForwardOutputs aer_forward(const ModelState& s, const Tensor& f_main, const Tensor& lr_skip) {
  const ModelConfig& cfg = s.config;
  if (f_main.rank() != 4 || f_main.dim(1) != cfg.base_channels) {
    throw DimensionError("aer_forward: expected N x " + std::to_string(cfg.base_channels) + " x h x w, got " +
                         shape_str(f_main.shape()));
  }
  ForwardOutputs out;
  Tensor x = f_main;
  for (int j = 0; j < cfg.num_scales_m; ++j) {
    const std::string js = std::to_string(j);
    x = act(pixel_shuffle(conv(s, "aer.up." + js, x), 2));
    if (cfg.has_multiscale_heads() || j == cfg.num_scales_m - 1) {
      Tensor y = conv(s, "aer.head." + js, x);
      if (lr_skip.defined()) y = add(y, resize_bilinear(lr_skip, y.dim(2), y.dim(3)));
      out.sr_pyramid.push_back(y);
    }
  }
  if (cfg.has_isp_head()) out.isp_logits = conv(s, "aer.isp", out.sr_pyramid.back());
  return out;
}

ForwardOutputs forward(const ModelState& s, const Tensor& n_l, const Tensor& m_dmo, const Tensor& m_dem) {
  FeatureSet f = caa_forward(s, n_l, m_dmo, m_dem);
  amff_forward(s, f);
  return aer_forward(s, f.f_main_fused, s.config.uses_lr_ntl() ? n_l : Tensor());
}

}  // namespace dl
