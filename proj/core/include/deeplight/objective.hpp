#pragma once

#include <vector>

#include "deeplight/model.hpp"

namespace dl {

struct LossConfig {
  double alpha = 0.8;                      // weight of the reconstruction term
  std::vector<double> betas{0.2, 0.3, 0.5};  // per-scale weights, coarse to fine
  double bce_epsilon = 1e-6;

  // Throws ConfigError naming the offending field.
  void validate(int num_scales_m) const;
};

/// sum_j beta_j * mean|pyramid_j - resize(n_h, size_j)|
Tensor multiscale_l1(const ForwardOutputs& outputs, const Tensor& n_h, const std::vector<double>& betas);

/// Mean binary cross-entropy of sigmoid(isp_logits) against a {0,1} mask.
Tensor isp_bce(const Tensor& isp_logits, const Tensor& m_isp, double epsilon);

struct LossTerms {
  Tensor total;
  Tensor l1;                     // weighted multi-scale term
  Tensor bce;                    // undefined when the ISP head is absent
  std::vector<double> per_scale; // unweighted mean |error| per emitted scale
  double alpha = 1.0;            // alpha actually applied
};

/// alpha * L1 + (1 - alpha) * BCE. Without an ISP prediction the BCE term is
/// dropped and alpha is forced to 1. A single-scale pyramid uses beta = {1}.
LossTerms composite(const ForwardOutputs& outputs, const Tensor& n_h, const Tensor& m_isp, const LossConfig& cfg);

/// Betas matching the number of emitted scales.
std::vector<double> effective_betas(const LossConfig& cfg, std::size_t pyramid_size);

}  // namespace dl
