#include "deeplight/objective.hpp"

#include <cmath>

namespace dl {

void LossConfig::validate(int num_scales_m) const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("loss.alpha must lie in [0, 1], got " + std::to_string(alpha));
  if (static_cast<int>(betas.size()) != num_scales_m) {
    throw ConfigError("loss.betas has " + std::to_string(betas.size()) + " entries but model.num_scales_m is " +
                      std::to_string(num_scales_m));
  }
  double total = 0.0;
  for (double b : betas) {
    if (!(b >= 0.0)) throw ConfigError("loss.betas entries must be non-negative");
    total += b;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("loss.betas must sum to 1, got " + std::to_string(total));
  if (!(bce_epsilon > 0.0 && bce_epsilon <= 1e-3)) {
    throw ConfigError("loss.bce_epsilon must lie in (0, 1e-3], got " + std::to_string(bce_epsilon));
  }
}

std::vector<double> effective_betas(const LossConfig& cfg, std::size_t pyramid_size) {
  if (pyramid_size == cfg.betas.size()) return cfg.betas;
  if (pyramid_size == 1) return {1.0};
  throw ConfigError("loss.betas has " + std::to_string(cfg.betas.size()) + " entries for a " +
                    std::to_string(pyramid_size) + "-scale pyramid");
}

namespace {

Tensor scale_l1(const Tensor& pred, const Tensor& n_h) {
  if (pred.rank() != 4 || n_h.rank() != 4 || pred.dim(0) != n_h.dim(0) || pred.dim(1) != n_h.dim(1)) {
    throw DimensionError("multiscale_l1: prediction " + shape_str(pred.shape()) + " incompatible with target " +
                         shape_str(n_h.shape()));
  }
  const Tensor target = resize_bilinear(n_h, pred.dim(2), pred.dim(3));
  return mean(abs(sub(pred, target)));
}

}  // namespace

Tensor multiscale_l1(const ForwardOutputs& outputs, const Tensor& n_h, const std::vector<double>& betas) {
  if (outputs.sr_pyramid.size() != betas.size()) {
    throw ConfigError("multiscale_l1: " + std::to_string(outputs.sr_pyramid.size()) + " predictions but " +
                      std::to_string(betas.size()) + " betas");
  }
  if (betas.empty()) throw ConfigError("multiscale_l1: empty pyramid");
  Tensor total;
  for (std::size_t j = 0; j < betas.size(); ++j) {
    Tensor term = mul_scalar(scale_l1(outputs.sr_pyramid[j], n_h), static_cast<Scalar>(betas[j]));
    total = total.defined() ? add(total, term) : term;
  }
  return total;
}

Tensor isp_bce(const Tensor& isp_logits, const Tensor& m_isp, double epsilon) {
  if (isp_logits.shape() != m_isp.shape()) {
    throw DimensionError("isp_bce: logits " + shape_str(isp_logits.shape()) + " vs mask " +
                         shape_str(m_isp.shape()));
  }
  auto t = m_isp.data();
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] != Scalar(0) && t[i] != Scalar(1)) {
      throw DataError("isp_bce: mask value " + std::to_string(t[i]) + " at index " + std::to_string(i) +
                      " is not binary");
    }
  }
  return binary_cross_entropy(sigmoid(isp_logits), m_isp, epsilon);
}

LossTerms composite(const ForwardOutputs& outputs, const Tensor& n_h, const Tensor& m_isp, const LossConfig& cfg) {
  LossTerms terms;
  const std::vector<double> betas = effective_betas(cfg, outputs.sr_pyramid.size());
  Tensor total;
  for (std::size_t j = 0; j < betas.size(); ++j) {
    Tensor term = scale_l1(outputs.sr_pyramid[j], n_h);
    terms.per_scale.push_back(static_cast<double>(term.item()));
    Tensor weighted = mul_scalar(term, static_cast<Scalar>(betas[j]));
    total = total.defined() ? add(total, weighted) : weighted;
  }
  terms.l1 = total;
  if (!outputs.isp_logits.defined()) {
    terms.alpha = 1.0;
    terms.total = terms.l1;
    return terms;
  }
  terms.alpha = cfg.alpha;
  terms.bce = isp_bce(outputs.isp_logits, m_isp, cfg.bce_epsilon);
  // Exact at both boundaries (x * 1 + 0 and 0 + x), and keeps every head in the graph.
  terms.total = add(mul_scalar(terms.l1, static_cast<Scalar>(cfg.alpha)),
                    mul_scalar(terms.bce, static_cast<Scalar>(1.0 - cfg.alpha)));
  return terms;
}

}  // namespace dl
