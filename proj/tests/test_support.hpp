#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "deeplight/ops.hpp"

namespace dl::testing {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0,
                            bool requires_grad = true) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<Scalar> values(static_cast<std::size_t>(numel_of(shape)));
  for (auto& v : values) v = static_cast<Scalar>(dist(rng));
  return Tensor::from(std::move(shape), std::move(values), requires_grad);
}

// Pushes every value at least `margin` away from zero (kinks of abs/leaky_relu).
inline void keep_away_from_zero(Tensor& t, double margin) {
  for (auto& v : t.data()) {
    if (std::abs(v) < margin) v = static_cast<Scalar>(v < 0 ? -margin : margin);
  }
}

// Pushes fractional parts of `scale * v + shift` into [margin, 1 - margin]
// so bilinear interpolation stays on one smooth patch under perturbation.
inline void keep_off_integer_lattice(Tensor& t, double scale, double shift, double margin) {
  for (auto& v : t.data()) {
    const double p = scale * v + shift;
    const double frac = p - std::floor(p);
    double adjusted = p;
    if (frac < margin) adjusted = std::floor(p) + margin;
    if (frac > 1 - margin) adjusted = std::floor(p) + 1 - margin;
    v = static_cast<Scalar>((adjusted - shift) / scale);
  }
}

struct GradCheckResult {
  double max_relative_error = 0.0;   // per input, norm-wise
  std::size_t worst_input = 0;
};

// Central-difference gradient check of the scalar functional
// L(inputs) = sum_k w_k * f(inputs)_k with fixed random weights w. The
// numeric side evaluates L in double from the forward outputs only.
inline GradCheckResult gradcheck(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                                 std::vector<Tensor> inputs, std::vector<bool> check, double eps,
                                 std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  Tensor probe = f(inputs);
  Tensor weights = random_tensor(probe.shape(), rng, -1.0, 1.0, false);
  auto functional = [&](const std::vector<Tensor>& in) {
    Tensor out = f(in);
    double acc = 0.0;
    for (std::int64_t i = 0; i < out.numel(); ++i) {
      acc += static_cast<double>(out.data()[i]) * static_cast<double>(weights.data()[i]);
    }
    return acc;
  };

  for (auto& t : inputs) t.zero_grad();
  backward(sum(mul(f(inputs), weights)));

  GradCheckResult result;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    if (!check[k]) continue;
    std::vector<double> analytic(inputs[k].data().size(), 0.0);
    if (inputs[k].has_grad()) {
      for (std::size_t i = 0; i < analytic.size(); ++i) analytic[i] = inputs[k].grad()[i];
    }
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      Scalar& v = inputs[k].data()[i];
      const Scalar saved = v;
      v = static_cast<Scalar>(saved + eps);
      const double x_up = v;
      const double up = functional(inputs);
      v = static_cast<Scalar>(saved - eps);
      const double x_down = v;
      const double down = functional(inputs);
      v = saved;
      const double numeric = (up - down) / (x_up - x_down);
      diff2 += (numeric - analytic[i]) * (numeric - analytic[i]);
      a2 += analytic[i] * analytic[i];
      n2 += numeric * numeric;
    }
    const double denom = std::max({std::sqrt(a2), std::sqrt(n2), 1e-12});
    const double rel = std::sqrt(diff2) / denom;
    if (rel > result.max_relative_error) {
      result.max_relative_error = rel;
      result.worst_input = k;
    }
  }
  return result;
}

}  // namespace dl::testing
