#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "deeplight/objective.hpp"
#include "test_support.hpp"

// Built against the 64-bit engine: the composite is a mean over many
// elements, so per-element differences of the scalar loss need double.
namespace dl {
namespace {

using testing::random_tensor;

// Straight-line half-pixel bilinear resize of one N x 1 x H x W plane set, in double.
std::vector<double> resize_ref(const Tensor& t, std::int64_t oh, std::int64_t ow) {
  const std::int64_t n = t.dim(0), ih = t.dim(2), iw = t.dim(3);
  std::vector<double> out(static_cast<std::size_t>(n * oh * ow));
  auto src = [](std::int64_t d, std::int64_t in, std::int64_t o) {
    return std::max(0.0, (d + 0.5) * static_cast<double>(in) / static_cast<double>(o) - 0.5);
  };
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t y = 0; y < oh; ++y) {
      const double sy = src(y, ih, oh);
      const std::int64_t y0 = std::min<std::int64_t>(static_cast<std::int64_t>(sy), ih - 1);
      const std::int64_t y1 = std::min<std::int64_t>(y0 + 1, ih - 1);
      const double fy = sy - y0;
      for (std::int64_t x = 0; x < ow; ++x) {
        const double sx = src(x, iw, ow);
        const std::int64_t x0 = std::min<std::int64_t>(static_cast<std::int64_t>(sx), iw - 1);
        const std::int64_t x1 = std::min<std::int64_t>(x0 + 1, iw - 1);
        const double fx = sx - x0;
        auto at = [&](std::int64_t yy, std::int64_t xx) {
          return static_cast<double>(t.data()[static_cast<std::size_t>((b * ih + yy) * iw + xx)]);
        };
        out[static_cast<std::size_t>((b * oh + y) * ow + x)] =
            (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x1)) + fy * ((1 - fx) * at(y1, x0) + fx * at(y1, x1));
      }
    }
  }
  return out;
}

struct Case {
  ForwardOutputs out;
  Tensor n_h, mask;
};

Case random_case(std::uint64_t seed, std::int64_t h = 4, bool grad = false) {
  std::mt19937_64 rng(seed);
  Case c;
  for (int j = 0; j < 3; ++j) {
    const std::int64_t s = h << (j + 1);
    c.out.sr_pyramid.push_back(random_tensor({2, 1, s, s}, rng, 0, 1, grad));
  }
  c.out.isp_logits = random_tensor({2, 1, h * 8, h * 8}, rng, -3, 3, grad);
  c.n_h = random_tensor({2, 1, h * 8, h * 8}, rng, 0, 1, false);
  c.mask = random_tensor({2, 1, h * 8, h * 8}, rng, 0, 1, false);
  for (auto& v : c.mask.data()) v = v > Scalar(0.7) ? 1 : 0;
  return c;
}

TEST(Composite, GradientMatchesFiniteDifferences) {
  Case c = random_case(8, 1, true);
  // Keep every prediction clear of its interpolated target so |.| has no kink nearby.
  for (auto& p : c.out.sr_pyramid) {
    const auto t = resize_ref(c.n_h, p.dim(2), p.dim(3));
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double d = p.data()[i] - t[i];
      if (std::abs(d) < 0.05) p.data()[i] = static_cast<Scalar>(t[i] + (d < 0 ? -0.05 : 0.05));
    }
  }
  std::vector<Tensor> inputs = c.out.sr_pyramid;
  inputs.push_back(c.out.isp_logits);
  const Tensor n_h = c.n_h, mask = c.mask;
  auto f = [&](const std::vector<Tensor>& in) {
    ForwardOutputs o;
    o.sr_pyramid.assign(in.begin(), in.begin() + 3);
    o.isp_logits = in[3];
    return composite(o, n_h, mask, LossConfig{}).total;
  };
  const auto r = testing::gradcheck(f, inputs, {true, true, true, true}, 1e-3);
  EXPECT_LT(r.max_relative_error, 1e-3) << "input " << r.worst_input;
}

}  // namespace
}  // namespace dl
