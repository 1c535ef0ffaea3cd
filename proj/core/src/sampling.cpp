#include <cmath>

#include "deeplight/ops.hpp"

namespace dl {
namespace {

inline Scalar normalized_coord(std::int64_t i, std::int64_t size) {
  return static_cast<Scalar>(2 * i + 1) / static_cast<Scalar>(size) - Scalar(1);
}

// Inverse of normalized_coord: maps [-1, 1] to pixel-index space.
inline Scalar unnormalize(Scalar v, std::int64_t size) {
  return ((v + Scalar(1)) * static_cast<Scalar>(size) - Scalar(1)) / Scalar(2);
}

}  // namespace

Tensor affine_grid(const Tensor& theta, std::int64_t out_h, std::int64_t out_w) {
  if (theta.rank() != 3 || theta.dim(1) != 2 || theta.dim(2) != 3) {
    throw DimensionError("affine_grid: theta must be N x 2 x 3, got " + shape_str(theta.shape()));
  }
  if (out_h < 1 || out_w < 1) throw DimensionError("affine_grid: output size must be positive");
  const std::int64_t n_batch = theta.dim(0);
  std::vector<Scalar> grid(static_cast<std::size_t>(n_batch * out_h * out_w * 2));
  auto th = theta.data();
  for (std::int64_t n = 0; n < n_batch; ++n) {
    const Scalar* t = th.data() + n * 6;
    for (std::int64_t i = 0; i < out_h; ++i) {
      const Scalar y = normalized_coord(i, out_h);
      for (std::int64_t j = 0; j < out_w; ++j) {
        const Scalar x = normalized_coord(j, out_w);
        Scalar* g = grid.data() + ((n * out_h + i) * out_w + j) * 2;
        g[0] = t[0] * x + t[1] * y + t[2];
        g[1] = t[3] * x + t[4] * y + t[5];
      }
    }
  }
  Tensor theta_c = theta;
  return make_result({n_batch, out_h, out_w, 2}, std::move(grid), "affine_grid", {theta},
                     [theta_c, n_batch, out_h, out_w](std::span<const Scalar> g) mutable {
                       auto gt = theta_c.grad_buffer();
                       for (std::int64_t n = 0; n < n_batch; ++n) {
                         double acc[6] = {0, 0, 0, 0, 0, 0};
                         for (std::int64_t i = 0; i < out_h; ++i) {
                           const double y = normalized_coord(i, out_h);
                           for (std::int64_t j = 0; j < out_w; ++j) {
                             const double x = normalized_coord(j, out_w);
                             const Scalar* gg = g.data() + ((n * out_h + i) * out_w + j) * 2;
                             acc[0] += gg[0] * x;
                             acc[1] += gg[0] * y;
                             acc[2] += gg[0];
                             acc[3] += gg[1] * x;
                             acc[4] += gg[1] * y;
                             acc[5] += gg[1];
                           }
                         }
                         for (int k = 0; k < 6; ++k) gt[n * 6 + k] += static_cast<Scalar>(acc[k]);
                       }
                     });
}

Tensor grid_sample(const Tensor& input, const Tensor& grid) {
  if (input.rank() != 4) throw DimensionError("grid_sample: input must be NCHW, got " + shape_str(input.shape()));
  if (grid.rank() != 4 || grid.dim(3) != 2) {
    throw DimensionError("grid_sample: grid must be N x H x W x 2, got " + shape_str(grid.shape()));
  }
  if (grid.dim(0) != input.dim(0)) {
    throw DimensionError("grid_sample: grid batch " + std::to_string(grid.dim(0)) + " != input batch " +
                         std::to_string(input.dim(0)));
  }
  const std::int64_t n_batch = input.dim(0), channels = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::int64_t oh = grid.dim(1), ow = grid.dim(2);
  std::vector<Scalar> out(static_cast<std::size_t>(n_batch * channels * oh * ow));
  auto in = input.data();
  auto gd = grid.data();
  for (std::int64_t n = 0; n < n_batch; ++n) {
    for (std::int64_t p = 0; p < oh * ow; ++p) {
      const Scalar* g = gd.data() + (n * oh * ow + p) * 2;
      const Scalar ix = unnormalize(g[0], w);
      const Scalar iy = unnormalize(g[1], h);
      const Scalar fx = std::floor(ix), fy = std::floor(iy);
      const std::int64_t x0 = static_cast<std::int64_t>(fx), y0 = static_cast<std::int64_t>(fy);
      const Scalar lx = ix - fx, ly = iy - fy;
      const Scalar wts[4] = {(1 - ly) * (1 - lx), (1 - ly) * lx, ly * (1 - lx), ly * lx};
      const std::int64_t ys[4] = {y0, y0, y0 + 1, y0 + 1};
      const std::int64_t xs[4] = {x0, x0 + 1, x0, x0 + 1};
      for (std::int64_t c = 0; c < channels; ++c) {
        const Scalar* plane = in.data() + (n * channels + c) * h * w;
        Scalar acc = 0;
        for (int k = 0; k < 4; ++k) {
          if (ys[k] >= 0 && ys[k] < h && xs[k] >= 0 && xs[k] < w) acc += wts[k] * plane[ys[k] * w + xs[k]];
        }
        out[(n * channels + c) * oh * ow + p] = acc;
      }
    }
  }
  Tensor in_c = input, grid_c = grid;
  return make_result(
      {n_batch, channels, oh, ow}, std::move(out), "grid_sample", {input, grid},
      [in_c, grid_c, n_batch, channels, h, w, oh, ow](std::span<const Scalar> gout) mutable {
        Scalar* gi = in_c.requires_grad() ? in_c.grad_buffer().data() : nullptr;
        Scalar* gg = grid_c.requires_grad() ? grid_c.grad_buffer().data() : nullptr;
        auto in = in_c.data();
        auto gd = grid_c.data();
        for (std::int64_t n = 0; n < n_batch; ++n) {
          for (std::int64_t p = 0; p < oh * ow; ++p) {
            const Scalar* g = gd.data() + (n * oh * ow + p) * 2;
            const Scalar ix = unnormalize(g[0], w);
            const Scalar iy = unnormalize(g[1], h);
            const Scalar fx = std::floor(ix), fy = std::floor(iy);
            const std::int64_t x0 = static_cast<std::int64_t>(fx), y0 = static_cast<std::int64_t>(fy);
            const Scalar lx = ix - fx, ly = iy - fy;
            const Scalar wts[4] = {(1 - ly) * (1 - lx), (1 - ly) * lx, ly * (1 - lx), ly * lx};
            const std::int64_t ys[4] = {y0, y0, y0 + 1, y0 + 1};
            const std::int64_t xs[4] = {x0, x0 + 1, x0, x0 + 1};
            bool ok[4];
            for (int k = 0; k < 4; ++k) ok[k] = ys[k] >= 0 && ys[k] < h && xs[k] >= 0 && xs[k] < w;
            double dix = 0, diy = 0;
            for (std::int64_t c = 0; c < channels; ++c) {
              const std::int64_t plane_off = (n * channels + c) * h * w;
              const Scalar go = gout[(n * channels + c) * oh * ow + p];
              if (go == 0) continue;
              Scalar v[4];
              for (int k = 0; k < 4; ++k) {
                v[k] = ok[k] ? in[plane_off + ys[k] * w + xs[k]] : Scalar(0);
                if (ok[k] && gi != nullptr) gi[plane_off + ys[k] * w + xs[k]] += go * wts[k];
              }
              dix += go * ((1 - ly) * (v[1] - v[0]) + ly * (v[3] - v[2]));
              diy += go * ((1 - lx) * (v[2] - v[0]) + lx * (v[3] - v[1]));
            }
            if (gg != nullptr) {
              Scalar* ggp = gg + (n * oh * ow + p) * 2;
              ggp[0] += static_cast<Scalar>(dix * static_cast<double>(w) / 2.0);
              ggp[1] += static_cast<Scalar>(diy * static_cast<double>(h) / 2.0);
            }
          }
        }
      });
}

namespace {

struct ResizeTap {
  std::int64_t i0, i1;
  Scalar l1;  // weight on i1
};

std::vector<ResizeTap> resize_taps(std::int64_t in_size, std::int64_t out_size) {
  std::vector<ResizeTap> taps(static_cast<std::size_t>(out_size));
  const double scale = static_cast<double>(in_size) / static_cast<double>(out_size);
  for (std::int64_t d = 0; d < out_size; ++d) {
    double src = (static_cast<double>(d) + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    std::int64_t i0 = static_cast<std::int64_t>(std::floor(src));
    if (i0 > in_size - 1) i0 = in_size - 1;
    const std::int64_t i1 = std::min(i0 + 1, in_size - 1);
    taps[d] = {i0, i1, static_cast<Scalar>(src - static_cast<double>(i0))};
  }
  return taps;
}

}  // namespace

Tensor resize_bilinear(const Tensor& input, std::int64_t out_h, std::int64_t out_w) {
  if (input.rank() != 4) throw DimensionError("resize_bilinear: input must be NCHW, got " + shape_str(input.shape()));
  if (out_h < 1 || out_w < 1) throw DimensionError("resize_bilinear: output size must be >= 1");
  const std::int64_t planes = input.dim(0) * input.dim(1), h = input.dim(2), w = input.dim(3);
  if (out_h == h && out_w == w) return input;

  const auto ty = resize_taps(h, out_h);
  const auto tx = resize_taps(w, out_w);
  std::vector<Scalar> out(static_cast<std::size_t>(planes * out_h * out_w));
  auto in = input.data();
  for (std::int64_t pl = 0; pl < planes; ++pl) {
    const Scalar* src = in.data() + pl * h * w;
    Scalar* dst = out.data() + pl * out_h * out_w;
    for (std::int64_t y = 0; y < out_h; ++y) {
      const ResizeTap& a = ty[y];
      for (std::int64_t x = 0; x < out_w; ++x) {
        const ResizeTap& b = tx[x];
        const Scalar top = (1 - b.l1) * src[a.i0 * w + b.i0] + b.l1 * src[a.i0 * w + b.i1];
        const Scalar bot = (1 - b.l1) * src[a.i1 * w + b.i0] + b.l1 * src[a.i1 * w + b.i1];
        dst[y * out_w + x] = (1 - a.l1) * top + a.l1 * bot;
      }
    }
  }
  Tensor in_c = input;
  return make_result({input.dim(0), input.dim(1), out_h, out_w}, std::move(out), "resize_bilinear", {input},
                     [in_c, ty, tx, planes, h, w, out_h, out_w](std::span<const Scalar> g) mutable {
                       auto gi = in_c.grad_buffer();
                       for (std::int64_t pl = 0; pl < planes; ++pl) {
                         Scalar* dst = gi.data() + pl * h * w;
                         const Scalar* go = g.data() + pl * out_h * out_w;
                         for (std::int64_t y = 0; y < out_h; ++y) {
                           const ResizeTap& a = ty[y];
                           for (std::int64_t x = 0; x < out_w; ++x) {
                             const ResizeTap& b = tx[x];
                             const Scalar v = go[y * out_w + x];
                             dst[a.i0 * w + b.i0] += v * (1 - a.l1) * (1 - b.l1);
                             dst[a.i0 * w + b.i1] += v * (1 - a.l1) * b.l1;
                             dst[a.i1 * w + b.i0] += v * a.l1 * (1 - b.l1);
                             dst[a.i1 * w + b.i1] += v * a.l1 * b.l1;
                           }
                         }
                       }
                     });
}

}  // namespace dl
