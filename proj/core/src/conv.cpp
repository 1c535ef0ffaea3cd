#include <cmath>

#include <Eigen/Core>

#include "deeplight/ops.hpp"

namespace dl {
namespace {

using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

struct ConvGeometry {
  std::int64_t batch, in_c, in_h, in_w;
  std::int64_t out_c, k_h, k_w;
  std::int64_t out_h, out_w;
  int stride, pad;

  std::int64_t patch() const { return in_c * k_h * k_w; }
  std::int64_t pixels() const { return out_h * out_w; }
};

ConvGeometry check_conv(const Tensor& input, const Tensor& weight, const std::optional<Tensor>& bias,
                        int stride, int padding, const char* op) {
  if (input.rank() != 4) throw DimensionError(std::string(op) + ": input must be NCHW, got " + shape_str(input.shape()));
  if (weight.rank() != 4) throw DimensionError(std::string(op) + ": weight must be OIKhKw, got " + shape_str(weight.shape()));
  if (stride < 1) throw DimensionError(std::string(op) + ": stride must be positive");
  if (padding < 0) throw DimensionError(std::string(op) + ": padding must be non-negative");
  ConvGeometry g{};
  g.batch = input.dim(0);
  g.in_c = input.dim(1);
  g.in_h = input.dim(2);
  g.in_w = input.dim(3);
  g.out_c = weight.dim(0);
  g.k_h = weight.dim(2);
  g.k_w = weight.dim(3);
  g.stride = stride;
  g.pad = padding;
  if (weight.dim(1) != g.in_c) {
    throw DimensionError(std::string(op) + ": input has " + std::to_string(g.in_c) +
                         " channels but weight expects " + std::to_string(weight.dim(1)) + " (weight " +
                         shape_str(weight.shape()) + ")");
  }
  if (g.k_h > g.in_h + 2 * padding || g.k_w > g.in_w + 2 * padding) {
    throw DimensionError(std::string(op) + ": kernel " + shape_str(weight.shape()) +
                         " larger than padded input " + shape_str(input.shape()));
  }
  if (bias && (bias->rank() != 1 || bias->dim(0) != g.out_c)) {
    throw DimensionError(std::string(op) + ": bias shape " + shape_str(bias->shape()) + " does not match " +
                         std::to_string(g.out_c) + " output channels");
  }
  g.out_h = (g.in_h + 2 * padding - g.k_h) / stride + 1;
  g.out_w = (g.in_w + 2 * padding - g.k_w) / stride + 1;
  return g;
}

// cols[(c*Kh + kh)*Kw + kw][oh*Wo + ow] for one batch item.
void im2col(const Scalar* in, const ConvGeometry& g, Scalar* cols) {
  for (std::int64_t c = 0; c < g.in_c; ++c) {
    const Scalar* plane = in + c * g.in_h * g.in_w;
    for (std::int64_t kh = 0; kh < g.k_h; ++kh) {
      for (std::int64_t kw = 0; kw < g.k_w; ++kw) {
        Scalar* row = cols + ((c * g.k_h + kh) * g.k_w + kw) * g.pixels();
        for (std::int64_t oh = 0; oh < g.out_h; ++oh) {
          const std::int64_t y = oh * g.stride - g.pad + kh;
          Scalar* dst = row + oh * g.out_w;
          if (y < 0 || y >= g.in_h) {
            std::fill_n(dst, g.out_w, Scalar(0));
            continue;
          }
          const Scalar* src = plane + y * g.in_w;
          for (std::int64_t ow = 0; ow < g.out_w; ++ow) {
            const std::int64_t x = ow * g.stride - g.pad + kw;
            dst[ow] = (x >= 0 && x < g.in_w) ? src[x] : Scalar(0);
          }
        }
      }
    }
  }
}

void col2im(const Scalar* cols, const ConvGeometry& g, Scalar* grad_in) {
  for (std::int64_t c = 0; c < g.in_c; ++c) {
    Scalar* plane = grad_in + c * g.in_h * g.in_w;
    for (std::int64_t kh = 0; kh < g.k_h; ++kh) {
      for (std::int64_t kw = 0; kw < g.k_w; ++kw) {
        const Scalar* row = cols + ((c * g.k_h + kh) * g.k_w + kw) * g.pixels();
        for (std::int64_t oh = 0; oh < g.out_h; ++oh) {
          const std::int64_t y = oh * g.stride - g.pad + kh;
          if (y < 0 || y >= g.in_h) continue;
          const Scalar* src = row + oh * g.out_w;
          Scalar* dst = plane + y * g.in_w;
          for (std::int64_t ow = 0; ow < g.out_w; ++ow) {
            const std::int64_t x = ow * g.stride - g.pad + kw;
            if (x >= 0 && x < g.in_w) dst[x] += src[ow];
          }
        }
      }
    }
  }
}

// out (O x P) = weight (O x K) * cols (K x P) + bias. Shared by the plain and
// deformable paths so identical columns give bit-identical outputs.
void gemm_forward(const Scalar* weight, const Scalar* cols, const Scalar* bias, const ConvGeometry& g,
                  Scalar* out) {
  ConstMatrixMap w(weight, g.out_c, g.patch());
  ConstMatrixMap c(cols, g.patch(), g.pixels());
  MatrixMap o(out, g.out_c, g.pixels());
  o.noalias() = w * c;
  if (bias != nullptr) {
    for (std::int64_t oc = 0; oc < g.out_c; ++oc) o.row(oc).array() += bias[oc];
  }
}

// Weight / bias gradients and the column gradient for one batch item.
void gemm_backward(const Scalar* grad_out, const Scalar* cols, const Scalar* weight, const ConvGeometry& g,
                   Scalar* grad_weight, Scalar* grad_bias, Scalar* grad_cols, bool accumulate_cols = false) {
  ConstMatrixMap go(grad_out, g.out_c, g.pixels());
  if (grad_weight != nullptr) {
    ConstMatrixMap c(cols, g.patch(), g.pixels());
    MatrixMap gw(grad_weight, g.out_c, g.patch());
    gw.noalias() += go * c.transpose();
  }
  if (grad_bias != nullptr) {
    for (std::int64_t oc = 0; oc < g.out_c; ++oc) {
      double acc = 0.0;
      for (std::int64_t p = 0; p < g.pixels(); ++p) acc += go(oc, p);
      grad_bias[oc] += static_cast<Scalar>(acc);
    }
  }
  if (grad_cols != nullptr) {
    ConstMatrixMap w(weight, g.out_c, g.patch());
    MatrixMap gc(grad_cols, g.patch(), g.pixels());
    if (accumulate_cols) {
      gc.noalias() += w.transpose() * go;
    } else {
      gc.noalias() = w.transpose() * go;
    }
  }
}

// Bilinear read with zero padding outside [0, H) x [0, W).
struct BilinearTap {
  std::int64_t y0, x0;
  Scalar ly, lx;
  bool inside;
};

inline BilinearTap bilinear_tap(Scalar y, Scalar x, std::int64_t h, std::int64_t w) {
  BilinearTap t{};
  t.inside = !(y <= -1 || y >= h || x <= -1 || x >= w);
  if (!t.inside) return t;
  const Scalar fy = std::floor(y);
  const Scalar fx = std::floor(x);
  t.y0 = static_cast<std::int64_t>(fy);
  t.x0 = static_cast<std::int64_t>(fx);
  t.ly = y - fy;
  t.lx = x - fx;
  return t;
}

inline Scalar pixel_or_zero(const Scalar* plane, std::int64_t y, std::int64_t x, std::int64_t h, std::int64_t w) {
  return (y >= 0 && y < h && x >= 0 && x < w) ? plane[y * w + x] : Scalar(0);
}

inline Scalar bilinear_value(const Scalar* plane, const BilinearTap& t, std::int64_t h, std::int64_t w) {
  if (!t.inside) return Scalar(0);
  const Scalar hy = 1 - t.ly, hx = 1 - t.lx;
  const Scalar v00 = pixel_or_zero(plane, t.y0, t.x0, h, w);
  const Scalar v01 = pixel_or_zero(plane, t.y0, t.x0 + 1, h, w);
  const Scalar v10 = pixel_or_zero(plane, t.y0 + 1, t.x0, h, w);
  const Scalar v11 = pixel_or_zero(plane, t.y0 + 1, t.x0 + 1, h, w);
  return hy * hx * v00 + hy * t.lx * v01 + t.ly * hx * v10 + t.ly * t.lx * v11;
}

void deform_im2col(const Scalar* in, const Scalar* offsets, const ConvGeometry& g, Scalar* cols) {
  const std::int64_t taps = g.k_h * g.k_w;
  for (std::int64_t c = 0; c < g.in_c; ++c) {
    const Scalar* plane = in + c * g.in_h * g.in_w;
    for (std::int64_t kh = 0; kh < g.k_h; ++kh) {
      for (std::int64_t kw = 0; kw < g.k_w; ++kw) {
        const std::int64_t tap = kh * g.k_w + kw;
        const Scalar* off_y = offsets + (2 * tap) * g.pixels();
        const Scalar* off_x = offsets + (2 * tap + 1) * g.pixels();
        Scalar* row = cols + (c * taps + tap) * g.pixels();
        for (std::int64_t oh = 0; oh < g.out_h; ++oh) {
          for (std::int64_t ow = 0; ow < g.out_w; ++ow) {
            const std::int64_t p = oh * g.out_w + ow;
            const Scalar y = static_cast<Scalar>(oh - g.pad + kh) + off_y[p];
            const Scalar x = static_cast<Scalar>(ow - g.pad + kw) + off_x[p];
            row[p] = bilinear_value(plane, bilinear_tap(y, x, g.in_h, g.in_w), g.in_h, g.in_w);
          }
        }
      }
    }
  }
}

// Scatters column gradients back to the input and to the offsets.
void deform_col2im(const Scalar* grad_cols, const Scalar* in, const Scalar* offsets, const ConvGeometry& g,
                   Scalar* grad_in, Scalar* grad_off) {
  const std::int64_t taps = g.k_h * g.k_w;
  const std::int64_t h = g.in_h, w = g.in_w;
  for (std::int64_t c = 0; c < g.in_c; ++c) {
    const Scalar* plane = in + c * h * w;
    Scalar* gplane = grad_in != nullptr ? grad_in + c * h * w : nullptr;
    for (std::int64_t tap = 0; tap < taps; ++tap) {
      const std::int64_t kh = tap / g.k_w, kw = tap % g.k_w;
      const Scalar* off_y = offsets + (2 * tap) * g.pixels();
      const Scalar* off_x = offsets + (2 * tap + 1) * g.pixels();
      Scalar* goff_y = grad_off != nullptr ? grad_off + (2 * tap) * g.pixels() : nullptr;
      Scalar* goff_x = grad_off != nullptr ? grad_off + (2 * tap + 1) * g.pixels() : nullptr;
      const Scalar* row = grad_cols + (c * taps + tap) * g.pixels();
      for (std::int64_t oh = 0; oh < g.out_h; ++oh) {
        for (std::int64_t ow = 0; ow < g.out_w; ++ow) {
          const std::int64_t p = oh * g.out_w + ow;
          const Scalar gv = row[p];
          if (gv == 0) continue;
          const Scalar y = static_cast<Scalar>(oh - g.pad + kh) + off_y[p];
          const Scalar x = static_cast<Scalar>(ow - g.pad + kw) + off_x[p];
          const BilinearTap t = bilinear_tap(y, x, h, w);
          if (!t.inside) continue;
          const Scalar hy = 1 - t.ly, hx = 1 - t.lx;
          const std::int64_t ys[2] = {t.y0, t.y0 + 1};
          const std::int64_t xs[2] = {t.x0, t.x0 + 1};
          const Scalar wy[2] = {hy, t.ly};
          const Scalar wx[2] = {hx, t.lx};
          Scalar v[2][2];
          for (int a = 0; a < 2; ++a) {
            for (int b = 0; b < 2; ++b) {
              const bool ok = ys[a] >= 0 && ys[a] < h && xs[b] >= 0 && xs[b] < w;
              v[a][b] = ok ? plane[ys[a] * w + xs[b]] : Scalar(0);
              if (ok && gplane != nullptr) gplane[ys[a] * w + xs[b]] += gv * wy[a] * wx[b];
            }
          }
          if (goff_y != nullptr) {
            goff_y[p] += gv * (hx * (v[1][0] - v[0][0]) + t.lx * (v[1][1] - v[0][1]));
            goff_x[p] += gv * (hy * (v[0][1] - v[0][0]) + t.ly * (v[1][1] - v[1][0]));
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const std::optional<Tensor>& bias, int stride,
              int padding) {
  const ConvGeometry g = check_conv(input, weight, bias, stride, padding, "conv2d");
  const std::int64_t in_item = g.in_c * g.in_h * g.in_w;
  const std::int64_t out_item = g.out_c * g.pixels();
  std::vector<Scalar> out(static_cast<std::size_t>(g.batch * out_item));
  const bool pointwise = g.k_h == 1 && g.k_w == 1 && g.stride == 1 && g.pad == 0;
  std::vector<Scalar> cols(pointwise ? 0 : static_cast<std::size_t>(g.patch() * g.pixels()));
  const Scalar* bias_ptr = bias ? bias->data().data() : nullptr;
  for (std::int64_t n = 0; n < g.batch; ++n) {
    const Scalar* item = input.data().data() + n * in_item;
    if (!pointwise) im2col(item, g, cols.data());
    gemm_forward(weight.data().data(), pointwise ? item : cols.data(), bias_ptr, g, out.data() + n * out_item);
  }

  Tensor in_c = input, w_c = weight;
  Tensor b_c = bias ? *bias : Tensor();
  std::vector<Tensor> inputs{input, weight};
  if (bias) inputs.push_back(*bias);
  return make_result(
      {g.batch, g.out_c, g.out_h, g.out_w}, std::move(out), "conv2d", std::move(inputs),
      [in_c, w_c, b_c, g, in_item, out_item, pointwise](std::span<const Scalar> grad) mutable {
        Scalar* gw = w_c.requires_grad() ? w_c.grad_buffer().data() : nullptr;
        Scalar* gb = (b_c.defined() && b_c.requires_grad()) ? b_c.grad_buffer().data() : nullptr;
        Scalar* gi = in_c.requires_grad() ? in_c.grad_buffer().data() : nullptr;
        if (pointwise) {
          // Columns are the input itself.
          for (std::int64_t n = 0; n < g.batch; ++n) {
            gemm_backward(grad.data() + n * out_item, in_c.data().data() + n * in_item, w_c.data().data(), g, gw,
                          gb, gi != nullptr ? gi + n * in_item : nullptr, true);
          }
          return;
        }
        std::vector<Scalar> cols(static_cast<std::size_t>(g.patch() * g.pixels()));
        std::vector<Scalar> grad_cols;
        if (gi != nullptr) grad_cols.resize(cols.size());
        for (std::int64_t n = 0; n < g.batch; ++n) {
          if (gw != nullptr) im2col(in_c.data().data() + n * in_item, g, cols.data());
          gemm_backward(grad.data() + n * out_item, cols.data(), w_c.data().data(), g, gw, gb,
                        gi != nullptr ? grad_cols.data() : nullptr);
          if (gi != nullptr) col2im(grad_cols.data(), g, gi + n * in_item);
        }
      });
}

Tensor deformable_conv2d(const Tensor& input, const Tensor& offsets, const Tensor& weight,
                         const std::optional<Tensor>& bias) {
  if (weight.rank() == 4 && (weight.dim(2) % 2 == 0 || weight.dim(3) % 2 == 0)) {
    throw DimensionError("deformable_conv2d: kernel must have odd extents, got " + shape_str(weight.shape()));
  }
  const int pad = weight.rank() == 4 ? static_cast<int>(weight.dim(2) / 2) : 0;
  if (weight.rank() == 4 && weight.dim(2) != weight.dim(3)) {
    throw DimensionError("deformable_conv2d: kernel must be square, got " + shape_str(weight.shape()));
  }
  const ConvGeometry g = check_conv(input, weight, bias, 1, pad, "deformable_conv2d");
  const std::int64_t taps = g.k_h * g.k_w;
  if (offsets.rank() != 4 || offsets.dim(0) != g.batch || offsets.dim(1) != 2 * taps ||
      offsets.dim(2) != g.out_h || offsets.dim(3) != g.out_w) {
    throw DimensionError("deformable_conv2d: offsets must be " +
                         shape_str({g.batch, 2 * taps, g.out_h, g.out_w}) + ", got " +
                         shape_str(offsets.shape()));
  }
  const std::int64_t in_item = g.in_c * g.in_h * g.in_w;
  const std::int64_t out_item = g.out_c * g.pixels();
  const std::int64_t off_item = 2 * taps * g.pixels();
  std::vector<Scalar> out(static_cast<std::size_t>(g.batch * out_item));
  std::vector<Scalar> cols(static_cast<std::size_t>(g.patch() * g.pixels()));
  const Scalar* bias_ptr = bias ? bias->data().data() : nullptr;
  for (std::int64_t n = 0; n < g.batch; ++n) {
    deform_im2col(input.data().data() + n * in_item, offsets.data().data() + n * off_item, g, cols.data());
    gemm_forward(weight.data().data(), cols.data(), bias_ptr, g, out.data() + n * out_item);
  }

  Tensor in_c = input, off_c = offsets, w_c = weight;
  Tensor b_c = bias ? *bias : Tensor();
  std::vector<Tensor> inputs{input, offsets, weight};
  if (bias) inputs.push_back(*bias);
  return make_result(
      {g.batch, g.out_c, g.out_h, g.out_w}, std::move(out), "deformable_conv2d", std::move(inputs),
      [in_c, off_c, w_c, b_c, g, in_item, out_item, off_item](std::span<const Scalar> grad) mutable {
        std::vector<Scalar> cols(static_cast<std::size_t>(g.patch() * g.pixels()));
        std::vector<Scalar> grad_cols(cols.size());
        Scalar* gw = w_c.requires_grad() ? w_c.grad_buffer().data() : nullptr;
        Scalar* gb = (b_c.defined() && b_c.requires_grad()) ? b_c.grad_buffer().data() : nullptr;
        Scalar* gi = in_c.requires_grad() ? in_c.grad_buffer().data() : nullptr;
        Scalar* go = off_c.requires_grad() ? off_c.grad_buffer().data() : nullptr;
        const bool need_cols_grad = gi != nullptr || go != nullptr;
        for (std::int64_t n = 0; n < g.batch; ++n) {
          const Scalar* in_n = in_c.data().data() + n * in_item;
          const Scalar* off_n = off_c.data().data() + n * off_item;
          if (gw != nullptr) deform_im2col(in_n, off_n, g, cols.data());
          gemm_backward(grad.data() + n * out_item, cols.data(), w_c.data().data(), g, gw, gb,
                        need_cols_grad ? grad_cols.data() : nullptr);
          if (need_cols_grad) {
            deform_col2im(grad_cols.data(), in_n, off_n, g, gi != nullptr ? gi + n * in_item : nullptr,
                          go != nullptr ? go + n * off_item : nullptr);
          }
        }
      });
}

}  // namespace dl
