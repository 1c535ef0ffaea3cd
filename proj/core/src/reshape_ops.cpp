#include "deeplight/ops.hpp"

namespace dl {
namespace {

// Index map shared by shuffle and unshuffle: element (n, c, i*r+di, j*r+dj)
// of the spatial layout lives at (n, c*r*r + di*r + dj, i, j) of the
// channel layout.
template <typename F>
void for_each_shuffle_pair(std::int64_t n_batch, std::int64_t c_out, std::int64_t h, std::int64_t w, int r,
                           F&& visit) {
  const std::int64_t oh = h * r, ow = w * r;
  for (std::int64_t n = 0; n < n_batch; ++n) {
    for (std::int64_t c = 0; c < c_out; ++c) {
      for (std::int64_t di = 0; di < r; ++di) {
        for (std::int64_t dj = 0; dj < r; ++dj) {
          const std::int64_t cin = c * r * r + di * r + dj;
          const std::int64_t src_base = (n * c_out * r * r + cin) * h * w;
          const std::int64_t dst_base = (n * c_out + c) * oh * ow;
          for (std::int64_t i = 0; i < h; ++i) {
            for (std::int64_t j = 0; j < w; ++j) {
              visit(src_base + i * w + j, dst_base + (i * r + di) * ow + (j * r + dj));
            }
          }
        }
      }
    }
  }
}

}  // namespace

Tensor pixel_shuffle(const Tensor& input, int factor) {
  if (input.rank() != 4) throw DimensionError("pixel_shuffle: input must be NCHW, got " + shape_str(input.shape()));
  if (factor < 1) throw DimensionError("pixel_shuffle: factor must be positive");
  const std::int64_t rr = static_cast<std::int64_t>(factor) * factor;
  if (input.dim(1) % rr != 0) {
    throw DimensionError("pixel_shuffle: " + std::to_string(input.dim(1)) + " channels not divisible by " +
                         std::to_string(rr));
  }
  const std::int64_t n = input.dim(0), c_out = input.dim(1) / rr, h = input.dim(2), w = input.dim(3);
  std::vector<Scalar> out(static_cast<std::size_t>(input.numel()));
  auto in = input.data();
  for_each_shuffle_pair(n, c_out, h, w, factor, [&](std::int64_t s, std::int64_t d) { out[d] = in[s]; });
  Tensor in_c = input;
  return make_result({n, c_out, h * factor, w * factor}, std::move(out), "pixel_shuffle", {input},
                     [in_c, n, c_out, h, w, factor](std::span<const Scalar> g) mutable {
                       auto gi = in_c.grad_buffer();
                       for_each_shuffle_pair(n, c_out, h, w, factor,
                                             [&](std::int64_t s, std::int64_t d) { gi[s] += g[d]; });
                     });
}

Tensor pixel_unshuffle(const Tensor& input, int factor) {
  if (input.rank() != 4) throw DimensionError("pixel_unshuffle: input must be NCHW, got " + shape_str(input.shape()));
  if (factor < 1) throw DimensionError("pixel_unshuffle: factor must be positive");
  if (input.dim(2) % factor != 0 || input.dim(3) % factor != 0) {
    throw DimensionError("pixel_unshuffle: spatial size " + shape_str(input.shape()) + " not divisible by " +
                         std::to_string(factor));
  }
  const std::int64_t n = input.dim(0), c = input.dim(1), h = input.dim(2) / factor, w = input.dim(3) / factor;
  const std::int64_t rr = static_cast<std::int64_t>(factor) * factor;
  std::vector<Scalar> out(static_cast<std::size_t>(input.numel()));
  auto in = input.data();
  for_each_shuffle_pair(n, c, h, w, factor, [&](std::int64_t s, std::int64_t d) { out[s] = in[d]; });
  Tensor in_c = input;
  return make_result({n, c * rr, h, w}, std::move(out), "pixel_unshuffle", {input},
                     [in_c, n, c, h, w, factor](std::span<const Scalar> g) mutable {
                       auto gi = in_c.grad_buffer();
                       for_each_shuffle_pair(n, c, h, w, factor,
                                             [&](std::int64_t s, std::int64_t d) { gi[d] += g[s]; });
                     });
}

}  // namespace dl
