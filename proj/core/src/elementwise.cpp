#include <algorithm>
#include <cmath>

#include "deeplight/ops.hpp"

namespace dl {
namespace {

// Checks that b matches a, or matches a except for a batch extent of 1.
// Returns the number of elements per batch item of b for broadcasting.
std::int64_t batch_broadcast(const Tensor& a, const Tensor& b, const char* op) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  bool ok = sa.size() == sb.size() && !sa.empty();
  for (std::size_t i = 1; ok && i < sa.size(); ++i) ok = sa[i] == sb[i];
  if (ok) ok = sb[0] == sa[0] || sb[0] == 1;
  if (!ok) {
    throw DimensionError(std::string(op) + ": incompatible shapes " + shape_str(sa) + " and " +
                         shape_str(sb) + " (only batch broadcasting is supported)");
  }
  return sb[0] == sa[0] ? b.numel() : b.numel() / std::max<std::int64_t>(sb[0], 1);
}

template <typename F, typename G>
Tensor unary(const Tensor& x, const char* name, F forward, G derivative) {
  auto in = x.data();
  std::vector<Scalar> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = forward(in[i]);
  Tensor xc = x;
  return make_result(x.shape(), std::move(out), name, {x},
                     [xc, derivative](std::span<const Scalar> g) mutable {
                       auto gx = xc.grad_buffer();
                       auto xd = xc.data();
                       for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * derivative(xd[i]);
                     });
}

enum class Binary { kAdd, kSub, kMul };

Tensor binary(const Tensor& a, const Tensor& b, Binary kind, const char* name) {
  // Allow b to broadcast over a's batch, or a over b's.
  if (a.shape() != b.shape() && a.shape().size() == b.shape().size() && !a.shape().empty() &&
      a.dim(0) == 1 && b.dim(0) != 1) {
    if (kind == Binary::kSub) return mul_scalar(binary(b, a, Binary::kSub, name), -1);
    return binary(b, a, kind, name);
  }
  const std::int64_t period = batch_broadcast(a, b, name);
  auto ad = a.data();
  auto bd = b.data();
  std::vector<Scalar> out(ad.size());
  for (std::size_t i = 0; i < ad.size(); ++i) {
    const Scalar bv = bd[i % period];
    switch (kind) {
      case Binary::kAdd: out[i] = ad[i] + bv; break;
      case Binary::kSub: out[i] = ad[i] - bv; break;
      case Binary::kMul: out[i] = ad[i] * bv; break;
    }
  }
  Tensor ac = a, bc = b;
  return make_result(a.shape(), std::move(out), name, {a, b},
                     [ac, bc, period, kind](std::span<const Scalar> g) mutable {
                       if (ac.requires_grad()) {
                         auto ga = ac.grad_buffer();
                         auto bd = bc.data();
                         for (std::size_t i = 0; i < g.size(); ++i) {
                           ga[i] += kind == Binary::kMul ? g[i] * bd[i % period] : g[i];
                         }
                       }
                       if (bc.requires_grad()) {
                         auto gb = bc.grad_buffer();
                         auto ad = ac.data();
                         for (std::size_t i = 0; i < g.size(); ++i) {
                           const std::size_t j = i % period;
                           switch (kind) {
                             case Binary::kAdd: gb[j] += g[i]; break;
                             case Binary::kSub: gb[j] -= g[i]; break;
                             case Binary::kMul: gb[j] += g[i] * ad[i]; break;
                           }
                         }
                       }
                     });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  if (!b.defined()) return a;
  return binary(a, b, Binary::kAdd, "add");
}

Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::kSub, "sub"); }

Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::kMul, "mul"); }

Tensor add_scalar(const Tensor& a, Scalar value) {
  return unary(a, "add_scalar", [value](Scalar v) { return v + value; }, [](Scalar) { return Scalar(1); });
}

Tensor mul_scalar(const Tensor& a, Scalar value) {
  return unary(a, "mul_scalar", [value](Scalar v) { return v * value; }, [value](Scalar) { return value; });
}

Tensor leaky_relu(const Tensor& x, Scalar slope) {
  return unary(
      x, "leaky_relu", [slope](Scalar v) { return v > 0 ? v : v * slope; },
      [slope](Scalar v) { return v > 0 ? Scalar(1) : slope; });
}

Tensor sigmoid(const Tensor& x) {
  auto in = x.data();
  std::vector<Scalar> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = Scalar(1) / (Scalar(1) + std::exp(-in[i]));
  Tensor xc = x;
  auto result = make_result(x.shape(), std::move(out), "sigmoid", {x}, nullptr);
  if (result.grad_fn()) {
    // Derivative from the saved output; capture a non-owning view of the data.
    std::weak_ptr<TensorImpl> weak_out = result.shared_impl();
    result.grad_fn()->backward = [xc, weak_out](std::span<const Scalar> g) mutable {
      auto out = weak_out.lock();
      auto gx = xc.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const Scalar s = out->data[i];
        gx[i] += g[i] * s * (Scalar(1) - s);
      }
    };
  }
  return result;
}

Tensor abs(const Tensor& x) {
  return unary(
      x, "abs", [](Scalar v) { return std::abs(v); },
      [](Scalar v) { return v > 0 ? Scalar(1) : (v < 0 ? Scalar(-1) : Scalar(0)); });
}

Tensor square(const Tensor& x) {
  return unary(x, "square", [](Scalar v) { return v * v; }, [](Scalar v) { return 2 * v; });
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (Scalar v : x.data()) acc += v;
  Tensor xc = x;
  return make_result({1}, {static_cast<Scalar>(acc)}, "sum", {x},
                     [xc](std::span<const Scalar> g) mutable {
                       auto gx = xc.grad_buffer();
                       for (auto& v : gx) v += g[0];
                     });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw DimensionError("mean of an empty tensor");
  double acc = 0.0;
  for (Scalar v : x.data()) acc += v;
  const double n = static_cast<double>(x.numel());
  Tensor xc = x;
  return make_result({1}, {static_cast<Scalar>(acc / n)}, "mean", {x},
                     [xc, n](std::span<const Scalar> g) mutable {
                       auto gx = xc.grad_buffer();
                       const Scalar s = static_cast<Scalar>(g[0] / n);
                       for (auto& v : gx) v += s;
                     });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw DimensionError("concat axis out of range for " + shape_str(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == axis || s[i] == first[i];
    if (!ok) {
      throw DimensionError("concat: shape " + shape_str(s) + " incompatible with " + shape_str(first) +
                           " along axis " + std::to_string(axis));
    }
    out_shape[axis] += s[axis];
  }
  std::int64_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];

  std::vector<Scalar> out(static_cast<std::size_t>(numel_of(out_shape)));
  const std::int64_t out_stride = out_shape[axis] * inner;
  std::int64_t offset = 0;
  for (const auto& p : parts) {
    const std::int64_t chunk = p.dim(axis) * inner;
    auto pd = p.data();
    for (std::int64_t o = 0; o < outer; ++o) {
      std::copy_n(pd.begin() + o * chunk, chunk, out.begin() + o * out_stride + offset);
    }
    offset += chunk;
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return make_result(std::move(out_shape), std::move(out), "concat", inputs,
                     [inputs, outer, inner, out_stride, axis](std::span<const Scalar> g) mutable {
                       std::int64_t offset = 0;
                       for (auto& p : inputs) {
                         const std::int64_t chunk = p.dim(axis) * inner;
                         if (p.requires_grad()) {
                           auto gp = p.grad_buffer();
                           for (std::int64_t o = 0; o < outer; ++o) {
                             for (std::int64_t k = 0; k < chunk; ++k) {
                               gp[o * chunk + k] += g[o * out_stride + offset + k];
                             }
                           }
                         }
                         offset += chunk;
                       }
                     });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel_of(shape) != x.numel()) {
    throw DimensionError("reshape " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  std::vector<Scalar> out(x.data().begin(), x.data().end());
  Tensor xc = x;
  return make_result(std::move(shape), std::move(out), "reshape", {x},
                     [xc](std::span<const Scalar> g) mutable {
                       auto gx = xc.grad_buffer();
                       for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                     });
}

Tensor global_avg_pool(const Tensor& x) {
  if (x.rank() != 4) throw DimensionError("global_avg_pool expects NCHW, got " + shape_str(x.shape()));
  const std::int64_t nc = x.dim(0) * x.dim(1);
  const std::int64_t hw = x.dim(2) * x.dim(3);
  auto xd = x.data();
  std::vector<Scalar> out(static_cast<std::size_t>(nc));
  for (std::int64_t i = 0; i < nc; ++i) {
    double acc = 0.0;
    for (std::int64_t k = 0; k < hw; ++k) acc += xd[i * hw + k];
    out[i] = static_cast<Scalar>(acc / static_cast<double>(hw));
  }
  Tensor xc = x;
  return make_result({x.dim(0), x.dim(1), 1, 1}, std::move(out), "global_avg_pool", {x},
                     [xc, nc, hw](std::span<const Scalar> g) mutable {
                       auto gx = xc.grad_buffer();
                       for (std::int64_t i = 0; i < nc; ++i) {
                         const Scalar s = g[i] / static_cast<Scalar>(hw);
                         for (std::int64_t k = 0; k < hw; ++k) gx[i * hw + k] += s;
                       }
                     });
}

Tensor binary_cross_entropy(const Tensor& probs, const Tensor& target, double eps) {
  if (probs.shape() != target.shape()) {
    throw DimensionError("binary_cross_entropy: probability shape " + shape_str(probs.shape()) +
                         " vs target " + shape_str(target.shape()));
  }
  if (!(eps > 0.0 && eps < 0.5)) throw ConfigError("binary_cross_entropy: eps must lie in (0, 0.5)");
  auto p = probs.data();
  auto t = target.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pc = std::clamp(static_cast<double>(p[i]), eps, 1.0 - eps);
    const double ti = t[i];
    acc -= ti * std::log(pc) + (1.0 - ti) * std::log(1.0 - pc);
  }
  const double n = static_cast<double>(p.size());
  Tensor pc = probs, tc = target;
  return make_result({1}, {static_cast<Scalar>(acc / n)}, "binary_cross_entropy", {probs, target},
                     [pc, tc, eps, n](std::span<const Scalar> g) mutable {
                       if (!pc.requires_grad()) return;
                       auto gp = pc.grad_buffer();
                       auto p = pc.data();
                       auto t = tc.data();
                       for (std::size_t i = 0; i < p.size(); ++i) {
                         const double pi = p[i];
                         if (pi < eps || pi > 1.0 - eps) continue;
                         const double d = (-t[i] / pi + (1.0 - t[i]) / (1.0 - pi)) / n;
                         gp[i] += static_cast<Scalar>(g[0] * d);
                       }
                     });
}

}  // namespace dl
