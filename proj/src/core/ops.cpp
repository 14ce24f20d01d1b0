#include "masa/core/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include "masa/core/autograd.hpp"
#include "masa/core/error.hpp"
#include "masa/core/parallel.hpp"
#include "masa/simd/kernels.hpp"

namespace masa {

namespace {
thread_local std::uint64_t t_macs = 0;
}

std::uint64_t mac_count() noexcept { return t_macs; }
void detail::add_macs(std::uint64_t n) noexcept { t_macs += n; }

namespace {

using detail::TensorImpl;

const simd::KernelTable& K() { return simd::kernels(); }

// ---------------------------------------------------------------------------
// matmul

struct BatchPlan {
  Shape out_batch;
  std::vector<std::size_t> a_index;  // matrix index into a, per output batch
  std::vector<std::size_t> b_index;
};

BatchPlan plan_batches(const Shape& a, const Shape& b) {
  const std::size_t ra = a.size() - 2;
  const std::size_t rb = b.size() - 2;
  const std::size_t r = std::max(ra, rb);
  Shape pa(r, 1), pb(r, 1);
  std::copy(a.begin(), a.begin() + ra, pa.begin() + (r - ra));
  std::copy(b.begin(), b.begin() + rb, pb.begin() + (r - rb));

  BatchPlan plan;
  plan.out_batch.resize(r);
  for (std::size_t i = 0; i < r; ++i) {
    if (pa[i] != pb[i] && pa[i] != 1 && pb[i] != 1) {
      throw DimensionError("matmul batch dimensions do not broadcast: " + shape_str(a) + " x " +
                           shape_str(b));
    }
    plan.out_batch[i] = std::max(pa[i], pb[i]);
  }
  // Strides in units of whole matrices, zero on broadcast axes.
  std::vector<std::size_t> sa(r, 0), sb(r, 0);
  std::size_t acc_a = 1, acc_b = 1;
  for (std::size_t i = r; i-- > 0;) {
    sa[i] = pa[i] == 1 ? 0 : acc_a;
    sb[i] = pb[i] == 1 ? 0 : acc_b;
    acc_a *= pa[i];
    acc_b *= pb[i];
  }
  const std::size_t count = shape_numel(plan.out_batch);
  plan.a_index.resize(count);
  plan.b_index.resize(count);
  for (std::size_t flat = 0; flat < count; ++flat) {
    std::size_t rem = flat, ia = 0, ib = 0;
    for (std::size_t i = r; i-- > 0;) {
      const std::size_t coord = rem % plan.out_batch[i];
      rem /= plan.out_batch[i];
      ia += coord * sa[i];
      ib += coord * sb[i];
    }
    plan.a_index[flat] = ia;
    plan.b_index[flat] = ib;
  }
  return plan;
}

// ---------------------------------------------------------------------------
// elementwise broadcasting of b onto a's shape

struct Broadcast {
  std::size_t inner = 1;              // contiguous run shared by a and b
  std::vector<std::size_t> b_offset;  // start of b's run for each outer block
};

Broadcast plan_broadcast(const char* op, const Shape& a, const Shape& b) {
  auto fail = [&] {
    throw DimensionError(std::string(op) + " shapes are not broadcastable: " + shape_str(a) +
                         " and " + shape_str(b));
  };
  const std::size_t nb = shape_numel(b);
  Broadcast plan;
  if (nb == 1) {
    plan.inner = 1;
    plan.b_offset.assign(shape_numel(a), 0);
    return plan;
  }
  if (b.size() > a.size()) fail();
  const std::size_t r = a.size();
  Shape pb(r, 1);
  std::copy(b.begin(), b.end(), pb.begin() + (r - b.size()));
  for (std::size_t i = 0; i < r; ++i) {
    if (pb[i] != a[i] && pb[i] != 1) fail();
  }
  std::size_t split = r;
  while (split > 0 && pb[split - 1] == a[split - 1]) --split;
  for (std::size_t i = split; i < r; ++i) plan.inner *= a[i];

  std::vector<std::size_t> sb(split, 0);
  std::size_t acc = plan.inner;
  for (std::size_t i = split; i-- > 0;) {
    sb[i] = pb[i] == 1 ? 0 : acc;
    acc *= pb[i];
  }
  const std::size_t outer = shape_numel(a) / plan.inner;
  plan.b_offset.resize(outer);
  for (std::size_t o = 0; o < outer; ++o) {
    std::size_t rem = o, off = 0;
    for (std::size_t i = split; i-- > 0;) {
      off += (rem % a[i]) * sb[i];
      rem /= a[i];
    }
    plan.b_offset[o] = off;
  }
  return plan;
}

enum class BinaryKind { mul, add, sub };

Tensor binary_op(const char* name, BinaryKind kind, const Tensor& a, const Tensor& b) {
  const Broadcast plan = plan_broadcast(name, a.shape(), b.shape());
  const auto& da = a.values();
  const auto& db = b.values();
  std::vector<double> out(da.size());
  const std::size_t inner = plan.inner;
  for (std::size_t o = 0; o < plan.b_offset.size(); ++o) {
    const double* pa = da.data() + o * inner;
    const double* pb = db.data() + plan.b_offset[o];
    double* po = out.data() + o * inner;
    switch (kind) {
      case BinaryKind::mul: K().mul(pa, pb, po, inner); break;
      case BinaryKind::add: K().add(pa, pb, po, inner); break;
      case BinaryKind::sub:
        for (std::size_t j = 0; j < inner; ++j) po[j] = pa[j] - pb[j];
        break;
    }
  }
  return make_result(name, a.shape(), std::move(out), {a, b},
                     [a, b, plan, kind](const TensorImpl& o) {
                       const auto& g = o.grad;
                       const std::size_t inner = plan.inner;
                       if (a.requires_grad()) {
                         auto ga = detail::grad_buffer(a);
                         const auto& db = b.values();
                         for (std::size_t blk = 0; blk < plan.b_offset.size(); ++blk) {
                           const double* pg = g.data() + blk * inner;
                           double* pga = ga.data() + blk * inner;
                           if (kind == BinaryKind::mul) {
                             const double* pb = db.data() + plan.b_offset[blk];
                             for (std::size_t j = 0; j < inner; ++j) pga[j] += pg[j] * pb[j];
                           } else {
                             K().axpy(1.0, pg, pga, inner);
                           }
                         }
                       }
                       if (b.requires_grad()) {
                         auto gb = detail::grad_buffer(b);
                         const auto& da = a.values();
                         for (std::size_t blk = 0; blk < plan.b_offset.size(); ++blk) {
                           const double* pg = g.data() + blk * inner;
                           double* pgb = gb.data() + plan.b_offset[blk];
                           if (kind == BinaryKind::mul) {
                             const double* pa = da.data() + blk * inner;
                             for (std::size_t j = 0; j < inner; ++j) pgb[j] += pg[j] * pa[j];
                           } else {
                             K().axpy(kind == BinaryKind::add ? 1.0 : -1.0, pg, pgb, inner);
                           }
                         }
                       }
                     });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() < 2 || sb.size() < 2) {
    throw DimensionError("matmul needs rank >= 2 operands, got " + shape_str(sa) + " x " +
                         shape_str(sb));
  }
  const std::size_t M = sa[sa.size() - 2];
  const std::size_t Kd = sa[sa.size() - 1];
  const std::size_t N = sb[sb.size() - 1];
  if (sb[sb.size() - 2] != Kd) {
    throw DimensionError("matmul inner dimensions differ: " + shape_str(sa) + " x " +
                         shape_str(sb));
  }
  auto plan = std::make_shared<BatchPlan>(plan_batches(sa, sb));
  const std::size_t batches = plan->a_index.size();
  Shape out_shape = plan->out_batch;
  out_shape.push_back(M);
  out_shape.push_back(N);

  const auto& da = a.values();
  const auto& db = b.values();
  std::vector<double> out(batches * M * N, 0.0);
  parallel_for(batches * M, Kd * N, [&](std::size_t begin, std::size_t end) {
    const auto& k = K();
    for (std::size_t row = begin; row < end; ++row) {
      const std::size_t bt = row / M, i = row % M;
      const double* pa = da.data() + plan->a_index[bt] * M * Kd + i * Kd;
      const double* pb = db.data() + plan->b_index[bt] * Kd * N;
      double* pc = out.data() + bt * M * N + i * N;
      for (std::size_t kk = 0; kk < Kd; ++kk) k.axpy(pa[kk], pb + kk * N, pc, N);
    }
  });
  detail::add_macs(static_cast<std::uint64_t>(batches) * M * Kd * N);

  return make_result("matmul", std::move(out_shape), std::move(out), {a, b},
                     [a, b, plan, M, Kd, N](const TensorImpl& o) {
                       const auto& g = o.grad;
                       const std::size_t batches = plan->a_index.size();
                       const auto& k = K();
                       if (a.requires_grad()) {
                         auto ga = detail::grad_buffer(a);
                         const auto& db = b.values();
                         // dA = dC B^T; broadcast batches accumulate serially.
                         for (std::size_t bt = 0; bt < batches; ++bt) {
                           const double* pb = db.data() + plan->b_index[bt] * Kd * N;
                           double* pga = ga.data() + plan->a_index[bt] * M * Kd;
                           const double* pg = g.data() + bt * M * N;
                           parallel_for(M, Kd * N, [&](std::size_t i0, std::size_t i1) {
                             for (std::size_t i = i0; i < i1; ++i) {
                               for (std::size_t kk = 0; kk < Kd; ++kk) {
                                 pga[i * Kd + kk] += k.dot(pg + i * N, pb + kk * N, N);
                               }
                             }
                           });
                         }
                       }
                       if (b.requires_grad()) {
                         auto gb = detail::grad_buffer(b);
                         const auto& da = a.values();
                         // dB = A^T dC
                         for (std::size_t bt = 0; bt < batches; ++bt) {
                           const double* pa = da.data() + plan->a_index[bt] * M * Kd;
                           double* pgb = gb.data() + plan->b_index[bt] * Kd * N;
                           const double* pg = g.data() + bt * M * N;
                           parallel_for(Kd, M * N, [&](std::size_t k0, std::size_t k1) {
                             for (std::size_t kk = k0; kk < k1; ++kk) {
                               for (std::size_t i = 0; i < M; ++i) {
                                 k.axpy(pa[i * Kd + kk], pg + i * N, pgb + kk * N, N);
                               }
                             }
                           });
                         }
                       }
                     });
}

Tensor permute(const Tensor& t, std::span<const std::size_t> axes) {
  const Shape& s = t.shape();
  const std::size_t r = s.size();
  if (axes.size() != r) {
    throw DimensionError("permute needs " + std::to_string(r) + " axes for shape " + shape_str(s));
  }
  std::vector<bool> used(r, false);
  for (std::size_t ax : axes) {
    if (ax >= r || used[ax]) throw DimensionError("permute axes are not a permutation");
    used[ax] = true;
  }
  std::vector<std::size_t> in_stride(r, 1);
  for (std::size_t i = r; i-- > 1;) in_stride[i - 1] = in_stride[i] * s[i];
  Shape out_shape(r);
  std::vector<std::size_t> src_stride(r);
  for (std::size_t i = 0; i < r; ++i) {
    out_shape[i] = s[axes[i]];
    src_stride[i] = in_stride[axes[i]];
  }
  // Maps each output position to its source position.
  auto index = std::make_shared<std::vector<std::size_t>>(t.numel());
  std::vector<std::size_t> coord(r, 0);
  std::size_t src = 0;
  for (std::size_t flat = 0; flat < index->size(); ++flat) {
    (*index)[flat] = src;
    for (std::size_t i = r; i-- > 0;) {
      ++coord[i];
      src += src_stride[i];
      if (coord[i] < out_shape[i]) break;
      src -= coord[i] * src_stride[i];
      coord[i] = 0;
    }
  }
  const auto& d = t.values();
  std::vector<double> out(d.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = d[(*index)[i]];
  return make_result("permute", std::move(out_shape), std::move(out), {t},
                     [t, index](const TensorImpl& o) {
                       auto gt = detail::grad_buffer(t);
                       for (std::size_t i = 0; i < index->size(); ++i) gt[(*index)[i]] += o.grad[i];
                     });
}

Tensor permute(const Tensor& t, std::initializer_list<std::size_t> axes) {
  return permute(t, std::span<const std::size_t>(axes.begin(), axes.size()));
}

Tensor transpose(const Tensor& t) {
  const std::size_t r = t.rank();
  if (r < 2) throw DimensionError("transpose needs rank >= 2, got " + shape_str(t.shape()));
  std::vector<std::size_t> axes(r);
  std::iota(axes.begin(), axes.end(), 0);
  std::swap(axes[r - 1], axes[r - 2]);
  return permute(t, axes);
}

Tensor reshape(const Tensor& t, Shape shape) {
  if (shape_numel(shape) != t.numel()) {
    throw DimensionError("cannot reshape " + shape_str(t.shape()) + " to " + shape_str(shape));
  }
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("reshape to empty shape " + shape_str(shape));
  }
  return make_result("reshape", std::move(shape), t.values(), {t}, [t](const TensorImpl& o) {
    detail::accumulate_grad(t, o.grad);
  });
}

Tensor softmax_last(const Tensor& t) {
  if (t.rank() == 0) throw DimensionError("softmax_last needs at least one axis");
  const std::size_t L = t.shape().back();
  const std::size_t rows = t.numel() / L;
  const auto& d = t.values();
  std::vector<double> out(d.size());
  parallel_for(rows, L * 8, [&](std::size_t r0, std::size_t r1) {
    for (std::size_t r = r0; r < r1; ++r) {
      const double* x = d.data() + r * L;
      double* y = out.data() + r * L;
      const double m = K().max(x, L);
      double s = 0.0;
      for (std::size_t j = 0; j < L; ++j) {
        y[j] = std::exp(x[j] - m);
        s += y[j];
      }
      K().scale(1.0 / s, y, y, L);
    }
  });
  auto y_saved = std::make_shared<std::vector<double>>(out);
  return make_result("softmax_last", t.shape(), std::move(out), {t},
                     [t, y_saved, L, rows](const TensorImpl& o) {
                       auto gt = detail::grad_buffer(t);
                       const auto& y = *y_saved;
                       for (std::size_t r = 0; r < rows; ++r) {
                         const double* yr = y.data() + r * L;
                         const double* gr = o.grad.data() + r * L;
                         const double dotv = K().dot(gr, yr, L);
                         double* out = gt.data() + r * L;
                         for (std::size_t j = 0; j < L; ++j) out[j] += yr[j] * (gr[j] - dotv);
                       }
                     });
}

Tensor hadamard(const Tensor& a, const Tensor& b) { return binary_op("hadamard", BinaryKind::mul, a, b); }
Tensor add(const Tensor& a, const Tensor& b) { return binary_op("add", BinaryKind::add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op("sub", BinaryKind::sub, a, b); }

Tensor scale(const Tensor& t, double factor) {
  const auto& d = t.values();
  std::vector<double> out(d.size());
  K().scale(factor, d.data(), out.data(), d.size());
  return make_result("scale", t.shape(), std::move(out), {t}, [t, factor](const TensorImpl& o) {
    auto gt = detail::grad_buffer(t);
    K().axpy(factor, o.grad.data(), gt.data(), gt.size());
  });
}

Tensor sum(const Tensor& t) {
  const auto& d = t.values();
  const double s = K().sum(d.data(), d.size());
  return make_result("sum", {}, {s}, {t}, [t](const TensorImpl& o) {
    auto gt = detail::grad_buffer(t);
    for (double& v : gt) v += o.grad[0];
  });
}

Tensor mean(const Tensor& t) { return scale(sum(t), 1.0 / static_cast<double>(t.numel())); }

Tensor mean_rows(const Tensor& t) {
  if (t.rank() != 2) throw DimensionError("mean_rows needs [N, C], got " + shape_str(t.shape()));
  const std::size_t N = t.dim(0), C = t.dim(1);
  const auto& d = t.values();
  std::vector<double> out(C, 0.0);
  for (std::size_t n = 0; n < N; ++n) K().axpy(1.0, d.data() + n * C, out.data(), C);
  const double inv = 1.0 / static_cast<double>(N);
  K().scale(inv, out.data(), out.data(), C);
  return make_result("mean_rows", {C}, std::move(out), {t}, [t, N, C, inv](const TensorImpl& o) {
    auto gt = detail::grad_buffer(t);
    for (std::size_t n = 0; n < N; ++n) K().axpy(inv, o.grad.data(), gt.data() + n * C, C);
  });
}

Tensor gelu(const Tensor& t) {
  const auto& d = t.values();
  std::vector<double> out(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    out[i] = 0.5 * d[i] * (1.0 + std::erf(d[i] * std::numbers::sqrt2 / 2.0));
  }
  return make_result("gelu", t.shape(), std::move(out), {t}, [t](const TensorImpl& o) {
    auto gt = detail::grad_buffer(t);
    const auto& x = t.values();
    const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double cdf = 0.5 * (1.0 + std::erf(x[i] * std::numbers::sqrt2 / 2.0));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * x[i] * x[i]);
      gt[i] += o.grad[i] * (cdf + x[i] * pdf);
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (x.rank() == 0) throw DimensionError("layer_norm needs at least one axis");
  const std::size_t C = x.shape().back();
  if (gain.shape() != Shape{C} || bias.shape() != Shape{C}) {
    throw DimensionError("layer_norm gain/bias must be [" + std::to_string(C) + "], got " +
                         shape_str(gain.shape()) + " and " + shape_str(bias.shape()));
  }
  const std::size_t rows = x.numel() / C;
  const auto& d = x.values();
  const auto& g = gain.values();
  const auto& b = bias.values();
  auto xhat = std::make_shared<std::vector<double>>(d.size());
  auto rstd = std::make_shared<std::vector<double>>(rows);
  std::vector<double> out(d.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = d.data() + r * C;
    const double mu = K().sum(xr, C) / static_cast<double>(C);
    double var = 0.0;
    for (std::size_t j = 0; j < C; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(C);
    const double rs = 1.0 / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (std::size_t j = 0; j < C; ++j) {
      const double h = (xr[j] - mu) * rs;
      (*xhat)[r * C + j] = h;
      out[r * C + j] = h * g[j] + b[j];
    }
  }
  return make_result(
      "layer_norm", x.shape(), std::move(out), {x, gain, bias},
      [x, gain, bias, xhat, rstd, C, rows](const TensorImpl& o) {
        const auto& gy = o.grad;
        const auto& g = gain.values();
        if (gain.requires_grad()) {
          auto gg = detail::grad_buffer(gain);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < C; ++j) gg[j] += gy[r * C + j] * (*xhat)[r * C + j];
        }
        if (bias.requires_grad()) {
          auto gb = detail::grad_buffer(bias);
          for (std::size_t r = 0; r < rows; ++r) K().axpy(1.0, gy.data() + r * C, gb.data(), C);
        }
        if (x.requires_grad()) {
          auto gx = detail::grad_buffer(x);
          std::vector<double> dh(C);
          for (std::size_t r = 0; r < rows; ++r) {
            double mean_dh = 0.0, mean_dh_h = 0.0;
            for (std::size_t j = 0; j < C; ++j) {
              dh[j] = gy[r * C + j] * g[j];
              mean_dh += dh[j];
              mean_dh_h += dh[j] * (*xhat)[r * C + j];
            }
            mean_dh /= static_cast<double>(C);
            mean_dh_h /= static_cast<double>(C);
            for (std::size_t j = 0; j < C; ++j) {
              gx[r * C + j] += (*rstd)[r] * (dh[j] - mean_dh - (*xhat)[r * C + j] * mean_dh_h);
            }
          }
        }
      });
}

Tensor channel_affine(const Tensor& x, const Tensor& scale_t, const Tensor& shift) {
  if (x.rank() != 3) throw DimensionError("channel_affine needs [C, H, W], got " + shape_str(x.shape()));
  const std::size_t C = x.dim(0), P = x.dim(1) * x.dim(2);
  if (scale_t.shape() != Shape{C} || shift.shape() != Shape{C}) {
    throw DimensionError("channel_affine scale/shift must be [" + std::to_string(C) + "]");
  }
  const auto& d = x.values();
  const auto& s = scale_t.values();
  const auto& t = shift.values();
  std::vector<double> out(d.size());
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t p = 0; p < P; ++p) out[c * P + p] = d[c * P + p] * s[c] + t[c];
  return make_result("channel_affine", x.shape(), std::move(out), {x, scale_t, shift},
                     [x, scale_t, shift, C, P](const TensorImpl& o) {
                       const auto& g = o.grad;
                       if (x.requires_grad()) {
                         auto gx = detail::grad_buffer(x);
                         const auto& s = scale_t.values();
                         for (std::size_t c = 0; c < C; ++c)
                           K().axpy(s[c], g.data() + c * P, gx.data() + c * P, P);
                       }
                       if (scale_t.requires_grad()) {
                         auto gs = detail::grad_buffer(scale_t);
                         const auto& d = x.values();
                         for (std::size_t c = 0; c < C; ++c)
                           gs[c] += K().dot(g.data() + c * P, d.data() + c * P, P);
                       }
                       if (shift.requires_grad()) {
                         auto gt = detail::grad_buffer(shift);
                         for (std::size_t c = 0; c < C; ++c) gt[c] += K().sum(g.data() + c * P, P);
                       }
                     });
}

Tensor tokens_to_image(const Tensor& tokens, std::size_t height, std::size_t width) {
  if (tokens.rank() != 2 || tokens.dim(0) != height * width) {
    throw DimensionError("tokens " + shape_str(tokens.shape()) + " do not fill a " +
                         std::to_string(height) + "x" + std::to_string(width) + " grid");
  }
  return permute(reshape(tokens, {height, width, tokens.dim(1)}), {2, 0, 1});
}

Tensor image_to_tokens(const Tensor& image) {
  if (image.rank() != 3) throw DimensionError("image must be [C, H, W], got " + shape_str(image.shape()));
  const std::size_t C = image.dim(0), H = image.dim(1), W = image.dim(2);
  return reshape(permute(image, {1, 2, 0}), {H * W, C});
}

}  // namespace masa
