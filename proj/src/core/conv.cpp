#include <algorithm>
#include <memory>
#include <string>
#include <vector>

#include "masa/core/autograd.hpp"
#include "masa/core/error.hpp"
#include "masa/core/ops.hpp"
#include "masa/core/parallel.hpp"
#include "masa/simd/kernels.hpp"

namespace masa {
namespace {

using detail::TensorImpl;

// Valid output columns [lo, hi) for a tap at offset `shift` (input = out + shift).
inline void valid_range(long shift, std::size_t extent, std::size_t& lo, std::size_t& hi) {
  const long n = static_cast<long>(extent);
  const long l = std::max(0L, -shift);
  const long h = std::min(n, n - shift);
  lo = static_cast<std::size_t>(std::max(l, 0L));
  hi = static_cast<std::size_t>(std::max(h, l));
}

// Column matrix [Cin*k*k, Ho*Wo] of zero-padded input patches.
std::vector<double> im2col(const std::vector<double>& in, std::size_t C, std::size_t H,
                           std::size_t W, std::size_t k, std::size_t stride, std::size_t pad,
                           std::size_t Ho, std::size_t Wo) {
  std::vector<double> cols(C * k * k * Ho * Wo, 0.0);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j) {
        double* row = cols.data() + ((c * k + i) * k + j) * Ho * Wo;
        for (std::size_t oy = 0; oy < Ho; ++oy) {
          const long y = static_cast<long>(oy * stride + i) - static_cast<long>(pad);
          if (y < 0 || y >= static_cast<long>(H)) continue;
          for (std::size_t ox = 0; ox < Wo; ++ox) {
            const long x = static_cast<long>(ox * stride + j) - static_cast<long>(pad);
            if (x < 0 || x >= static_cast<long>(W)) continue;
            row[oy * Wo + ox] = in[(c * H + static_cast<std::size_t>(y)) * W + static_cast<std::size_t>(x)];
          }
        }
      }
  return cols;
}

void col2im_add(const std::vector<double>& cols, std::span<double> in, std::size_t C,
                std::size_t H, std::size_t W, std::size_t k, std::size_t stride, std::size_t pad,
                std::size_t Ho, std::size_t Wo) {
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j) {
        const double* row = cols.data() + ((c * k + i) * k + j) * Ho * Wo;
        for (std::size_t oy = 0; oy < Ho; ++oy) {
          const long y = static_cast<long>(oy * stride + i) - static_cast<long>(pad);
          if (y < 0 || y >= static_cast<long>(H)) continue;
          for (std::size_t ox = 0; ox < Wo; ++ox) {
            const long x = static_cast<long>(ox * stride + j) - static_cast<long>(pad);
            if (x < 0 || x >= static_cast<long>(W)) continue;
            in[(c * H + static_cast<std::size_t>(y)) * W + static_cast<std::size_t>(x)] += row[oy * Wo + ox];
          }
        }
      }
}

}  // namespace

Tensor depthwise_conv2d(const Tensor& x, const Tensor& kernel) {
  if (x.rank() != 3 || kernel.rank() != 3) {
    throw DimensionError("depthwise_conv2d needs x [C, H, W] and kernel [C, k, k], got " +
                         shape_str(x.shape()) + " and " + shape_str(kernel.shape()));
  }
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2), k = kernel.dim(1);
  if (kernel.dim(0) != C || kernel.dim(2) != k) {
    throw DimensionError("depthwise kernel " + shape_str(kernel.shape()) + " does not match input " +
                         shape_str(x.shape()));
  }
  if (k % 2 == 0) throw ConfigError("depthwise_conv2d kernel size must be odd, got " + std::to_string(k));
  const long r = static_cast<long>(k / 2);
  const auto& in = x.values();
  const auto& kw = kernel.values();
  std::vector<double> out(in.size(), 0.0);

  // out[c, y, x] += w[c, i, j] * in[c, y + i - r, x + j - r], one contiguous run per tap.
  auto for_each_tap = [=](auto&& fn) {
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) {
          const long dy = static_cast<long>(i) - r, dx = static_cast<long>(j) - r;
          std::size_t ylo, yhi, xlo, xhi;
          valid_range(dy, H, ylo, yhi);
          valid_range(dx, W, xlo, xhi);
          if (xhi <= xlo) continue;
          for (std::size_t y = ylo; y < yhi; ++y) {
            const std::size_t out_off = (c * H + y) * W + xlo;
            const std::size_t in_off = (c * H + static_cast<std::size_t>(static_cast<long>(y) + dy)) * W +
                                       static_cast<std::size_t>(static_cast<long>(xlo) + dx);
            fn(c, (c * k + i) * k + j, out_off, in_off, xhi - xlo);
          }
        }
  };

  const auto& kt = simd::kernels();
  for_each_tap([&](std::size_t, std::size_t w_idx, std::size_t out_off, std::size_t in_off, std::size_t len) {
    kt.axpy(kw[w_idx], in.data() + in_off, out.data() + out_off, len);
  });
  detail::add_macs(static_cast<std::uint64_t>(C) * H * W * k * k);

  return make_result("depthwise_conv2d", x.shape(), std::move(out), {x, kernel},
                     [x, kernel, for_each_tap](const TensorImpl& o) {
                       const auto& kt = simd::kernels();
                       const auto& g = o.grad;
                       if (x.requires_grad()) {
                         auto gx = detail::grad_buffer(x);
                         const auto& kw = kernel.values();
                         for_each_tap([&](std::size_t, std::size_t w_idx, std::size_t out_off,
                                          std::size_t in_off, std::size_t len) {
                           kt.axpy(kw[w_idx], g.data() + out_off, gx.data() + in_off, len);
                         });
                       }
                       if (kernel.requires_grad()) {
                         auto gk = detail::grad_buffer(kernel);
                         const auto& in = x.values();
                         for_each_tap([&](std::size_t, std::size_t w_idx, std::size_t out_off,
                                          std::size_t in_off, std::size_t len) {
                           gk[w_idx] += kt.dot(g.data() + out_off, in.data() + in_off, len);
                         });
                       }
                     });
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
  if (x.rank() != 3 || weight.rank() != 4) {
    throw DimensionError("conv2d needs x [Cin, H, W] and weight [Cout, Cin, k, k], got " +
                         shape_str(x.shape()) + " and " + shape_str(weight.shape()));
  }
  const std::size_t Cin = x.dim(0), H = x.dim(1), W = x.dim(2);
  const std::size_t Cout = weight.dim(0), k = weight.dim(2);
  if (weight.dim(1) != Cin || weight.dim(3) != k) {
    throw DimensionError("conv2d weight " + shape_str(weight.shape()) + " does not match input " +
                         shape_str(x.shape()));
  }
  if (stride == 0) throw ConfigError("conv2d stride must be positive");
  if (H + 2 * padding < k || W + 2 * padding < k) {
    throw DimensionError("conv2d kernel larger than padded input " + shape_str(x.shape()));
  }
  const bool has_bias = bias.defined();
  if (has_bias && bias.shape() != Shape{Cout}) {
    throw DimensionError("conv2d bias must be [" + std::to_string(Cout) + "], got " + shape_str(bias.shape()));
  }
  const std::size_t Ho = (H + 2 * padding - k) / stride + 1;
  const std::size_t Wo = (W + 2 * padding - k) / stride + 1;
  const std::size_t P = Ho * Wo, R = Cin * k * k;

  auto cols = std::make_shared<std::vector<double>>(im2col(x.values(), Cin, H, W, k, stride, padding, Ho, Wo));
  const auto& w = weight.values();
  std::vector<double> out(Cout * P, 0.0);
  parallel_for(Cout, R * P, [&](std::size_t c0, std::size_t c1) {
    const auto& kt = simd::kernels();
    for (std::size_t co = c0; co < c1; ++co) {
      double* orow = out.data() + co * P;
      if (has_bias) std::fill(orow, orow + P, bias.values()[co]);
      for (std::size_t rr = 0; rr < R; ++rr) kt.axpy(w[co * R + rr], cols->data() + rr * P, orow, P);
    }
  });
  detail::add_macs(static_cast<std::uint64_t>(Cout) * R * P);

  std::vector<Tensor> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return make_result(
      "conv2d", {Cout, Ho, Wo}, std::move(out), std::move(inputs),
      [=](const TensorImpl& o) {
        const auto& kt = simd::kernels();
        const auto& g = o.grad;
        if (weight.requires_grad()) {
          auto gw = detail::grad_buffer(weight);
          for (std::size_t co = 0; co < Cout; ++co)
            for (std::size_t rr = 0; rr < R; ++rr)
              gw[co * R + rr] += kt.dot(g.data() + co * P, cols->data() + rr * P, P);
        }
        if (has_bias && bias.requires_grad()) {
          auto gb = detail::grad_buffer(bias);
          for (std::size_t co = 0; co < Cout; ++co) gb[co] += kt.sum(g.data() + co * P, P);
        }
        if (x.requires_grad()) {
          const auto& w = weight.values();
          std::vector<double> gcols(R * P, 0.0);
          for (std::size_t co = 0; co < Cout; ++co)
            for (std::size_t rr = 0; rr < R; ++rr)
              kt.axpy(w[co * R + rr], g.data() + co * P, gcols.data() + rr * P, P);
          col2im_add(gcols, detail::grad_buffer(x), Cin, H, W, k, stride, padding, Ho, Wo);
        }
      });
}

}  // namespace masa
