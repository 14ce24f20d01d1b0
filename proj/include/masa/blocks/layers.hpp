#pragma once

// Backbone building blocks. Token features are [N, C] with N = H * W laid out
// row-major over the grid.

#include <array>
#include <cstddef>
#include <utility>
#include <vector>

#include "masa/attention.hpp"
#include "masa/core/tensor.hpp"
#include "masa/decay.hpp"

namespace masa {

struct NormParams {
  Tensor gain;  // [C]
  Tensor bias;  // [C]
};

// Five 3x3 convolutions with strides 2,1,2,1,1 and widths C/2, C/2, C, C, C.
// Each conv is followed by a frozen-statistics batch norm (a per-channel
// affine); GELU follows all but the last.
struct StemParams {
  static constexpr std::size_t kConvs = 5;
  static constexpr std::array<std::size_t, kConvs> kStrides{2, 1, 2, 1, 1};
  std::array<Tensor, kConvs> conv;      // [Cout, Cin, 3, 3]
  std::array<NormParams, kConvs> norm;  // [Cout]
};

struct FfnParams {
  Tensor w1;  // [C, hidden]
  Tensor w2;  // [hidden, C]
};

struct BlockParams {
  Tensor cpe;  // [C, 3, 3]
  NormParams norm1;
  MaSAParams masa;
  NormParams norm2;
  FfnParams ffn;
};

struct DownsampleParams {
  Tensor weight;  // [C', C, 3, 3]
  Tensor bias;    // [C']
};

struct Tokens {
  Tensor features;  // [N, C]
  GridShape grid;
};

Tokens conv_stem(const Tensor& image, const StemParams& params);

// X + DWConv3x3(X) on the grid.
Tensor cpe(const Tensor& x, const GridShape& grid, const Tensor& kernel);

// GELU(X W1) W2.
Tensor ffn(const Tensor& x, const FfnParams& params);

// X1 = cpe(X); X2 = X1 + MaSA(LN(X1)); X3 = X2 + FFN(LN(X2)).
Tensor rmt_block(const Tensor& x, const GridShape& grid, const BlockParams& params,
                 const MaSAConfig& config);

// Stride-2 3x3 conv halving both grid sides. ConfigError on odd sides.
Tokens downsample(const Tensor& x, const GridShape& grid, const DownsampleParams& params);

}  // namespace masa
