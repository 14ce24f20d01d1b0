#include "masa/blocks/layers.hpp"

#include <string>

#include "masa/core/error.hpp"
#include "masa/core/ops.hpp"

namespace masa {

Tokens conv_stem(const Tensor& image, const StemParams& params) {
  if (image.rank() != 3 || image.dim(0) != 3 || image.dim(1) != image.dim(2)) {
    throw DimensionError("stem expects a square [3, R, R] image, got " + shape_str(image.shape()));
  }
  if (image.dim(1) % 4 != 0) {
    throw ConfigError("stem needs a resolution divisible by 4, got " + std::to_string(image.dim(1)));
  }
  Tensor x = image;
  for (std::size_t i = 0; i < StemParams::kConvs; ++i) {
    x = conv2d(x, params.conv[i], Tensor{}, StemParams::kStrides[i], 1);
    x = channel_affine(x, params.norm[i].gain, params.norm[i].bias);
    if (i + 1 < StemParams::kConvs) x = gelu(x);
  }
  const GridShape grid{x.dim(1), x.dim(2)};
  return {image_to_tokens(x), grid};
}

Tensor cpe(const Tensor& x, const GridShape& grid, const Tensor& kernel) {
  return add(x, lce(x, grid, kernel));
}

Tensor ffn(const Tensor& x, const FfnParams& params) {
  if (x.rank() != 2 || params.w1.rank() != 2 || params.w2.rank() != 2 ||
      params.w1.dim(0) != x.dim(1) || params.w2.dim(0) != params.w1.dim(1) ||
      params.w2.dim(1) != x.dim(1)) {
    throw DimensionError("ffn weights " + shape_str(params.w1.shape()) + ", " +
                         shape_str(params.w2.shape()) + " do not fit input " + shape_str(x.shape()));
  }
  return matmul(gelu(matmul(x, params.w1)), params.w2);
}

Tensor rmt_block(const Tensor& x, const GridShape& grid, const BlockParams& params,
                 const MaSAConfig& config) {
  const Tensor x1 = cpe(x, grid, params.cpe);
  const Tensor x2 =
      add(x1, masa_layer_forward(layer_norm(x1, params.norm1.gain, params.norm1.bias), params.masa, config, grid));
  return add(x2, ffn(layer_norm(x2, params.norm2.gain, params.norm2.bias), params.ffn));
}

Tokens downsample(const Tensor& x, const GridShape& grid, const DownsampleParams& params) {
  if (grid.height() % 2 != 0 || grid.width() % 2 != 0) {
    throw ConfigError("downsampling needs even grid sides, got " + std::to_string(grid.height()) + "x" +
                      std::to_string(grid.width()));
  }
  const Tensor image = tokens_to_image(x, grid.height(), grid.width());
  const Tensor y = conv2d(image, params.weight, params.bias, 2, 1);
  return {image_to_tokens(y), GridShape{y.dim(1), y.dim(2)}};
}

}  // namespace masa
