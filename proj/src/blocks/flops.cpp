#include <numeric>

#include "masa/blocks/model.hpp"
#include "masa/core/error.hpp"

namespace masa {

std::uint64_t CostBreakdown::total() const {
  return stem + head + std::accumulate(stages.begin(), stages.end(), std::uint64_t{0}) +
         std::accumulate(downsamples.begin(), downsamples.end(), std::uint64_t{0});
}

CostBreakdown param_breakdown(const ModelConfig& config) {
  config.validate();
  CostBreakdown p;
  const std::uint64_t c1 = config.stages[0].channels;
  const std::uint64_t widths[] = {c1 / 2, c1 / 2, c1, c1, c1};
  std::uint64_t in = 3;
  for (std::uint64_t w : widths) {
    p.stem += w * in * 9 + 2 * w;
    in = w;
  }
  for (std::size_t s = 0; s < config.stages.size(); ++s) {
    const StageConfig& st = config.stages[s];
    const std::uint64_t c = st.channels, hidden = st.ffn_hidden(), k = st.masa_config().lce_kernel;
    if (s > 0) {
      const std::uint64_t prev = config.stages[s - 1].channels;
      p.downsamples.push_back(c * prev * 9 + c);
    }
    const std::uint64_t block = 9 * c + 2 * c + 4 * c * c + c * k * k + 2 * c + 2 * c * hidden;
    p.stages.push_back(st.num_blocks * block);
  }
  const std::uint64_t last = config.stages.back().channels;
  p.head = 2 * last + last * config.num_classes + config.num_classes;
  return p;
}

CostBreakdown flops_breakdown(const ModelConfig& config, std::size_t resolution) {
  config.validate();
  if (resolution == 0 || resolution % 32 != 0) {
    throw ConfigError("FLOPs need a resolution divisible by 32, got " + std::to_string(resolution));
  }
  CostBreakdown f;
  const std::uint64_t c1 = config.stages[0].channels;
  const std::uint64_t widths[] = {c1 / 2, c1 / 2, c1, c1, c1};
  std::uint64_t in = 3, side = resolution;
  for (std::size_t i = 0; i < StemParams::kConvs; ++i) {
    side = (side + 2 - 3) / StemParams::kStrides[i] + 1;
    f.stem += widths[i] * in * 9 * side * side;
    in = widths[i];
  }
  for (std::size_t s = 0; s < config.stages.size(); ++s) {
    const StageConfig& st = config.stages[s];
    const std::uint64_t c = st.channels;
    if (s > 0) {
      const std::uint64_t prev = config.stages[s - 1].channels;
      side /= 2;
      f.downsamples.push_back(c * prev * 9 * side * side);
    }
    const GridShape grid{side, side};
    const std::uint64_t n = grid.tokens();
    const std::uint64_t block = n * c * 9 + masa_layer_macs(st.masa_config(), grid) + 2 * n * c * st.ffn_hidden();
    f.stages.push_back(st.num_blocks * block);
  }
  f.head = config.stages.back().channels * config.num_classes;
  return f;
}

std::uint64_t count_params(const ModelConfig& config) { return param_breakdown(config).total(); }

std::uint64_t count_flops(const ModelConfig& config, std::size_t resolution) {
  return flops_breakdown(config, resolution).total();
}

}  // namespace masa
