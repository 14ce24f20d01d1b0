#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "masa/blocks/config.hpp"
#include "masa/blocks/layers.hpp"

namespace masa {

struct Model {
  ModelConfig config;
  StemParams stem;
  std::vector<std::vector<BlockParams>> stages;
  std::vector<DownsampleParams> downsamples;  // between consecutive stages
  NormParams final_norm;
  Tensor head_weight;  // [C4, num_classes]
  Tensor head_bias;    // [num_classes]

  // Every trainable tensor in a fixed order.
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::vector<Tensor> parameters() const;
};

// Truncated normal (sigma 0.02, cut at 2 sigma) for linear projections and
// depthwise kernels, He-scaled truncated normal for dense convolutions, ones
// for norm gains and zeros for biases. A pure function of (config, seed).
Model build_backbone(const ModelConfig& config, std::uint64_t seed);

// Global average pool of the final tokens followed by a linear head.
Tensor forward_classify(const Model& model, const Tensor& image);

std::uint64_t count_params(const Model& model);

// Analytic accounting. One multiply-accumulate counts as one FLOP.
struct CostBreakdown {
  std::uint64_t stem = 0;
  std::vector<std::uint64_t> stages;       // blocks of each stage
  std::vector<std::uint64_t> downsamples;  // transition into stage s+1
  std::uint64_t head = 0;                  // final norm and classifier

  std::uint64_t total() const;
};

CostBreakdown param_breakdown(const ModelConfig& config);
CostBreakdown flops_breakdown(const ModelConfig& config, std::size_t resolution);

std::uint64_t count_params(const ModelConfig& config);
std::uint64_t count_flops(const ModelConfig& config, std::size_t resolution);

}  // namespace masa
