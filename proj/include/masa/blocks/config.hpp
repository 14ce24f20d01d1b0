#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "masa/attention.hpp"

namespace masa {

struct StageConfig {
  std::size_t num_blocks = 1;
  std::size_t channels = 64;
  std::size_t heads = 4;
  double ffn_ratio = 3.0;
  double decay_a = 2.0;
  double decay_b = 6.0;
  bool decomposed = true;

  std::size_t ffn_hidden() const;
  MaSAConfig masa_config() const;

  bool operator==(const StageConfig&) const = default;
};

struct ModelConfig {
  std::vector<StageConfig> stages;
  std::size_t num_classes = 1000;
  std::size_t input_resolution = 224;

  // Four stages, channels divisible by heads, integral FFN widths, valid decay
  // ranges, even stem width. Throws ConfigError.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

// "rmt-t", "rmt-s", "rmt-b", "rmt-l", and "tiny" (the desk-scale training
// model: one block per stage, 16 base channels, 32x32 input, 2 classes).
ModelConfig preset(std::string_view name);
std::vector<std::string> preset_names();

// Reference sizes reported for the named presets: params in millions and
// GFLOPs at 224x224.
struct ReferenceCost {
  double params_m;
  double gflops;
};
ReferenceCost reference_cost(std::string_view name);

std::string to_json(const ModelConfig& config);
ModelConfig config_from_json(std::string_view text);
ModelConfig load_config(const std::string& path);

// Hidden width ratio * channels; ConfigError when it is not a positive integer.
std::size_t ffn_hidden_dim(std::size_t channels, double ratio);

}  // namespace masa
