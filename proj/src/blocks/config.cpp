#include "masa/blocks/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "masa/core/error.hpp"

namespace masa {

namespace {

struct PresetRow {
  std::string_view name;
  std::size_t blocks[4];
  std::size_t channels[4];
  std::size_t heads[4];
  double ratios[4];
  double decay_b[4];
  ReferenceCost cost;
};

constexpr PresetRow kPresets[] = {
    {"rmt-t", {2, 2, 8, 2}, {64, 128, 256, 512}, {4, 4, 8, 16}, {3, 3, 3, 3}, {6, 6, 8, 8}, {14, 2.5}},
    {"rmt-s", {3, 4, 18, 4}, {64, 128, 256, 512}, {4, 4, 8, 16}, {4, 4, 3, 3}, {6, 6, 8, 8}, {27, 4.5}},
    {"rmt-b", {4, 8, 25, 8}, {80, 160, 320, 512}, {5, 5, 10, 16}, {4, 4, 3, 3}, {7, 7, 8, 8}, {54, 9.7}},
    {"rmt-l", {4, 8, 25, 8}, {112, 224, 448, 640}, {7, 7, 14, 20}, {4, 4, 3, 3}, {8, 8, 8, 8}, {95, 18.2}},
};

const PresetRow* find_row(std::string_view name) {
  for (const PresetRow& row : kPresets)
    if (row.name == name) return &row;
  return nullptr;
}

std::string preset_list() {
  std::string s;
  for (const std::string& n : preset_names()) s += (s.empty() ? "" : ", ") + n;
  return s;
}

}  // namespace

std::size_t ffn_hidden_dim(std::size_t channels, double ratio) {
  const double hidden = ratio * static_cast<double>(channels);
  const double rounded = std::round(hidden);
  if (!(ratio > 0.0) || std::abs(hidden - rounded) > 1e-9 || rounded < 1.0) {
    throw ConfigError("FFN ratio " + std::to_string(ratio) + " x " + std::to_string(channels) +
                      " channels is not a positive integer width");
  }
  return static_cast<std::size_t>(rounded);
}

std::size_t StageConfig::ffn_hidden() const { return ffn_hidden_dim(channels, ffn_ratio); }

MaSAConfig StageConfig::masa_config() const {
  MaSAConfig c;
  c.dim = channels;
  c.num_heads = heads;
  c.decomposed = decomposed;
  c.decay = gamma_schedule(decay_a, decay_b, heads);
  c.validate();
  return c;
}

void ModelConfig::validate() const {
  if (stages.size() != 4) {
    throw ConfigError("model needs exactly four stages, got " + std::to_string(stages.size()));
  }
  if (num_classes == 0) throw ConfigError("num_classes must be positive");
  if (input_resolution == 0 || input_resolution % 32 != 0) {
    throw ConfigError("input resolution must be a positive multiple of 32, got " +
                      std::to_string(input_resolution));
  }
  if (stages[0].channels % 2 != 0) throw ConfigError("stage-1 channels must be even for the stem");
  for (std::size_t s = 0; s < stages.size(); ++s) {
    const StageConfig& st = stages[s];
    if (st.num_blocks == 0 || st.channels == 0 || st.heads == 0) {
      throw ConfigError("stage " + std::to_string(s + 1) + " has a zero block, channel or head count");
    }
    st.masa_config();
    st.ffn_hidden();
  }
}

ModelConfig preset(std::string_view name) {
  ModelConfig config;
  if (name == "tiny") {
    const std::size_t channels[4] = {16, 32, 64, 128};
    const std::size_t heads[4] = {1, 2, 4, 8};
    const double decay_b[4] = {6, 6, 8, 8};
    for (int s = 0; s < 4; ++s) {
      config.stages.push_back({1, channels[s], heads[s], 3.0, 2.0, decay_b[s], s < 3});
    }
    config.num_classes = 2;
    config.input_resolution = 32;
    return config;
  }
  const PresetRow* row = find_row(name);
  if (row == nullptr) {
    throw UsageError("unknown preset '" + std::string(name) + "'; known presets: " + preset_list());
  }
  for (int s = 0; s < 4; ++s) {
    config.stages.push_back({row->blocks[s], row->channels[s], row->heads[s], row->ratios[s], 2.0,
                             row->decay_b[s], s < 3});
  }
  return config;
}

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (const PresetRow& row : kPresets) names.emplace_back(row.name);
  names.emplace_back("tiny");
  return names;
}

ReferenceCost reference_cost(std::string_view name) {
  const PresetRow* row = find_row(name);
  if (row == nullptr) throw UsageError("no reference cost for preset '" + std::string(name) + "'");
  return row->cost;
}

std::string to_json(const ModelConfig& config) {
  nlohmann::ordered_json j;
  j["stages"] = nlohmann::ordered_json::array();
  for (const StageConfig& s : config.stages) {
    nlohmann::ordered_json js;
    js["blocks"] = s.num_blocks;
    js["channels"] = s.channels;
    js["heads"] = s.heads;
    js["ffn_ratio"] = s.ffn_ratio;
    js["decay_a"] = s.decay_a;
    js["decay_b"] = s.decay_b;
    js["decomposed"] = s.decomposed;
    j["stages"].push_back(std::move(js));
  }
  j["num_classes"] = config.num_classes;
  j["input_resolution"] = config.input_resolution;
  return j.dump(2);
}

ModelConfig config_from_json(std::string_view text) {
  ModelConfig config;
  try {
    const auto j = nlohmann::json::parse(text);
    for (const auto& js : j.at("stages")) {
      StageConfig s;
      s.num_blocks = js.at("blocks").get<std::size_t>();
      s.channels = js.at("channels").get<std::size_t>();
      s.heads = js.at("heads").get<std::size_t>();
      s.ffn_ratio = js.at("ffn_ratio").get<double>();
      s.decay_a = js.at("decay_a").get<double>();
      s.decay_b = js.at("decay_b").get<double>();
      s.decomposed = js.at("decomposed").get<bool>();
      config.stages.push_back(s);
    }
    config.num_classes = j.at("num_classes").get<std::size_t>();
    config.input_resolution = j.at("input_resolution").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid model config JSON: ") + e.what());
  }
  config.validate();
  return config;
}

ModelConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

}  // namespace masa
