#include "masa/blocks/model.hpp"

#include <cmath>
#include <random>

#include "masa/core/error.hpp"
#include "masa/core/ops.hpp"

namespace masa {
namespace {

class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  Tensor trunc_normal(Shape shape, double sigma) {
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<double> data(shape_numel(shape));
    for (double& v : data) {
      double z = dist(rng_);
      while (std::abs(z) > 2.0) z = dist(rng_);
      v = sigma * z;
    }
    return Tensor::from(std::move(shape), std::move(data), true);
  }

  Tensor linear(std::size_t in, std::size_t out) { return trunc_normal({in, out}, 0.02); }

  Tensor conv(std::size_t out, std::size_t in, std::size_t k) {
    return trunc_normal({out, in, k, k}, std::sqrt(2.0 / static_cast<double>(in * k * k)));
  }

  static NormParams norm(std::size_t c) { return {Tensor::ones({c}, true), Tensor::zeros({c}, true)}; }

 private:
  std::mt19937_64 rng_;
};

BlockParams make_block(Initializer& init, const StageConfig& stage) {
  const std::size_t c = stage.channels, hidden = stage.ffn_hidden();
  const std::size_t k = stage.masa_config().lce_kernel;
  BlockParams b;
  b.cpe = init.trunc_normal({c, 3, 3}, 0.02);
  b.norm1 = Initializer::norm(c);
  b.masa.wq = init.linear(c, c);
  b.masa.wk = init.linear(c, c);
  b.masa.wv = init.linear(c, c);
  b.masa.wo = init.linear(c, c);
  b.masa.lce = init.trunc_normal({c, k, k}, 0.02);
  b.norm2 = Initializer::norm(c);
  b.ffn.w1 = init.linear(c, hidden);
  b.ffn.w2 = init.linear(hidden, c);
  return b;
}

std::array<std::size_t, StemParams::kConvs> stem_widths(std::size_t c1) {
  return {c1 / 2, c1 / 2, c1, c1, c1};
}

}  // namespace

Model build_backbone(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Initializer init(seed);
  Model m;
  m.config = config;

  const auto widths = stem_widths(config.stages[0].channels);
  std::size_t in = 3;
  for (std::size_t i = 0; i < StemParams::kConvs; ++i) {
    m.stem.conv[i] = init.conv(widths[i], in, 3);
    m.stem.norm[i] = Initializer::norm(widths[i]);
    in = widths[i];
  }
  for (std::size_t s = 0; s < config.stages.size(); ++s) {
    const StageConfig& stage = config.stages[s];
    if (s > 0) {
      const std::size_t prev = config.stages[s - 1].channels;
      m.downsamples.push_back({init.conv(stage.channels, prev, 3), Tensor::zeros({stage.channels}, true)});
    }
    std::vector<BlockParams> blocks;
    for (std::size_t b = 0; b < stage.num_blocks; ++b) blocks.push_back(make_block(init, stage));
    m.stages.push_back(std::move(blocks));
  }
  const std::size_t last = config.stages.back().channels;
  m.final_norm = Initializer::norm(last);
  m.head_weight = init.linear(last, config.num_classes);
  m.head_bias = Tensor::zeros({config.num_classes}, true);
  return m;
}

std::vector<std::pair<std::string, Tensor>> Model::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t i = 0; i < StemParams::kConvs; ++i) {
    const std::string p = "stem." + std::to_string(i) + ".";
    out.emplace_back(p + "conv", stem.conv[i]);
    out.emplace_back(p + "bn.gain", stem.norm[i].gain);
    out.emplace_back(p + "bn.bias", stem.norm[i].bias);
  }
  for (std::size_t s = 0; s < stages.size(); ++s) {
    if (s > 0) {
      const std::string p = "downsample." + std::to_string(s) + ".";
      out.emplace_back(p + "weight", downsamples[s - 1].weight);
      out.emplace_back(p + "bias", downsamples[s - 1].bias);
    }
    for (std::size_t b = 0; b < stages[s].size(); ++b) {
      const BlockParams& bp = stages[s][b];
      const std::string p = "stage" + std::to_string(s + 1) + "." + std::to_string(b) + ".";
      out.emplace_back(p + "cpe", bp.cpe);
      out.emplace_back(p + "norm1.gain", bp.norm1.gain);
      out.emplace_back(p + "norm1.bias", bp.norm1.bias);
      out.emplace_back(p + "masa.wq", bp.masa.wq);
      out.emplace_back(p + "masa.wk", bp.masa.wk);
      out.emplace_back(p + "masa.wv", bp.masa.wv);
      out.emplace_back(p + "masa.wo", bp.masa.wo);
      out.emplace_back(p + "masa.lce", bp.masa.lce);
      out.emplace_back(p + "norm2.gain", bp.norm2.gain);
      out.emplace_back(p + "norm2.bias", bp.norm2.bias);
      out.emplace_back(p + "ffn.w1", bp.ffn.w1);
      out.emplace_back(p + "ffn.w2", bp.ffn.w2);
    }
  }
  out.emplace_back("final_norm.gain", final_norm.gain);
  out.emplace_back("final_norm.bias", final_norm.bias);
  out.emplace_back("head.weight", head_weight);
  out.emplace_back("head.bias", head_bias);
  return out;
}

std::vector<Tensor> Model::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

Tensor forward_classify(const Model& model, const Tensor& image) {
  const std::size_t r = model.config.input_resolution;
  if (image.shape() != Shape{3, r, r}) {
    throw ConfigError("model expects a [3, " + std::to_string(r) + ", " + std::to_string(r) +
                      "] image, got " + shape_str(image.shape()));
  }
  Tokens t = conv_stem(image, model.stem);
  for (std::size_t s = 0; s < model.stages.size(); ++s) {
    if (s > 0) t = downsample(t.features, t.grid, model.downsamples[s - 1]);
    const MaSAConfig mc = model.config.stages[s].masa_config();
    for (const BlockParams& bp : model.stages[s]) t.features = rmt_block(t.features, t.grid, bp, mc);
  }
  const Tensor pooled =
      mean_rows(layer_norm(t.features, model.final_norm.gain, model.final_norm.bias));
  const std::size_t c = pooled.dim(0);
  return add(reshape(matmul(reshape(pooled, {1, c}), model.head_weight), {model.config.num_classes}),
             model.head_bias);
}

std::uint64_t count_params(const Model& model) {
  std::uint64_t n = 0;
  for (const Tensor& t : model.parameters()) n += t.numel();
  return n;
}

}  // namespace masa
