#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "masa/blocks/config.hpp"
#include "masa/blocks/layers.hpp"
#include "masa/blocks/model.hpp"
#include "masa/core/autograd.hpp"
#include "masa/core/error.hpp"
#include "masa/core/ops.hpp"
#include "masa/train/gradcheck.hpp"
#include "oracles.hpp"

namespace masa {
namespace {

using testing::random_tensor;

Tensor delta_kernel(std::size_t channels, std::size_t k) {
  std::vector<double> v(channels * k * k, 0.0);
  for (std::size_t c = 0; c < channels; ++c) v[c * k * k + (k * k) / 2] = 1.0;
  return Tensor::from({channels, k, k}, v);
}

StemParams zero_stem(std::size_t c1) {
  StemParams p;
  const std::size_t widths[] = {c1 / 2, c1 / 2, c1, c1, c1};
  std::size_t in = 3;
  for (std::size_t i = 0; i < StemParams::kConvs; ++i) {
    p.conv[i] = Tensor::zeros({widths[i], in, 3, 3});
    p.norm[i] = {Tensor::ones({widths[i]}), Tensor::zeros({widths[i]})};
    in = widths[i];
  }
  return p;
}

BlockParams random_block(std::mt19937_64& rng, const StageConfig& s, double lo, double hi, bool grad = false) {
  const MaSAConfig mc = s.masa_config();
  const std::size_t c = s.channels, h = s.ffn_hidden(), k = mc.lce_kernel;
  auto r = [&](Shape shape) { return random_tensor(rng, std::move(shape), lo, hi, grad); };
  return {r({c, 3, 3}),
          {r({c}), r({c})},
          {r({c, c}), r({c, c}), r({c, c}), r({c, c}), r({c, k, k})},
          {r({c}), r({c})},
          {r({c, h}), r({h, c})}};
}

StageConfig small_stage(bool decomposed) {
  StageConfig s;
  s.num_blocks = 1;
  s.channels = 4;
  s.heads = 2;
  s.ffn_ratio = 2.0;
  s.decay_a = 2.0;
  s.decay_b = 4.0;
  s.decomposed = decomposed;
  return s;
}

// ---------------------------------------------------------------- stem

TEST(ConvStem, GridIsQuarterResolution) {
  const Tokens t = conv_stem(Tensor::ones({3, 224, 224}), zero_stem(64));
  EXPECT_EQ(t.grid, GridShape(56, 56));
  EXPECT_EQ(t.features.shape(), (Shape{56 * 56, 64}));
  EXPECT_EQ(conv_stem(Tensor::ones({3, 32, 32}), zero_stem(8)).grid, GridShape(8, 8));
}

TEST(ConvStem, ZeroImageGivesZeroTokens) {
  const Model m = build_backbone(preset("tiny"), 3);
  const Tokens t = conv_stem(Tensor::zeros({3, 32, 32}), m.stem);
  for (double v : t.features.values()) EXPECT_EQ(v, 0.0);
}

TEST(ConvStem, RejectsResolutionNotDivisibleByFour) {
  EXPECT_THROW(conv_stem(Tensor::ones({3, 30, 30}), zero_stem(8)), ConfigError);
  EXPECT_THROW(conv_stem(Tensor::ones({1, 32, 32}), zero_stem(8)), DimensionError);
}

// ---------------------------------------------------------------- CPE / FFN

TEST(Cpe, ZeroAndDeltaKernels) {
  std::mt19937_64 rng(1);
  const GridShape grid(3, 4);
  const Tensor x = random_tensor(rng, {12, 5});
  EXPECT_EQ(cpe(x, grid, Tensor::zeros({5, 3, 3})).values(), x.values());
  EXPECT_EQ(cpe(x, grid, delta_kernel(5, 3)).values(), scale(x, 2.0).values());
}

TEST(Cpe, MatchesLoopOracle) {
  std::mt19937_64 rng(2);
  const GridShape grid(4, 3);
  const Tensor x = random_tensor(rng, {12, 2});
  const Tensor k = random_tensor(rng, {2, 3, 3});
  const Tensor img = tokens_to_image(x, 4, 3);
  const auto conv = testing::depthwise_loop(img.values(), k.values(), 2, 4, 3, 3);
  std::vector<double> ref(24);
  for (std::size_t n = 0; n < 12; ++n)
    for (std::size_t c = 0; c < 2; ++c) ref[n * 2 + c] = x.at({n, c}) + conv[c * 12 + n];
  EXPECT_LT(testing::max_abs(ref, cpe(x, grid, k)), 1e-12);
}

TEST(Ffn, ZeroIdentityAndOracle) {
  std::mt19937_64 rng(3);
  const Tensor x = random_tensor(rng, {5, 3}, -2, 2);
  EXPECT_EQ(ffn(x, {Tensor::zeros({3, 6}), Tensor::zeros({6, 3})}).values(), Tensor::zeros({5, 3}).values());
  EXPECT_EQ(ffn(x, {Tensor::eye(3), Tensor::eye(3)}).values(), gelu(x).values());

  const Tensor w1 = random_tensor(rng, {3, 6});
  const Tensor w2 = random_tensor(rng, {6, 3});
  auto h = testing::matmul_loop(x.values(), w1.values(), 5, 3, 6);
  for (double& v : h) v = 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0)));
  EXPECT_LT(testing::max_abs(testing::matmul_loop(h, w2.values(), 5, 6, 3), ffn(x, {w1, w2})), 1e-12);
  EXPECT_THROW(ffn(x, {Tensor::zeros({4, 6}), Tensor::zeros({6, 3})}), DimensionError);
}

TEST(Ffn, HiddenWidthMustBeIntegral) {
  EXPECT_EQ(ffn_hidden_dim(64, 3.0), 192u);
  EXPECT_EQ(ffn_hidden_dim(10, 1.5), 15u);
  EXPECT_THROW(ffn_hidden_dim(5, 1.5), ConfigError);
  EXPECT_THROW(ffn_hidden_dim(5, 0.0), ConfigError);
}

// ---------------------------------------------------------------- RMT block

TEST(RmtBlock, ZeroBranchesAreIdentity) {
  std::mt19937_64 rng(4);
  for (bool decomposed : {false, true}) {
    const StageConfig s = small_stage(decomposed);
    BlockParams p = random_block(rng, s, -1, 1);
    p.cpe = Tensor::zeros({4, 3, 3});
    p.masa.wo = Tensor::zeros({4, 4});
    p.ffn.w2 = Tensor::zeros({8, 4});
    const Tensor x = random_tensor(rng, {6, 4});
    EXPECT_LT(max_abs_diff(rmt_block(x, GridShape(2, 3), p, s.masa_config()), x), 1e-12);
  }
}

TEST(RmtBlock, SingleTokenHandComposition) {
  StageConfig s = small_stage(false);
  s.ffn_ratio = 1.0;
  const MaSAConfig mc = s.masa_config();
  const BlockParams p{delta_kernel(4, 3),
                      {Tensor::ones({4}), Tensor::zeros({4})},
                      {Tensor::eye(4), Tensor::eye(4), Tensor::eye(4), Tensor::eye(4), delta_kernel(4, 5)},
                      {Tensor::ones({4}), Tensor::zeros({4})},
                      {Tensor::eye(4), Tensor::eye(4)}};
  const std::vector<double> x{0.3, -1.2, 2.0, 0.5};
  auto norm = [](std::vector<double> v) {
    double mu = 0, var = 0;
    for (double a : v) mu += a / 4;
    for (double a : v) var += (a - mu) * (a - mu) / 4;
    for (double& a : v) a = (a - mu) / std::sqrt(var + 1e-6);
    return v;
  };
  // cpe doubles, attention and LCE each return the value, FFN reduces to GELU.
  std::vector<double> x1(4), x2(4), x3(4);
  for (std::size_t i = 0; i < 4; ++i) x1[i] = 2 * x[i];
  const auto n1 = norm(x1);
  for (std::size_t i = 0; i < 4; ++i) x2[i] = x1[i] + 2 * n1[i];
  const auto n2 = norm(x2);
  for (std::size_t i = 0; i < 4; ++i) x3[i] = x2[i] + 0.5 * n2[i] * (1 + std::erf(n2[i] / std::sqrt(2.0)));
  EXPECT_LT(testing::max_abs(x3, rmt_block(Tensor::from({1, 4}, x), GridShape(1, 1), p, mc)), 1e-12);
}

TEST(RmtBlock, EveryParameterReceivesGradient) {
  std::mt19937_64 rng(5);
  for (bool decomposed : {false, true}) {
    const StageConfig s = small_stage(decomposed);
    const BlockParams p = random_block(rng, s, -0.5, 0.5, true);
    const Tensor out = rmt_block(random_tensor(rng, {9, 4}), GridShape(3, 3), p, s.masa_config());
    backward(sum(hadamard(out, random_tensor(rng, {9, 4}))));
    const std::vector<Tensor> all{p.cpe,     p.norm1.gain, p.norm1.bias, p.masa.wq, p.masa.wk,
                                  p.masa.wv, p.masa.wo,    p.masa.lce,   p.norm2.gain, p.norm2.bias,
                                  p.ffn.w1,  p.ffn.w2};
    for (std::size_t i = 0; i < all.size(); ++i) {
      ASSERT_TRUE(all[i].has_grad()) << "parameter " << i;
      double mag = 0.0;
      for (double g : all[i].grad()) mag = std::max(mag, std::abs(g));
      EXPECT_GT(mag, 0.0) << "parameter " << i;
    }
  }
}

TEST(RmtBlock, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(6);
  for (bool decomposed : {false, true}) {
    const StageConfig s = small_stage(decomposed);
    const MaSAConfig mc = s.masa_config();
    const GridShape grid(2, 2);
    const BlockParams p = random_block(rng, s, -0.5, 0.5);
    const Tensor w = random_tensor(rng, {4, 4});
    auto fn = [&](const std::vector<Tensor>& in) {
      const BlockParams q{in[1], {in[2], in[3]}, {in[4], in[5], in[6], in[7], in[8]}, {in[9], in[10]}, {in[11], in[12]}};
      return sum(hadamard(rmt_block(in[0], grid, q, mc), w));
    };
    const GradcheckResult r = finite_diff_gradcheck(
        fn, {random_tensor(rng, {4, 4}, -2, 2), p.cpe, p.norm1.gain, p.norm1.bias, p.masa.wq, p.masa.wk, p.masa.wv,
             p.masa.wo, p.masa.lce, p.norm2.gain, p.norm2.bias, p.ffn.w1, p.ffn.w2});
    EXPECT_LT(r.max_rel_error, 1e-6) << "input " << r.input << " coord " << r.coord << " analytic " << r.analytic
                                     << " numeric " << r.numeric;
  }
}

// ---------------------------------------------------------------- downsample

TEST(Downsample, HalvesGridAndMatchesOracle) {
  std::mt19937_64 rng(7);
  const GridShape grid(4, 4);
  const Tensor x = random_tensor(rng, {16, 3});
  const DownsampleParams p{random_tensor(rng, {5, 3, 3, 3}), random_tensor(rng, {5})};
  const Tokens t = downsample(x, grid, p);
  EXPECT_EQ(t.grid, GridShape(2, 2));
  ASSERT_EQ(t.features.shape(), (Shape{4, 5}));
  std::size_t ho = 0, wo = 0;
  const auto img = testing::conv_loop(tokens_to_image(x, 4, 4).values(), p.weight.values(), p.bias.values(), 3, 4, 4, 5,
                                      3, 2, 1, ho, wo);
  EXPECT_LT(max_abs_diff(image_to_tokens(Tensor::from({5, ho, wo}, img)), t.features), 1e-12);

  const DownsampleParams zb{p.weight, Tensor::zeros({5})};
  const Tokens zero = downsample(Tensor::zeros({16, 3}), grid, zb);
  for (double v : zero.features.values()) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(downsample(Tensor::zeros({15, 3}), GridShape(3, 5), zb), ConfigError);
}

TEST(StageGeometry, SidesAt224) {
  // Channels are irrelevant to geometry, so run with a 2-channel stem and zero weights.
  Tokens t = conv_stem(Tensor::zeros({3, 224, 224}), zero_stem(2));
  std::vector<std::size_t> sides{t.grid.height()};
  for (int s = 1; s < 4; ++s) {
    t = downsample(t.features, t.grid, {Tensor::zeros({2, 2, 3, 3}), Tensor::zeros({2})});
    sides.push_back(t.grid.height());
  }
  EXPECT_EQ(sides, (std::vector<std::size_t>{56, 28, 14, 7}));
}

// ---------------------------------------------------------------- model

TEST(Backbone, SameSeedIsBitIdentical) {
  const ModelConfig c = preset("tiny");
  const auto a = build_backbone(c, 11).parameters();
  const auto b = build_backbone(c, 11).parameters();
  const auto other = build_backbone(c, 12).parameters();
  ASSERT_EQ(a.size(), b.size());
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].values(), b[i].values());
    differs = differs || a[i].values() != other[i].values();
  }
  EXPECT_TRUE(differs);
}

TEST(Backbone, NamedParametersAreUniqueAndFinite) {
  const Model m = build_backbone(preset("tiny"), 1);
  std::set<std::string> names;
  for (const auto& [name, t] : m.named_parameters()) {
    EXPECT_TRUE(names.insert(name).second) << name;
    for (double v : t.values()) ASSERT_TRUE(std::isfinite(v));
  }
}

TEST(Backbone, PresetParameterCountsWithinTolerance) {
  for (const std::string name : {"rmt-t", "rmt-s", "rmt-b", "rmt-l"}) {
    const double ref = reference_cost(name).params_m * 1e6;
    const double got = static_cast<double>(count_params(preset(name)));
    EXPECT_LT(std::abs(got - ref) / ref, 0.10) << name << " " << got;
  }
}

TEST(Backbone, PresetFlopsWithinTolerance) {
  for (const std::string name : {"rmt-t", "rmt-s", "rmt-b", "rmt-l"}) {
    const double ref = reference_cost(name).gflops * 1e9;
    const double got = static_cast<double>(count_flops(preset(name), 224));
    EXPECT_LT(std::abs(got - ref) / ref, 0.15) << name << " " << got;
  }
}

TEST(Backbone, PresetArchitectureRows) {
  const ModelConfig t = preset("rmt-t");
  const std::size_t blocks[] = {2, 2, 8, 2}, channels[] = {64, 128, 256, 512}, heads[] = {4, 4, 8, 16};
  for (std::size_t s = 0; s < 4; ++s) {
    EXPECT_EQ(t.stages[s].num_blocks, blocks[s]);
    EXPECT_EQ(t.stages[s].channels, channels[s]);
    EXPECT_EQ(t.stages[s].heads, heads[s]);
    EXPECT_EQ(t.stages[s].ffn_ratio, 3.0);
    EXPECT_EQ(t.stages[s].decomposed, s < 3);
  }
  const ModelConfig s = preset("rmt-s");
  EXPECT_EQ(s.stages[2].num_blocks, 18u);
  EXPECT_EQ(s.stages[0].ffn_ratio, 4.0);
  EXPECT_EQ(s.stages[3].ffn_ratio, 3.0);
}

TEST(Backbone, BuiltModelCountMatchesAnalyticCount) {
  const ModelConfig c = preset("rmt-t");
  EXPECT_EQ(count_params(build_backbone(c, 0)), count_params(c));
  const ModelConfig tiny = preset("tiny");
  EXPECT_EQ(count_params(build_backbone(tiny, 0)), count_params(tiny));
  EXPECT_EQ(param_breakdown(c).total(), count_params(c));
}

TEST(Backbone, InstrumentedForwardMatchesAnalyticFlops) {
  for (const std::string name : {"tiny", "rmt-t"}) {
    ModelConfig c = preset(name);
    c.input_resolution = name == "tiny" ? 64 : 32;
    const Model m = build_backbone(c, 2);
    std::mt19937_64 rng(3);
    const Tensor image = random_tensor(rng, {3, c.input_resolution, c.input_resolution});
    MacCounter counter;
    forward_classify(m, image);
    EXPECT_EQ(counter.count(), count_flops(c, c.input_resolution)) << name;
    EXPECT_EQ(flops_breakdown(c, c.input_resolution).total(), count_flops(c, c.input_resolution));
  }
}

TEST(Backbone, LinearLayerFlopsAreTokensTimesFanInTimesFanOut) {
  MacCounter counter;
  matmul(Tensor::ones({10, 6}), Tensor::ones({6, 7}));
  EXPECT_EQ(counter.count(), 10u * 6 * 7);
}

TEST(ForwardClassify, ZeroHeadGivesZeroLogits) {
  Model m = build_backbone(preset("tiny"), 4);
  m.head_weight = Tensor::zeros(m.head_weight.shape());
  std::mt19937_64 rng(5);
  const Tensor logits = forward_classify(m, random_tensor(rng, {3, 32, 32}));
  EXPECT_EQ(logits.values(), (std::vector<double>{0, 0}));
}

TEST(ForwardClassify, FiniteAndDeterministicOnRmtT) {
  ModelConfig c = preset("rmt-t");
  c.input_resolution = 32;
  const Model m = build_backbone(c, 6);
  std::mt19937_64 rng(7);
  const Tensor image = random_tensor(rng, {3, 32, 32});
  const Tensor a = forward_classify(m, image);
  EXPECT_EQ(a.shape(), (Shape{1000}));
  for (double v : a.values()) ASSERT_TRUE(std::isfinite(v));
  EXPECT_EQ(forward_classify(m, image).values(), a.values());
  EXPECT_THROW(forward_classify(m, Tensor::zeros({3, 64, 64})), ConfigError);
}

// ---------------------------------------------------------------- configuration

TEST(Config, JsonRoundTrip) {
  for (const std::string& name : preset_names()) {
    const ModelConfig c = preset(name);
    EXPECT_EQ(config_from_json(to_json(c)), c) << name;
  }
}

TEST(Config, JsonSchemaKeys) {
  const ModelConfig c = config_from_json(R"({
    "num_classes": 10, "input_resolution": 64,
    "stages": [
      {"blocks": 1, "channels": 8, "heads": 2, "ffn_ratio": 2, "decay_a": 2, "decay_b": 4, "decomposed": true},
      {"blocks": 1, "channels": 8, "heads": 2, "ffn_ratio": 2, "decay_a": 2, "decay_b": 4, "decomposed": true},
      {"blocks": 2, "channels": 16, "heads": 4, "ffn_ratio": 2, "decay_a": 2, "decay_b": 5, "decomposed": true},
      {"blocks": 1, "channels": 16, "heads": 4, "ffn_ratio": 2, "decay_a": 2, "decay_b": 6, "decomposed": false}]})");
  EXPECT_EQ(c.num_classes, 10u);
  EXPECT_EQ(c.stages[2].num_blocks, 2u);
  EXPECT_FALSE(c.stages[3].decomposed);
  EXPECT_THROW(config_from_json("{not json"), ConfigError);
  EXPECT_THROW(config_from_json(R"({"num_classes": 2, "input_resolution": 32, "stages": []})"), ConfigError);
}

TEST(Config, InvalidConfigurationsAreRejected) {
  ModelConfig c = preset("tiny");
  c.stages[1].heads = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = preset("tiny");
  c.input_resolution = 48;
  EXPECT_THROW(c.validate(), ConfigError);
  c = preset("tiny");
  c.stages[0].decay_b = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = preset("tiny");
  c.stages.pop_back();
  EXPECT_THROW(build_backbone(c, 0), ConfigError);
  EXPECT_THROW(preset("rmt-xl"), UsageError);
}

}  // namespace
}  // namespace masa
