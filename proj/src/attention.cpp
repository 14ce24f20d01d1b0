#include "masa/attention.hpp"

#include <cmath>
#include <string>

#include "masa/core/error.hpp"
#include "masa/core/ops.hpp"

namespace masa {
namespace {

void check_qkv(const char* op, const Tensor& q, const Tensor& k, const Tensor& v, std::size_t rank) {
  if (q.rank() != rank || k.shape() != q.shape() || v.shape() != q.shape()) {
    throw DimensionError(std::string(op) + " needs Q, K, V of equal rank-" + std::to_string(rank) +
                         " shape, got " + shape_str(q.shape()) + ", " + shape_str(k.shape()) + ", " +
                         shape_str(v.shape()));
  }
}

void check_grid(const char* op, std::size_t tokens, const GridShape& grid) {
  if (tokens != grid.tokens()) {
    throw DimensionError(std::string(op) + ": " + std::to_string(tokens) + " tokens do not fill a " +
                         std::to_string(grid.height()) + "x" + std::to_string(grid.width()) + " grid");
  }
}

Tensor scores(const Tensor& q, const Tensor& k, AttentionOptions options) {
  Tensor s = matmul(q, transpose(k));
  if (options.scale_logits) s = scale(s, 1.0 / std::sqrt(static_cast<double>(q.shape().back())));
  return s;
}

bool any_enabled(std::span<const Decay> decays) {
  for (const Decay& d : decays)
    if (d.enabled()) return true;
  return false;
}

// Stacks one [L, L] matrix per head into [heads, 1, L, L] (or [heads, L, L]).
Tensor stack_heads(std::span<const Decay> decays, std::size_t L, bool broadcast_axis,
                   Tensor (*make)(std::size_t, double)) {
  std::vector<double> data;
  data.reserve(decays.size() * L * L);
  for (const Decay& d : decays) {
    if (d.enabled()) {
      const Tensor m = make(L, d.gamma());
      data.insert(data.end(), m.values().begin(), m.values().end());
    } else {
      data.insert(data.end(), L * L, 1.0);
    }
  }
  if (broadcast_axis) return Tensor::from({decays.size(), 1, L, L}, std::move(data));
  return Tensor::from({decays.size(), L, L}, std::move(data));
}

}  // namespace

Tensor retention_recurrent(const Tensor& q, const Tensor& k, const Tensor& v, double gamma) {
  check_qkv("retention_recurrent", q, k, v, 2);
  Decay::rate(gamma);
  const std::size_t L = q.dim(0), d = q.dim(1);
  const auto& dq = q.values();
  const auto& dk = k.values();
  const auto& dv = v.values();
  std::vector<double> state(d * d, 0.0);
  std::vector<double> out(L * d, 0.0);
  for (std::size_t n = 0; n < L; ++n) {
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j)
        state[i * d + j] = gamma * state[i * d + j] + dk[n * d + i] * dv[n * d + j];
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) out[n * d + j] += dq[n * d + i] * state[i * d + j];
  }
  return Tensor::from({L, d}, std::move(out));
}

Tensor retention_parallel(const Tensor& q, const Tensor& k, const Tensor& v, double gamma) {
  check_qkv("retention_parallel", q, k, v, 2);
  const Tensor d = decay_causal_1d(q.dim(0), gamma);
  return matmul(hadamard(matmul(q, transpose(k)), d), v);
}

Tensor bi_retention(const Tensor& q, const Tensor& k, const Tensor& v, double gamma) {
  check_qkv("bi_retention", q, k, v, 2);
  const Tensor d = decay_bidirectional_1d(q.dim(0), gamma);
  return matmul(hadamard(matmul(q, transpose(k)), d), v);
}

Tensor softmax_attention(const Tensor& q, const Tensor& k, const Tensor& v, AttentionOptions options) {
  if (q.rank() < 2 || k.shape() != q.shape() || v.shape() != q.shape()) {
    throw DimensionError("softmax_attention needs equal Q, K, V shapes, got " + shape_str(q.shape()) +
                         ", " + shape_str(k.shape()) + ", " + shape_str(v.shape()));
  }
  return matmul(softmax_last(scores(q, k, options)), v);
}

Tensor masa_full_heads(const Tensor& q, const Tensor& k, const Tensor& v, const GridShape& grid,
                       std::span<const Decay> decays, AttentionOptions options) {
  check_qkv("masa_full", q, k, v, 3);
  check_grid("masa_full", q.dim(1), grid);
  if (decays.size() != q.dim(0)) {
    throw ConfigError("masa_full: " + std::to_string(decays.size()) + " decay rates for " +
                      std::to_string(q.dim(0)) + " heads");
  }
  Tensor attn = softmax_last(scores(q, k, options));
  if (any_enabled(decays)) {
    const std::size_t N = grid.tokens();
    std::vector<double> data;
    data.reserve(decays.size() * N * N);
    for (const Decay& d : decays) {
      if (d.enabled()) {
        const Tensor m = decay_manhattan_2d(grid, d.gamma());
        data.insert(data.end(), m.values().begin(), m.values().end());
      } else {
        data.insert(data.end(), N * N, 1.0);
      }
    }
    attn = hadamard(attn, Tensor::from({decays.size(), N, N}, std::move(data)));
  }
  return matmul(attn, v);
}

Tensor masa_full(const Tensor& q, const Tensor& k, const Tensor& v, const GridShape& grid,
                 Decay decay, AttentionOptions options) {
  check_qkv("masa_full", q, k, v, 2);
  const Shape s3{1, q.dim(0), q.dim(1)};
  const Decay decays[] = {decay};
  return reshape(masa_full_heads(reshape(q, s3), reshape(k, s3), reshape(v, s3), grid, decays, options),
                 q.shape());
}

Tensor masa_decomposed_heads(const Tensor& q, const Tensor& k, const Tensor& v,
                             const GridShape& grid, std::span<const Decay> decays,
                             AttentionOptions options) {
  check_qkv("masa_decomposed", q, k, v, 3);
  check_grid("masa_decomposed", q.dim(1), grid);
  const std::size_t heads = q.dim(0), d = q.dim(2), H = grid.height(), W = grid.width();
  if (decays.size() != heads) {
    throw ConfigError("masa_decomposed: " + std::to_string(decays.size()) + " decay rates for " +
                      std::to_string(heads) + " heads");
  }
  const bool decay_on = any_enabled(decays);
  const Shape rows{heads, H, W, d};
  const Tensor qr = reshape(q, rows);
  const Tensor kr = reshape(k, rows);
  const Tensor vr = reshape(v, rows);

  // Along the width: one W x W attention per grid row.
  Tensor attn_w = softmax_last(scores(qr, kr, options));
  if (decay_on) attn_w = hadamard(attn_w, stack_heads(decays, W, true, &decay_bidirectional_1d));
  const Tensor z = matmul(attn_w, vr);

  // Along the height: one H x H attention per grid column.
  const Tensor qc = permute(qr, {0, 2, 1, 3});
  const Tensor kc = permute(kr, {0, 2, 1, 3});
  const Tensor zc = permute(z, {0, 2, 1, 3});
  Tensor attn_h = softmax_last(scores(qc, kc, options));
  if (decay_on) attn_h = hadamard(attn_h, stack_heads(decays, H, true, &decay_bidirectional_1d));
  const Tensor out = matmul(attn_h, zc);

  return reshape(permute(out, {0, 2, 1, 3}), {heads, H * W, d});
}

Tensor masa_decomposed(const Tensor& q, const Tensor& k, const Tensor& v, const GridShape& grid,
                       Decay decay, AttentionOptions options) {
  check_qkv("masa_decomposed", q, k, v, 2);
  const Shape s3{1, q.dim(0), q.dim(1)};
  const Decay decays[] = {decay};
  return reshape(
      masa_decomposed_heads(reshape(q, s3), reshape(k, s3), reshape(v, s3), grid, decays, options),
      q.shape());
}

Tensor lce(const Tensor& v, const GridShape& grid, const Tensor& kernel) {
  if (v.rank() != 2) throw DimensionError("lce needs V as [N, d], got " + shape_str(v.shape()));
  check_grid("lce", v.dim(0), grid);
  return image_to_tokens(depthwise_conv2d(tokens_to_image(v, grid.height(), grid.width()), kernel));
}

std::uint64_t masa_full_macs(const GridShape& grid, std::size_t head_dim) noexcept {
  const std::uint64_t n = grid.tokens();
  return 2 * n * n * head_dim;
}

std::uint64_t masa_decomposed_macs(const GridShape& grid, std::size_t head_dim) noexcept {
  const std::uint64_t n = grid.tokens();
  return 2 * n * (grid.height() + grid.width()) * head_dim;
}

void MaSAConfig::validate() const {
  if (dim == 0 || num_heads == 0) throw ConfigError("MaSA dim and head count must be positive");
  if (dim % num_heads != 0) {
    throw ConfigError("MaSA dim " + std::to_string(dim) + " is not divisible by " +
                      std::to_string(num_heads) + " heads");
  }
  if (decay.num_heads() != num_heads) {
    throw ConfigError("decay schedule has " + std::to_string(decay.num_heads()) + " rates for " +
                      std::to_string(num_heads) + " heads");
  }
  if (lce_kernel % 2 == 0) throw ConfigError("LCE kernel size must be odd");
}

MaSAParams MaSAParams::zeros(const MaSAConfig& config, bool requires_grad) {
  config.validate();
  const std::size_t c = config.dim, k = config.lce_kernel;
  return {Tensor::zeros({c, c}, requires_grad), Tensor::zeros({c, c}, requires_grad),
          Tensor::zeros({c, c}, requires_grad), Tensor::zeros({c, c}, requires_grad),
          Tensor::zeros({c, k, k}, requires_grad)};
}

void MaSAParams::check(const MaSAConfig& config) const {
  config.validate();
  const std::size_t c = config.dim, k = config.lce_kernel;
  const Shape proj{c, c};
  for (const Tensor* t : {&wq, &wk, &wv, &wo}) {
    if (!t->defined() || t->shape() != proj) {
      throw ConfigError("MaSA projection must be " + shape_str(proj) + ", got " +
                        (t->defined() ? shape_str(t->shape()) : std::string("undefined")));
    }
  }
  if (!lce.defined() || lce.shape() != Shape{c, k, k}) {
    throw ConfigError("LCE kernel must be " + shape_str({c, k, k}));
  }
}

Tensor masa_layer_forward(const Tensor& x, const MaSAParams& params, const MaSAConfig& config,
                          const GridShape& grid) {
  params.check(config);
  if (x.rank() != 2 || x.dim(1) != config.dim) {
    throw DimensionError("MaSA layer input must be [N, " + std::to_string(config.dim) + "], got " +
                         shape_str(x.shape()));
  }
  check_grid("masa_layer_forward", x.dim(0), grid);
  const std::size_t N = x.dim(0), heads = config.num_heads, hd = config.head_dim();

  const Tensor q = matmul(x, params.wq);
  const Tensor k = matmul(x, params.wk);
  const Tensor v = matmul(x, params.wv);
  auto split = [&](const Tensor& t) { return permute(reshape(t, {N, heads, hd}), {1, 0, 2}); };

  std::vector<Decay> decays;
  decays.reserve(heads);
  for (double g : config.decay.gammas) decays.push_back(Decay::rate(g));
  const AttentionOptions options{config.scale_logits};
  const Tensor attn = config.decomposed
                          ? masa_decomposed_heads(split(q), split(k), split(v), grid, decays, options)
                          : masa_full_heads(split(q), split(k), split(v), grid, decays, options);
  const Tensor merged = reshape(permute(attn, {1, 0, 2}), {N, config.dim});
  return matmul(add(merged, lce(v, grid, params.lce)), params.wo);
}

std::uint64_t masa_layer_macs(const MaSAConfig& config, const GridShape& grid) noexcept {
  const std::uint64_t n = grid.tokens(), c = config.dim, k = config.lce_kernel;
  const std::uint64_t attn = config.num_heads * (config.decomposed ? masa_decomposed_macs(grid, config.head_dim())
                                                                   : masa_full_macs(grid, config.head_dim()));
  return 4 * n * c * c + attn + n * c * k * k;
}

}  // namespace masa
