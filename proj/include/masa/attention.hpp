#pragma once

// Retention and Manhattan self-attention kernels.
//
// Shapes: single-head kernels take Q, K, V as [N, d]; the *_heads variants
// take [heads, N, d] with one decay rate per head. Tokens are flattened
// row-major over the grid (see GridShape).

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "masa/core/tensor.hpp"
#include "masa/decay.hpp"

namespace masa {

struct AttentionOptions {
  // Multiply logits by 1/sqrt(d) before the softmax.
  bool scale_logits = true;
};

// o_n = Q_n S_n with S_n = gamma S_{n-1} + K_n^T V_n. Not tracked by autograd.
Tensor retention_recurrent(const Tensor& q, const Tensor& k, const Tensor& v, double gamma);
// (Q K^T ⊙ D_causal) V
Tensor retention_parallel(const Tensor& q, const Tensor& k, const Tensor& v, double gamma);
// (Q K^T ⊙ D_bi) V
Tensor bi_retention(const Tensor& q, const Tensor& k, const Tensor& v, double gamma);

// softmax(Q K^T) V
Tensor softmax_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                         AttentionOptions options = {});

// (softmax(Q K^T) ⊙ D_2d) V. Rows are not renormalized after the decay.
Tensor masa_full(const Tensor& q, const Tensor& k, const Tensor& v, const GridShape& grid,
                 Decay decay, AttentionOptions options = {});
Tensor masa_full_heads(const Tensor& q, const Tensor& k, const Tensor& v, const GridShape& grid,
                       std::span<const Decay> decays, AttentionOptions options = {});

// Width attention inside each grid row, then height attention inside each
// column, each weighted by its 1D bidirectional decay.
Tensor masa_decomposed(const Tensor& q, const Tensor& k, const Tensor& v, const GridShape& grid,
                       Decay decay, AttentionOptions options = {});
Tensor masa_decomposed_heads(const Tensor& q, const Tensor& k, const Tensor& v,
                             const GridShape& grid, std::span<const Decay> decays,
                             AttentionOptions options = {});

// Local context enhancement: depthwise conv of V laid out on the grid.
// v: [N, d], kernel: [d, k, k].
Tensor lce(const Tensor& v, const GridShape& grid, const Tensor& kernel);

// Score plus apply multiply-accumulates of one attention head.
std::uint64_t masa_full_macs(const GridShape& grid, std::size_t head_dim) noexcept;
std::uint64_t masa_decomposed_macs(const GridShape& grid, std::size_t head_dim) noexcept;

struct MaSAConfig {
  std::size_t dim = 0;
  std::size_t num_heads = 1;
  bool decomposed = false;
  DecaySpec decay;
  std::size_t lce_kernel = 5;
  bool scale_logits = true;

  std::size_t head_dim() const noexcept { return num_heads == 0 ? 0 : dim / num_heads; }
  // Throws ConfigError on inconsistent fields.
  void validate() const;
};

struct MaSAParams {
  Tensor wq;   // [dim, dim]
  Tensor wk;   // [dim, dim]
  Tensor wv;   // [dim, dim]
  Tensor wo;   // [dim, dim]
  Tensor lce;  // [dim, k, k]

  static MaSAParams zeros(const MaSAConfig& config, bool requires_grad = false);
  void check(const MaSAConfig& config) const;
  std::vector<Tensor> tensors() const { return {wq, wk, wv, wo, lce}; }
};

// ((MaSA over heads of X Wq, X Wk, X Wv) + LCE(X Wv)) Wo, X: [N, dim].
Tensor masa_layer_forward(const Tensor& x, const MaSAParams& params, const MaSAConfig& config,
                          const GridShape& grid);

// Forward multiply-accumulates of masa_layer_forward.
std::uint64_t masa_layer_macs(const MaSAConfig& config, const GridShape& grid) noexcept;

}  // namespace masa
