#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "multirc/rng.hpp"
#include "multirc/tensor.hpp"

/// Differentiable primitives. Every op validates shapes (ShapeError), rejects
/// non-finite results (NumericError) and records its backward pass on the
/// active tape when an input requires gradients.
namespace multirc::ops {

// Linear algebra
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
/// Per-group inner products: a is [G*M, d], b is [G*K, d], result [G*M, K]
/// with row g*M+i holding <a[g*M+i], b[g*K+k]> for k in [0, K).
Tensor batched_gram(const Tensor& a, const Tensor& b, std::size_t groups);

// Elementwise
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor relu(const Tensor& a);
/// Exact (erf-based) GELU.
Tensor gelu(const Tensor& a);

// Broadcasting
/// a [m, n] + bias [n] on every row.
Tensor add_bias(const Tensor& a, const Tensor& bias);
/// a [G*N, d] + tile [N, d] repeated for each of the G groups.
Tensor add_tiled(const Tensor& a, const Tensor& tile);

// Layout
Tensor reshape(const Tensor& a, Shape shape);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);
/// Row i of the result is row floor(i * from / to) of its group:
/// a is [G*from, d], result [G*to, d]. Requires to >= from.
Tensor upsample_rows(const Tensor& a, std::size_t from, std::size_t to);

// Reductions
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Mean of a matrix along `axis`: 0 averages rows together ([n]), 1 averages
/// within each row ([m]).
Tensor mean_pool(const Tensor& a, std::size_t axis);
/// a [G*N, d] -> [G, d], averaging each consecutive block of N rows.
Tensor group_mean_rows(const Tensor& a, std::size_t group_size);
Tensor logsumexp_rows(const Tensor& a);

// Normalization
Tensor softmax_rows(const Tensor& a);
Tensor layer_norm(const Tensor& a, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
Tensor l2_normalize_rows(const Tensor& a, double eps = 1e-12);

// Model-specific fused kernels
/// Multi-head self-attention core over packed projections.
/// qkv is [B*N, 3d] holding Q | K | V; the result is [B*N, d], heads
/// concatenated. When `probs` is non-null it receives the attention weights,
/// laid out [B][head][query][key].
Tensor attention(const Tensor& qkv, std::size_t seq_len, std::size_t heads, std::vector<double>* probs = nullptr);

/// Per-row contrastive ratio in log space, stabilized with log-sum-exp:
///   out[r] = logsumexp_{k in den(r)} s[r,k] - logsumexp_{k in pos(r)} s[r,k]
/// i.e. -log(sum_pos exp / sum_den exp). Masks are [period, K] patterns
/// applied to row r through r % period.
Tensor masked_lse_ratio(const Tensor& s, std::size_t period, const std::vector<std::uint8_t>& pos_mask,
                        const std::vector<std::uint8_t>& den_mask);

/// Inverted dropout. Identity when p == 0.
Tensor dropout(const Tensor& a, double p, Rng& rng);

/// sum(weight * (pred - target)^2) / numel. target and weight are constants.
Tensor weighted_sq_error_mean(const Tensor& pred, const Tensor& target, const std::vector<double>& weight);

}  // namespace multirc::ops
