#pragma once

#include <optional>
#include <vector>

#include "core/tensor.hpp"

namespace synth::nn {

// Differentiable ops. Tensors are row-major; binary ops require exact
// shape agreement unless noted. Results carry requires_grad if any
// input does.

template <class S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b);
template <class S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b);
template <class S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b);
template <class S>
Tensor<S> scale(const Tensor<S>& a, S c);

// [R x C] + [C], bias broadcast over rows.
template <class S>
Tensor<S> add_rows(const Tensor<S>& x, const Tensor<S>& bias);

// Standard matrix product [M x K] @ [K x N].
template <class S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b);

template <class S>
Tensor<S> gelu(const Tensor<S>& x);
template <class S>
Tensor<S> tanh_op(const Tensor<S>& x);

// Per-row normalization over the last dim, then affine by gamma/beta.
template <class S>
Tensor<S> layer_norm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta, S eps);

// Row gather: out[i] = table[ids[i]].
template <class S>
Tensor<S> embedding(const Tensor<S>& table, const std::vector<int>& ids);

template <class S>
Tensor<S> softmax_rows(const Tensor<S>& x);

// Mean negative log-likelihood over rows whose target != ignore_id,
// computed with log-sum-exp stabilization. Scalar result.
template <class S>
Tensor<S> softmax_cross_entropy(const Tensor<S>& logits, const std::vector<int>& targets,
                                std::optional<int> ignore_id = std::nullopt);

// Fused scaled-dot-product attention over `batch` sequences laid out as
// [batch*tq x dim] / [batch*tk x dim]. Softmax(QK^T/sqrt(dh))V per head.
// causal requires tq == tk.
template <class S>
Tensor<S> attention(const Tensor<S>& q, const Tensor<S>& k, const Tensor<S>& v, int batch, int heads,
                    bool causal);

// Inverted dropout with an externally drawn keep mask (1 keep, 0 drop).
template <class S>
Tensor<S> dropout_mask(const Tensor<S>& x, const std::vector<uint8_t>& keep, S keep_prob);

// Convenience: draws the mask from rng; identity when !training or p == 0.
template <class S>
Tensor<S> dropout(const Tensor<S>& x, S p, Rng& rng, bool training);

// Mean over the first lengths[b] rows of each T-row block: [B*T x C] -> [B x C].
template <class S>
Tensor<S> mean_pool_rows(const Tensor<S>& x, int batch, int t, const std::vector<int>& lengths);

template <class S>
Tensor<S> sum(const Tensor<S>& x);
template <class S>
Tensor<S> mse(const Tensor<S>& a, const Tensor<S>& b);

template <class S>
Tensor<S> slice_rows(const Tensor<S>& x, int row_begin, int row_end);
template <class S>
Tensor<S> concat_rows(const std::vector<Tensor<S>>& parts);

// Broadcast multiply by a [1] tensor (e.g. a tanh gate).
template <class S>
Tensor<S> mul_scalar_t(const Tensor<S>& x, const Tensor<S>& s);

// Repeat a [1 x C] row R times -> [R x C].
template <class S>
Tensor<S> broadcast_row(const Tensor<S>& row, int r);

// Block-repeat rows: [B x C] -> [B*times x C], row b repeated
// contiguously. Used to broadcast per-sequence summaries back to tokens.
template <class S>
Tensor<S> repeat_rows(const Tensor<S>& x, int times);

}  // namespace synth::nn
