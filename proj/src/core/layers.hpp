#pragma once

#include <string>
#include <vector>

#include "core/ops.hpp"

namespace synth::nn {

// Composable transformer building blocks. Each layer owns Parameters and
// exposes collect() so optimizers, checkpoints and the finite-difference
// harness can walk the full tree by name.

template <class S>
struct Linear {
    Parameter<S> w;  // [in x out]
    Parameter<S> b;  // [out]

    Linear() = default;
    Linear(int in, int out, Rng& rng, const std::string& name);

    Tensor<S> forward(const Tensor<S>& x) const { return add_rows(matmul(x, w.t), b.t); }
    void collect(ParamList<S>& out) {
        out.push_back(&w);
        out.push_back(&b);
    }
};

template <class S>
struct LayerNormLayer {
    Parameter<S> gamma, beta;
    S eps = S(1e-5);

    LayerNormLayer() = default;
    LayerNormLayer(int dim, const std::string& name);

    Tensor<S> forward(const Tensor<S>& x) const { return layer_norm(x, gamma.t, beta.t, eps); }
    void collect(ParamList<S>& out) {
        out.push_back(&gamma);
        out.push_back(&beta);
    }
};

// softmax(QK^T/sqrt(dh))V per head, concatenated and projected. The same
// kernel serves self-attention (kv_src == q_src) and cross-attention.
template <class S>
struct MultiHeadAttention {
    int dim = 0;
    int heads = 0;
    Linear<S> wq, wk, wv, wo;

    MultiHeadAttention() = default;
    MultiHeadAttention(int dim, int heads, Rng& rng, const std::string& name);

    // q_src: [batch*tq x dim], kv_src: [batch*tk x dim].
    Tensor<S> forward(const Tensor<S>& q_src, const Tensor<S>& kv_src, int batch, bool causal) const;
    void collect(ParamList<S>& out) {
        wq.collect(out);
        wk.collect(out);
        wv.collect(out);
        wo.collect(out);
    }
};

template <class S>
struct FeedForward {
    Linear<S> fc1, fc2;

    FeedForward() = default;
    FeedForward(int dim, int hidden, Rng& rng, const std::string& name);

    Tensor<S> forward(const Tensor<S>& x) const { return fc2.forward(gelu(fc1.forward(x))); }
    void collect(ParamList<S>& out) {
        fc1.collect(out);
        fc2.collect(out);
    }
};

// Pre-LN residual block: self-attention, optional cross-attention to a
// conditioning sequence, feed-forward. Dropout is inverted and disabled
// when rng is null.
template <class S>
struct TransformerBlock {
    LayerNormLayer<S> ln1;
    MultiHeadAttention<S> self_attn;
    bool has_cross = false;
    LayerNormLayer<S> ln_cross;
    MultiHeadAttention<S> cross_attn;
    LayerNormLayer<S> ln2;
    FeedForward<S> ffn;
    S dropout_p = S(0);

    TransformerBlock() = default;
    TransformerBlock(int dim, int heads, int ffn_hidden, bool with_cross, S dropout, Rng& rng,
                     const std::string& name);

    // cond: [batch*tc x dim] cross-attention keys/values (ignored unless
    // has_cross). rng enables dropout (training mode).
    Tensor<S> forward(const Tensor<S>& x, int batch, bool causal, const Tensor<S>* cond, Rng* rng) const;
    void collect(ParamList<S>& out);
};

}  // namespace synth::nn
