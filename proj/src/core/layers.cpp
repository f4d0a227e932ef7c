#include "core/layers.hpp"

#include <cmath>

namespace synth::nn {

template <class S>
Linear<S>::Linear(int in, int out, Rng& rng, const std::string& name) {
    const S std_dev = S(0.02);
    w.t = Tensor<S>::rand_normal({in, out}, S(0), std_dev, rng, true);
    w.name = name + ".w";
    b.t = Tensor<S>::zeros({out}, true);
    b.name = name + ".b";
}

template <class S>
LayerNormLayer<S>::LayerNormLayer(int dim, const std::string& name) {
    gamma.t = Tensor<S>::full({dim}, S(1), true);
    gamma.name = name + ".gamma";
    beta.t = Tensor<S>::zeros({dim}, true);
    beta.name = name + ".beta";
}

template <class S>
MultiHeadAttention<S>::MultiHeadAttention(int dim_, int heads_, Rng& rng, const std::string& name)
    : dim(dim_),
      heads(heads_),
      wq(dim_, dim_, rng, name + ".q"),
      wk(dim_, dim_, rng, name + ".k"),
      wv(dim_, dim_, rng, name + ".v"),
      wo(dim_, dim_, rng, name + ".o") {
    if (dim_ % heads_ != 0) throw ConfigError("attention: model dim not divisible by head count");
}

template <class S>
Tensor<S> MultiHeadAttention<S>::forward(const Tensor<S>& q_src, const Tensor<S>& kv_src, int batch,
                                         bool causal) const {
    const Tensor<S> q = wq.forward(q_src);
    const Tensor<S> k = wk.forward(kv_src);
    const Tensor<S> v = wv.forward(kv_src);
    const Tensor<S> ctx = attention(q, k, v, batch, heads, causal);
    return wo.forward(ctx);
}

template <class S>
FeedForward<S>::FeedForward(int dim, int hidden, Rng& rng, const std::string& name)
    : fc1(dim, hidden, rng, name + ".fc1"), fc2(hidden, dim, rng, name + ".fc2") {}

template <class S>
TransformerBlock<S>::TransformerBlock(int dim, int heads, int ffn_hidden, bool with_cross, S dropout,
                                      Rng& rng, const std::string& name)
    : ln1(dim, name + ".ln1"),
      self_attn(dim, heads, rng, name + ".attn"),
      has_cross(with_cross),
      ln2(dim, name + ".ln2"),
      ffn(dim, ffn_hidden, rng, name + ".ffn"),
      dropout_p(dropout) {
    if (with_cross) {
        ln_cross = LayerNormLayer<S>(dim, name + ".lnx");
        cross_attn = MultiHeadAttention<S>(dim, heads, rng, name + ".xattn");
    }
}

template <class S>
Tensor<S> TransformerBlock<S>::forward(const Tensor<S>& x, int batch, bool causal, const Tensor<S>* cond,
                                       Rng* rng) const {
    const bool training = rng != nullptr && dropout_p > S(0);
    Tensor<S> h = x;
    {
        const Tensor<S> normed = ln1.forward(h);
        Tensor<S> a = self_attn.forward(normed, normed, batch, causal);
        if (training) a = dropout(a, dropout_p, *rng, true);
        h = add(h, a);
    }
    if (has_cross) {
        if (cond == nullptr) throw ContractError("transformer block: missing conditioning input");
        Tensor<S> a = cross_attn.forward(ln_cross.forward(h), *cond, batch, false);
        if (training) a = dropout(a, dropout_p, *rng, true);
        h = add(h, a);
    }
    {
        Tensor<S> f = ffn.forward(ln2.forward(h));
        if (training) f = dropout(f, dropout_p, *rng, true);
        h = add(h, f);
    }
    return h;
}

template <class S>
void TransformerBlock<S>::collect(ParamList<S>& out) {
    ln1.collect(out);
    self_attn.collect(out);
    if (has_cross) {
        ln_cross.collect(out);
        cross_attn.collect(out);
    }
    ln2.collect(out);
    ffn.collect(out);
}

template struct Linear<float>;
template struct Linear<double>;
template struct LayerNormLayer<float>;
template struct LayerNormLayer<double>;
template struct MultiHeadAttention<float>;
template struct MultiHeadAttention<double>;
template struct FeedForward<float>;
template struct FeedForward<double>;
template struct TransformerBlock<float>;
template struct TransformerBlock<double>;

}  // namespace synth::nn
