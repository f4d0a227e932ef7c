#include "vlm/vlm.hpp"

#include <algorithm>

namespace synth::vlm {

std::string to_string(Modality m) { return m == Modality::kPixel ? "pixel" : "embedding"; }
std::string to_string(Origin o) { return o == Origin::kReal ? "real" : "synthetic"; }

template <class S>
Resampler<S>::Resampler(const ResamplerConfig& cfg, uint64_t seed) : cfg_(cfg) {
    Rng rng = Rng::derive(seed, 0x9e);
    latents_.t = nn::Tensor<S>::rand_normal({cfg.latents, cfg.dim}, S(0), S(0.02), rng, true);
    latents_.name = "resampler.latents";
    pos_emb_.t = nn::Tensor<S>::rand_normal({cfg.max_tokens, cfg.dim}, S(0), S(0.02), rng, true);
    pos_emb_.name = "resampler.pos_emb";
    input_proj_ = nn::Linear<S>(cfg.input_dim, cfg.dim, rng, "resampler.input_proj");
    for (int i = 0; i < cfg.layers; ++i) {
        const std::string base = "resampler.layer" + std::to_string(i);
        layers_.push_back({nn::LayerNormLayer<S>(cfg.dim, base + ".ln_q"),
                           nn::MultiHeadAttention<S>(cfg.dim, cfg.heads, rng, base + ".attn"),
                           nn::LayerNormLayer<S>(cfg.dim, base + ".ln_f"),
                           nn::FeedForward<S>(cfg.dim, cfg.dim * 4, rng, base + ".ffn")});
    }
}

template <class S>
nn::Tensor<S> Resampler<S>::forward(const nn::Tensor<S>& tokens, int batch, int n, bool use_positions) const {
    if (tokens.cols() != cfg_.input_dim) throw ConfigError("resampler: input width != configured input_dim");
    if (tokens.rows() != batch * n) throw DimensionError("resampler: token rows != batch*n");
    if (n < 1) throw ContractError("resampler: need at least one input token");
    if (n > cfg_.max_tokens) throw ConfigError("resampler: token count exceeds positional table");

    nn::Tensor<S> kv = input_proj_.forward(tokens);
    if (use_positions) {
        std::vector<int> pos_ids;
        pos_ids.reserve(static_cast<size_t>(batch) * n);
        for (int b = 0; b < batch; ++b)
            for (int i = 0; i < n; ++i) pos_ids.push_back(i);
        kv = nn::add(kv, nn::embedding(pos_emb_.t, pos_ids));
    }

    // Block-repeat the learned queries for every batch element.
    nn::Tensor<S> x = nn::concat_rows(std::vector<nn::Tensor<S>>(static_cast<size_t>(batch), latents_.t));
    for (const auto& layer : layers_) {
        x = nn::add(x, layer.attn.forward(layer.ln_q.forward(x), kv, batch, /*causal=*/false));
        x = nn::add(x, layer.ffn.forward(layer.ln_f.forward(x)));
    }
    return x;
}

template <class S>
nn::ParamList<S> Resampler<S>::params() {
    nn::ParamList<S> out;
    out.push_back(&latents_);
    out.push_back(&pos_emb_);
    input_proj_.collect(out);
    for (auto& l : layers_) {
        l.ln_q.collect(out);
        l.attn.collect(out);
        l.ln_f.collect(out);
        l.ffn.collect(out);
    }
    return out;
}

template class Resampler<float>;
template class Resampler<double>;

template <class S>
GatedXAttn<S>::GatedXAttn(int dim, int heads, Rng& rng, const std::string& name)
    : ln(dim, name + ".ln"), attn(dim, heads, rng, name + ".attn") {
    gate.t = nn::Tensor<S>::zeros({1}, true);
    gate.name = name + ".gate";
}

template <class S>
nn::Tensor<S> GatedXAttn<S>::forward(const nn::Tensor<S>& h, const nn::Tensor<S>& latents, int batch) const {
    const nn::Tensor<S> a = attn.forward(ln.forward(h), latents, batch, /*causal=*/false);
    return nn::add(h, nn::mul_scalar_t(a, nn::tanh_op(gate.t)));
}

template struct GatedXAttn<float>;
template struct GatedXAttn<double>;

template <class S>
Vlm<S>::Vlm(const VlmConfig& cfg, const lm::LmConfig& lm_cfg, const vq::Codebook& codebook, uint64_t seed)
    : cfg_(cfg), lm_(lm_cfg, seed), codebook_(codebook), resampler_(cfg.resampler, seed) {
    if (cfg.resampler.input_dim != codebook.d)
        throw ConfigError("vlm: resampler input_dim != codebook dim");
    if (cfg.resampler.dim != lm_cfg.dim)
        throw ConfigError("vlm: resampler width must match the LM stream");
    Rng rng = Rng::derive(seed, 0x9f);
    for (int i = 0; i < lm_cfg.layers; ++i)
        xattn_.emplace_back(lm_cfg.dim, lm_cfg.heads, rng, "vlm.xattn" + std::to_string(i));
    lm_.set_trainable(false);
}

template <class S>
nn::Tensor<S> Vlm<S>::resample_grids(const std::vector<const vq::TokenGrid*>& grids) const {
    if (grids.empty()) throw DataError("vlm: empty grid batch");
    const int n = grids.front()->n();
    std::vector<nn::Tensor<S>> parts;
    parts.reserve(grids.size());
    for (const auto* g : grids) {
        if (g->n() != n) throw DimensionError("vlm: grids in a batch must share their size");
        parts.push_back(vq::embed<S>(*g, codebook_));
    }
    return resampler_.forward(nn::concat_rows(parts), static_cast<int>(grids.size()), n,
                              /*use_positions=*/true);
}

template <class S>
nn::Tensor<S> Vlm<S>::caption_logits(const std::vector<int>& flat_inputs, int batch, int t,
                                     const nn::Tensor<S>& latents, Rng* dropout_rng) const {
    nn::Tensor<S> h = lm_.embed_tokens(flat_inputs, batch, t);
    for (size_t i = 0; i < lm_.blocks().size(); ++i) {
        h = lm_.block_forward(static_cast<int>(i), h, batch, dropout_rng);
        h = xattn_[i].forward(h, latents, batch);
    }
    return lm_.logits_from_hidden(lm_.final_norm(h));
}

template <class S>
nn::ParamList<S> Vlm<S>::trainable_params() {
    nn::ParamList<S> out = resampler_.params();
    for (auto& x : xattn_) x.collect(out);
    return out;
}

template class Vlm<float>;
template class Vlm<double>;

vq::TokenGrid grid_for_record(const PairRecord& rec, const vq::Backbone& backbone) {
    if (rec.modality == Modality::kPixel) {
        if (!rec.image) throw ContractError("pixel-modality record carries no image");
        return backbone.encode_image(*rec.image);
    }
    return rec.grid;
}

template <class S>
nn::Tensor<S> vlm_loss(const Vlm<S>& model, const std::vector<const PairRecord*>& batch,
                       const vq::Backbone& backbone, Rng* dropout_rng) {
    if (batch.empty()) throw DataError("vlm loss: empty batch");
    const int pad = capgen::ByteTokenizer::kPad;

    std::vector<vq::TokenGrid> grids;
    grids.reserve(batch.size());
    std::vector<const std::vector<int>*> seqs;
    seqs.reserve(batch.size());
    for (const auto* rec : batch) {
        if (rec->caption_ids.size() < 2) throw ContractError("vlm loss: caption must hold BOS and EOS");
        bool all_pad = true;
        for (int id : rec->caption_ids)
            if (id != pad) all_pad = false;
        if (all_pad) throw ContractError("vlm loss: caption is all padding");
        grids.push_back(grid_for_record(*rec, backbone));
        seqs.push_back(&rec->caption_ids);
    }
    std::vector<const vq::TokenGrid*> grid_ptrs;
    grid_ptrs.reserve(grids.size());
    for (const auto& g : grids) grid_ptrs.push_back(&g);

    const nn::Tensor<S> latents = model.resample_grids(grid_ptrs);
    const lm::LmBatch lm_batch = lm::make_lm_batch(seqs);
    const nn::Tensor<S> logits =
        model.caption_logits(lm_batch.inputs, lm_batch.batch, lm_batch.t, latents, dropout_rng);
    return nn::softmax_cross_entropy(logits, lm_batch.targets, pad);
}

template nn::Tensor<float> vlm_loss<float>(const Vlm<float>&, const std::vector<const PairRecord*>&,
                                           const vq::Backbone&, Rng*);
template nn::Tensor<double> vlm_loss<double>(const Vlm<double>&, const std::vector<const PairRecord*>&,
                                             const vq::Backbone&, Rng*);

std::vector<int> generate_caption(const Vlm<float>& model, const vq::TokenGrid& grid, int max_len) {
    const int bos = capgen::ByteTokenizer::kBos;
    const int eos = capgen::ByteTokenizer::kEos;
    const nn::TensorF latents = model.resample_grids({&grid});
    std::vector<int> ids = {bos};
    while (static_cast<int>(ids.size()) < max_len) {
        const int t = static_cast<int>(ids.size());
        const nn::TensorF logits = model.caption_logits(ids, 1, t, latents, nullptr);
        const auto lv = logits.value();
        const int vocab = logits.cols();
        const float* last = lv.data() + static_cast<size_t>(t - 1) * vocab;
        int best = 0;
        for (int j = 1; j < vocab; ++j)
            if (last[j] > last[best]) best = j;
        ids.push_back(best);
        if (best == eos) break;
    }
    return ids;
}

std::string add_vlm_sections(io::CheckpointWriter& writer, Vlm<float>& model) {
    auto trainable = model.trainable_params();
    return writer.add_section("vlm", trainable);
}

void load_vlm_sections(const io::CheckpointReader& reader, Vlm<float>& model) {
    auto trainable = model.trainable_params();
    reader.load_section("vlm", trainable);
}

}  // namespace synth::vlm
