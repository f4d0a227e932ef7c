#include "lm/lm.hpp"

#include <algorithm>

#include "core/serialize.hpp"

namespace synth::lm {

template <class S>
Lm<S>::Lm(const LmConfig& cfg, uint64_t seed) : cfg_(cfg) {
    Rng rng = Rng::derive(seed, 0x11);
    tok_emb_.t = nn::Tensor<S>::rand_normal({cfg.vocab, cfg.dim}, S(0), S(0.02), rng, true);
    tok_emb_.name = "lm.tok_emb";
    pos_emb_.t = nn::Tensor<S>::rand_normal({cfg.max_len, cfg.dim}, S(0), S(0.02), rng, true);
    pos_emb_.name = "lm.pos_emb";
    for (int i = 0; i < cfg.layers; ++i)
        blocks_.emplace_back(cfg.dim, cfg.heads, cfg.ffn, false, S(cfg.dropout), rng,
                             "lm.block" + std::to_string(i));
    final_ln_ = nn::LayerNormLayer<S>(cfg.dim, "lm.final_ln");
    head_ = nn::Linear<S>(cfg.dim, cfg.vocab, rng, "lm.head");
}

template <class S>
nn::Tensor<S> Lm<S>::embed_tokens(const std::vector<int>& flat_ids, int batch, int t) const {
    if (t > cfg_.max_len) throw ContractError("lm: sequence longer than max_len");
    if (flat_ids.size() != static_cast<size_t>(batch) * t)
        throw DimensionError("lm: flat id count != batch*t");
    nn::Tensor<S> tok = nn::embedding(tok_emb_.t, flat_ids);
    std::vector<int> pos_ids(flat_ids.size());
    for (int b = 0; b < batch; ++b)
        for (int i = 0; i < t; ++i) pos_ids[static_cast<size_t>(b) * t + i] = i;
    nn::Tensor<S> pos = nn::embedding(pos_emb_.t, pos_ids);
    return nn::add(tok, pos);
}

template <class S>
nn::Tensor<S> Lm<S>::block_forward(int i, const nn::Tensor<S>& h, int batch, Rng* dropout_rng) const {
    return blocks_[static_cast<size_t>(i)].forward(h, batch, /*causal=*/true, nullptr, dropout_rng);
}

template <class S>
nn::Tensor<S> Lm<S>::hidden_states(const std::vector<int>& flat_ids, int batch, int t,
                                   Rng* dropout_rng) const {
    nn::Tensor<S> h = embed_tokens(flat_ids, batch, t);
    for (size_t i = 0; i < blocks_.size(); ++i)
        h = block_forward(static_cast<int>(i), h, batch, dropout_rng);
    return final_ln_.forward(h);
}

template <class S>
nn::Tensor<S> Lm<S>::logits_from_hidden(const nn::Tensor<S>& h) const {
    return head_.forward(h);
}

template <class S>
nn::Tensor<S> Lm<S>::pooled_embedding(const std::vector<int>& ids) const {
    if (ids.empty()) throw ContractError("lm: pooled embedding of empty sequence");
    const int t = static_cast<int>(ids.size());
    nn::Tensor<S> h = hidden_states(ids, 1, t, nullptr);
    return nn::mean_pool_rows(h, 1, t, {t});
}

template <class S>
nn::ParamList<S> Lm<S>::params() {
    nn::ParamList<S> out;
    out.push_back(&tok_emb_);
    out.push_back(&pos_emb_);
    for (auto& b : blocks_) b.collect(out);
    final_ln_.collect(out);
    head_.collect(out);
    return out;
}

template <class S>
void Lm<S>::set_trainable(bool trainable) {
    for (auto* p : params()) {
        p->trainable = trainable;
        p->t.set_requires_grad(trainable);
    }
}

template class Lm<float>;
template class Lm<double>;

LmBatch make_lm_batch(const std::vector<const std::vector<int>*>& seqs) {
    LmBatch batch;
    batch.batch = static_cast<int>(seqs.size());
    int longest = 0;
    for (const auto* s : seqs) longest = std::max(longest, static_cast<int>(s->size()));
    // Shifted pairs: T = longest - 1 steps of next-token prediction.
    batch.t = std::max(1, longest - 1);
    const int pad = capgen::ByteTokenizer::kPad;
    batch.inputs.assign(static_cast<size_t>(batch.batch) * batch.t, pad);
    batch.targets.assign(static_cast<size_t>(batch.batch) * batch.t, pad);
    for (int b = 0; b < batch.batch; ++b) {
        const auto& s = *seqs[static_cast<size_t>(b)];
        for (int i = 0; i + 1 < static_cast<int>(s.size()) && i < batch.t; ++i) {
            batch.inputs[static_cast<size_t>(b) * batch.t + i] = s[static_cast<size_t>(i)];
            batch.targets[static_cast<size_t>(b) * batch.t + i] = s[static_cast<size_t>(i) + 1];
        }
    }
    return batch;
}

LmTrainStats pretrain_lm(Lm<float>& model, const std::vector<capgen::CaptionRecord>& captions, int steps,
                         int batch_size, float base_lr, int warmup_steps, uint64_t seed) {
    if (captions.empty()) throw DataError("lm pretraining: empty caption corpus");
    model.set_trainable(true);
    auto params = model.params();
    nn::AdamWConfig ocfg;
    ocfg.lr = base_lr;
    ocfg.warmup_steps = warmup_steps;
    nn::AdamW<float> opt(ocfg);
    Rng data_rng = Rng::derive(seed, 0x21);
    Rng drop_rng = Rng::derive(seed, 0x22);

    LmTrainStats stats;
    for (int step = 0; step < steps; ++step) {
        std::vector<const std::vector<int>*> seqs;
        seqs.reserve(static_cast<size_t>(batch_size));
        for (int b = 0; b < batch_size; ++b) {
            const auto& rec =
                captions[static_cast<size_t>(data_rng.randint(0, static_cast<int>(captions.size())))];
            seqs.push_back(&rec.token_ids);
        }
        const LmBatch batch = make_lm_batch(seqs);
        nn::TensorF h = model.hidden_states(batch.inputs, batch.batch, batch.t, &drop_rng);
        nn::TensorF logits = model.logits_from_hidden(h);
        nn::TensorF loss =
            nn::softmax_cross_entropy(logits, batch.targets, capgen::ByteTokenizer::kPad);
        for (auto* p : params) p->t.zero_grad();
        nn::backward(loss);
        opt.step(params);
        stats.final_loss = loss.item();
        stats.steps = step + 1;
    }
    model.set_trainable(false);
    return stats;
}

void save_lm(Lm<float>& model, const std::string& path) {
    io::CheckpointWriter w("lm");
    const auto& cfg = model.config();
    w.set_config({{"vocab", cfg.vocab},
                  {"dim", cfg.dim},
                  {"layers", cfg.layers},
                  {"heads", cfg.heads},
                  {"ffn", cfg.ffn},
                  {"max_len", cfg.max_len},
                  {"dropout", cfg.dropout},
                  {"seed", cfg.seed}});
    auto params = model.params();
    w.add_section("lm", params);
    w.write(path);
}

Lm<float> load_lm(const std::string& path) {
    io::CheckpointReader r(path);
    if (r.kind() != "lm") throw IoError("not an lm checkpoint: " + path);
    const auto j = r.config();
    LmConfig cfg;
    cfg.vocab = j.at("vocab").get<int>();
    cfg.dim = j.at("dim").get<int>();
    cfg.layers = j.at("layers").get<int>();
    cfg.heads = j.at("heads").get<int>();
    cfg.ffn = j.at("ffn").get<int>();
    cfg.max_len = j.at("max_len").get<int>();
    cfg.dropout = j.at("dropout").get<float>();
    cfg.seed = j.at("seed").get<uint64_t>();
    Lm<float> model(cfg, cfg.seed);
    auto params = model.params();
    r.load_section("lm", params);
    model.set_trainable(false);
    return model;
}

}  // namespace synth::lm
