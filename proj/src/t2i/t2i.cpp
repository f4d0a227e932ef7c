#include "t2i/t2i.hpp"

#include <chrono>
#include <cmath>

namespace synth::t2i {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

int mask_count_from_u(double u, int n) {
    if (n < 1) throw ParameterError("mask_count_from_u: n must be >= 1");
    const double frac = std::cos(kPi * u / 2.0);
    const int m = static_cast<int>(std::lround(static_cast<double>(n) * frac));
    return std::max(1, std::min(n, m));
}

std::vector<int> sample_mask(Rng& rng, int n) {
    const int m = mask_count_from_u(rng.uniform(), n);
    return rng.sample_without_replacement(n, m);
}

vq::TokenGrid apply_mask(const vq::TokenGrid& grid, const std::vector<int>& mask, int drop_id) {
    vq::TokenGrid out = grid;
    for (int idx : mask) {
        if (idx < 0 || idx >= grid.n()) throw ContractError("apply_mask: index out of range");
        out.ids[static_cast<size_t>(idx)] = drop_id;
    }
    return out;
}

int masked_count_at_step(int t, int steps, int n) {
    if (t < 0 || t > steps) throw ParameterError("masked_count_at_step: t outside [0, steps]");
    if (t == steps) return 0;  // cos(pi/2) rounds to a hair above zero otherwise
    const double frac = std::cos(kPi / 2.0 * static_cast<double>(t) / static_cast<double>(steps));
    return static_cast<int>(std::ceil(static_cast<double>(n) * frac));
}

template <class S>
T2IModel<S>::T2IModel(const T2IConfig& cfg, uint64_t seed) : cfg_(cfg) {
    Rng rng = Rng::derive(seed, 0x72);
    tok_emb_.t = nn::Tensor<S>::rand_normal({cfg.codebook_size + 1, cfg.dim}, S(0), S(0.02), rng, true);
    tok_emb_.name = "t2i.tok_emb";
    pos_emb_.t = nn::Tensor<S>::rand_normal({cfg.tokens(), cfg.dim}, S(0), S(0.02), rng, true);
    pos_emb_.name = "t2i.pos_emb";
    null_cond_.t = nn::Tensor<S>::rand_normal({1, cfg.dim}, S(0), S(0.02), rng, true);
    null_cond_.name = "t2i.null_cond";
    cond_proj_ = nn::Linear<S>(cfg.lm_dim, cfg.dim, rng, "t2i.cond_proj");
    for (int i = 0; i < cfg.layers; ++i)
        blocks_.emplace_back(cfg.dim, cfg.heads, cfg.ffn, /*with_cross=*/true, S(cfg.dropout), rng,
                             "t2i.block" + std::to_string(i));
    final_ln_ = nn::LayerNormLayer<S>(cfg.dim, "t2i.final_ln");
    head_ = nn::Linear<S>(cfg.dim, cfg.codebook_size, rng, "t2i.head");
}

template <class S>
nn::Tensor<S> T2IModel<S>::forward(const std::vector<vq::TokenGrid>& grids, const nn::Tensor<S>& cond_raw,
                                   const std::vector<uint8_t>& use_null, Rng* dropout_rng) const {
    const int batch = static_cast<int>(grids.size());
    if (batch == 0) throw DataError("t2i forward: empty batch");
    if (cond_raw.rows() != batch || cond_raw.cols() != cfg_.lm_dim)
        throw DimensionError("t2i forward: conditioning shape != [batch x lm_dim]");
    if (use_null.size() != static_cast<size_t>(batch))
        throw DimensionError("t2i forward: null flags != batch");
    const int n = cfg_.tokens();

    std::vector<int> flat_ids;
    flat_ids.reserve(static_cast<size_t>(batch) * n);
    std::vector<int> pos_ids;
    pos_ids.reserve(flat_ids.capacity());
    for (const auto& g : grids) {
        if (g.n() != n || static_cast<int>(g.ids.size()) != n)
            throw DimensionError("t2i forward: grid size != config tokens");
        for (int id : g.ids) {
            if (id < 0 || id > cfg_.drop_id()) throw ContractError("t2i forward: token id out of range");
            flat_ids.push_back(id);
        }
        for (int i = 0; i < n; ++i) pos_ids.push_back(i);
    }

    nn::Tensor<S> h = nn::add(nn::embedding(tok_emb_.t, flat_ids), nn::embedding(pos_emb_.t, pos_ids));

    // Per-sample conditioning token: projected caption state or the null
    // embedding, selected by constant masks so gradients stay exact.
    nn::Tensor<S> proj = cond_proj_.forward(cond_raw);
    nn::Tensor<S> nulls = nn::broadcast_row(null_cond_.t, batch);
    std::vector<S> keep(static_cast<size_t>(batch) * cfg_.dim, S(0));
    std::vector<S> drop(static_cast<size_t>(batch) * cfg_.dim, S(0));
    for (int b = 0; b < batch; ++b)
        for (int j = 0; j < cfg_.dim; ++j)
            (use_null[static_cast<size_t>(b)] ? drop : keep)[static_cast<size_t>(b) * cfg_.dim + j] = S(1);
    nn::Tensor<S> cond =
        nn::add(nn::mul(proj, nn::Tensor<S>::from({batch, cfg_.dim}, std::move(keep))),
                nn::mul(nulls, nn::Tensor<S>::from({batch, cfg_.dim}, std::move(drop))));

    for (const auto& block : blocks_) h = block.forward(h, batch, /*causal=*/false, &cond, dropout_rng);
    return head_.forward(final_ln_.forward(h));
}

template <class S>
nn::ParamList<S> T2IModel<S>::params() {
    nn::ParamList<S> out;
    out.push_back(&tok_emb_);
    out.push_back(&pos_emb_);
    out.push_back(&null_cond_);
    cond_proj_.collect(out);
    for (auto& b : blocks_) b.collect(out);
    final_ln_.collect(out);
    head_.collect(out);
    return out;
}

template <class S>
void T2IModel<S>::set_trainable(bool trainable) {
    for (auto* p : params()) {
        p->trainable = trainable;
        p->t.set_requires_grad(trainable);
    }
}

template class T2IModel<float>;
template class T2IModel<double>;

template <class S>
nn::Tensor<S> t2i_loss(const T2IModel<S>& model, const nn::Tensor<S>& caption_emb,
                       const vq::TokenGrid& grid, const std::vector<int>& mask) {
    if (mask.empty()) throw ContractError("t2i_loss: empty mask set");
    const auto& cfg = model.config();
    if (grid.has_drop(cfg.drop_id())) throw ContractError("t2i_loss: ground-truth grid contains dropped token");
    const vq::TokenGrid corrupted = apply_mask(grid, mask, cfg.drop_id());
    const nn::Tensor<S> logits = model.forward({corrupted}, caption_emb, {0}, nullptr);
    // Loss only at masked positions; everything else is ignored.
    std::vector<int> targets(static_cast<size_t>(cfg.tokens()), -1);
    for (int idx : mask) targets[static_cast<size_t>(idx)] = grid.ids[static_cast<size_t>(idx)];
    return nn::softmax_cross_entropy(logits, targets, -1);
}

template nn::Tensor<float> t2i_loss<float>(const T2IModel<float>&, const nn::Tensor<float>&,
                                           const vq::TokenGrid&, const std::vector<int>&);
template nn::Tensor<double> t2i_loss<double>(const T2IModel<double>&, const nn::Tensor<double>&,
                                             const vq::TokenGrid&, const std::vector<int>&);

std::vector<vq::TokenGrid> decode_batch(const T2IModel<float>& model,
                                        const std::vector<std::vector<float>>& cond_raws,
                                        const DecodeConfig& cfg, std::vector<Rng>& rngs) {
    const auto& mcfg = model.config();
    if (cfg.steps < 1) throw ParameterError("decode: steps must be >= 1");
    if (cfg.guidance_scale < 0.0f) throw ParameterError("decode: guidance scale must be >= 0");
    if (cfg.choice_temperature < 0.0f) throw ParameterError("decode: choice temperature must be >= 0");
    const int m_count = static_cast<int>(cond_raws.size());
    if (m_count == 0) return {};
    if (rngs.size() != cond_raws.size()) throw ParameterError("decode: one rng per grid required");
    const int n = mcfg.tokens();
    const int k = mcfg.codebook_size;
    const int drop = mcfg.drop_id();
    const bool guided = cfg.guidance_scale > 0.0f;

    // Conditioning rows: per-grid caption embedding, plus a mirrored
    // null-branch row per grid when guidance is on.
    const int fwd_batch = guided ? 2 * m_count : m_count;
    std::vector<float> cond_data;
    cond_data.reserve(static_cast<size_t>(fwd_batch) * mcfg.lm_dim);
    std::vector<uint8_t> null_flags;
    for (const auto& c : cond_raws) {
        if (static_cast<int>(c.size()) != mcfg.lm_dim)
            throw DimensionError("decode: caption embedding width != lm_dim");
        cond_data.insert(cond_data.end(), c.begin(), c.end());
        null_flags.push_back(0);
    }
    if (guided)
        for (const auto& c : cond_raws) {
            cond_data.insert(cond_data.end(), c.begin(), c.end());
            null_flags.push_back(1);
        }
    const nn::TensorF cond = nn::TensorF::from({fwd_batch, mcfg.lm_dim}, std::move(cond_data));

    std::vector<vq::TokenGrid> grids(static_cast<size_t>(m_count));
    for (auto& g : grids) {
        g.side = mcfg.grid_side;
        g.ids.assign(static_cast<size_t>(n), drop);
    }

    struct Candidate {
        int position;
        int id;
        double confidence;
    };
    for (int t = 1; t <= cfg.steps; ++t) {
        const int target_masked = masked_count_at_step(t, cfg.steps, n);
        std::vector<vq::TokenGrid> fwd_grids = grids;
        if (guided) fwd_grids.insert(fwd_grids.end(), grids.begin(), grids.end());
        const nn::TensorF logits = model.forward(fwd_grids, cond, null_flags, nullptr);
        const auto lv = logits.value();
        for (float v : lv)
            if (!std::isfinite(v))
                throw NumericError("decode: non-finite logits at step " + std::to_string(t));

        const double anneal =
            static_cast<double>(cfg.choice_temperature) *
            (1.0 - static_cast<double>(t) / static_cast<double>(cfg.steps));

        for (int g = 0; g < m_count; ++g) {
            auto& grid = grids[static_cast<size_t>(g)];
            Rng& rng = rngs[static_cast<size_t>(g)];
            int cur_masked = 0;
            for (int id : grid.ids) cur_masked += id == drop ? 1 : 0;
            const int to_commit = cur_masked - target_masked;
            if (to_commit <= 0) continue;

            std::vector<Candidate> cands;
            cands.reserve(static_cast<size_t>(cur_masked));
            std::vector<double> guided_row(static_cast<size_t>(k));
            for (int i = 0; i < n; ++i) {
                if (grid.ids[static_cast<size_t>(i)] != drop) continue;
                const float* lc = lv.data() + (static_cast<size_t>(g) * n + i) * k;
                if (guided) {
                    const float* lu = lv.data() + (static_cast<size_t>(m_count + g) * n + i) * k;
                    const double s = static_cast<double>(cfg.guidance_scale);
                    for (int j = 0; j < k; ++j)
                        guided_row[static_cast<size_t>(j)] =
                            (1.0 + s) * static_cast<double>(lc[j]) - s * static_cast<double>(lu[j]);
                } else {
                    for (int j = 0; j < k; ++j) guided_row[static_cast<size_t>(j)] = static_cast<double>(lc[j]);
                }
                // log-softmax over the guided logits
                double mx = guided_row[0];
                for (int j = 1; j < k; ++j) mx = std::max(mx, guided_row[static_cast<size_t>(j)]);
                double denom = 0.0;
                for (int j = 0; j < k; ++j) denom += std::exp(guided_row[static_cast<size_t>(j)] - mx);
                const double log_denom = std::log(denom);

                int chosen;
                if (cfg.choice_temperature == 0.0f) {
                    // Degenerate schedule: pure greedy fill, no randomness.
                    chosen = 0;
                    for (int j = 1; j < k; ++j)
                        if (guided_row[static_cast<size_t>(j)] > guided_row[static_cast<size_t>(chosen)]) chosen = j;
                } else {
                    // Categorical sample from the guided distribution.
                    const double u = rng.uniform() * denom;
                    double acc = 0.0;
                    chosen = k - 1;
                    for (int j = 0; j < k; ++j) {
                        acc += std::exp(guided_row[static_cast<size_t>(j)] - mx);
                        if (u < acc) {
                            chosen = j;
                            break;
                        }
                    }
                }
                double confidence = guided_row[static_cast<size_t>(chosen)] - mx - log_denom;
                if (anneal > 0.0 && cfg.choice_temperature > 0.0f) confidence += anneal * rng.gumbel();
                cands.push_back({i, chosen, confidence});
            }

            // Commit the most confident candidates; ties resolve to the
            // lower position for determinism.
            std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
                if (a.confidence != b.confidence) return a.confidence > b.confidence;
                return a.position < b.position;
            });
            for (int c = 0; c < to_commit && c < static_cast<int>(cands.size()); ++c)
                grid.ids[static_cast<size_t>(cands[static_cast<size_t>(c)].position)] =
                    cands[static_cast<size_t>(c)].id;
        }
    }

    for (const auto& g : grids)
        if (g.has_drop(drop)) throw ContractError("decode: dropped token survived the schedule");
    return grids;
}

vq::TokenGrid decode_iterative(const T2IModel<float>& model, const nn::TensorF& caption_emb,
                               const DecodeConfig& cfg, Rng& rng) {
    if (caption_emb.rows() != 1) throw DimensionError("decode_iterative: caption embedding must be one row");
    std::vector<float> cond(caption_emb.value().begin(), caption_emb.value().end());
    std::vector<Rng> rngs = {rng};
    auto grids = decode_batch(model, {cond}, cfg, rngs);
    rng = rngs.front();  // hand the advanced stream back to the caller
    return grids.front();
}

TrainLog train_t2i(T2IModel<float>& model, const std::vector<T2IPair>& pairs, const T2ITrainConfig& cfg) {
    if (pairs.empty()) throw DataError("t2i training: empty pair stream");
    const auto& mcfg = model.config();
    model.set_trainable(true);
    auto params = model.params();
    nn::AdamWConfig ocfg;
    ocfg.lr = cfg.lr;
    ocfg.warmup_steps = cfg.warmup_steps;
    ocfg.clip_norm = cfg.clip_norm;
    ocfg.weight_decay = cfg.weight_decay;
    nn::AdamW<float> opt(ocfg);

    Rng data_rng = Rng::derive(cfg.seed, 0x31);
    Rng mask_rng = Rng::derive(cfg.seed, 0x32);
    Rng drop_rng = Rng::derive(cfg.seed, 0x33);
    Rng cap_drop_rng = Rng::derive(cfg.seed, 0x34);

    TrainLog log;
    log.reserve(static_cast<size_t>(cfg.steps));
    const int n = mcfg.tokens();
    for (int step = 0; step < cfg.steps; ++step) {
        const auto t0 = std::chrono::steady_clock::now();
        std::vector<vq::TokenGrid> corrupted;
        std::vector<int> targets(static_cast<size_t>(cfg.batch_size) * n, -1);
        std::vector<float> cond_data;
        cond_data.reserve(static_cast<size_t>(cfg.batch_size) * mcfg.lm_dim);
        std::vector<uint8_t> use_null(static_cast<size_t>(cfg.batch_size), 0);
        int null_count = 0;
        for (int b = 0; b < cfg.batch_size; ++b) {
            const auto& pair = pairs[static_cast<size_t>(data_rng.randint(0, static_cast<int>(pairs.size())))];
            if (pair.grid.has_drop(mcfg.drop_id()))
                throw ContractError("t2i training: ground-truth grid contains dropped token");
            const std::vector<int> mask = sample_mask(mask_rng, n);
            corrupted.push_back(apply_mask(pair.grid, mask, mcfg.drop_id()));
            for (int idx : mask)
                targets[static_cast<size_t>(b) * n + idx] = pair.grid.ids[static_cast<size_t>(idx)];
            cond_data.insert(cond_data.end(), pair.caption_emb.begin(), pair.caption_emb.end());
            if (cap_drop_rng.bernoulli(static_cast<double>(mcfg.caption_dropout))) {
                use_null[static_cast<size_t>(b)] = 1;
                ++null_count;
            }
        }
        const nn::TensorF cond = nn::TensorF::from({cfg.batch_size, mcfg.lm_dim}, std::move(cond_data));
        const nn::TensorF logits = model.forward(corrupted, cond, use_null, &drop_rng);
        const nn::TensorF loss = nn::softmax_cross_entropy(logits, targets, -1);
        if (!std::isfinite(loss.item())) throw NumericError("t2i training: non-finite loss at step " + std::to_string(step));
        for (auto* p : params) p->t.zero_grad();
        nn::backward(loss);
        const float lr = nn::lr_at_step(opt.step_count(), cfg.lr, cfg.warmup_steps);
        opt.step(params, lr);
        const auto t1 = std::chrono::steady_clock::now();

        TrainLogEntry e;
        e.step = step + 1;
        e.loss = loss.item();
        e.lr = lr;
        e.seconds = std::chrono::duration<double>(t1 - t0).count();
        e.real_fraction = 1.0f - static_cast<float>(null_count) / static_cast<float>(cfg.batch_size);
        log.push_back(e);
    }
    return log;
}

std::string add_t2i_section(io::CheckpointWriter& writer, T2IModel<float>& model) {
    auto params = model.params();
    writer.add_meta("t2i_config", t2i_config_to_json(model.config()));
    return writer.add_section("t2i", params);
}

void load_t2i_section(const io::CheckpointReader& reader, T2IModel<float>& model) {
    auto params = model.params();
    reader.load_section("t2i", params);
}

T2IConfig t2i_config_from_json(const nlohmann::json& j) {
    T2IConfig cfg;
    cfg.codebook_size = j.value("codebook_size", cfg.codebook_size);
    cfg.grid_side = j.value("grid_side", cfg.grid_side);
    cfg.dim = j.value("dim", cfg.dim);
    cfg.layers = j.value("layers", cfg.layers);
    cfg.heads = j.value("heads", cfg.heads);
    cfg.ffn = j.value("ffn", cfg.ffn);
    cfg.dropout = j.value("dropout", cfg.dropout);
    cfg.caption_dropout = j.value("caption_dropout", cfg.caption_dropout);
    cfg.lm_dim = j.value("lm_dim", cfg.lm_dim);
    cfg.seed = j.value("seed", cfg.seed);
    return cfg;
}

nlohmann::json t2i_config_to_json(const T2IConfig& cfg) {
    return {{"codebook_size", cfg.codebook_size},
            {"grid_side", cfg.grid_side},
            {"dim", cfg.dim},
            {"layers", cfg.layers},
            {"heads", cfg.heads},
            {"ffn", cfg.ffn},
            {"dropout", cfg.dropout},
            {"caption_dropout", cfg.caption_dropout},
            {"lm_dim", cfg.lm_dim},
            {"seed", cfg.seed}};
}

}  // namespace synth::t2i
