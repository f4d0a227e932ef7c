#include "vq/vq.hpp"

#include <algorithm>
#include <cmath>

#include "core/serialize.hpp"

namespace synth::vq {

namespace {
std::atomic<int64_t> g_pixel_decodes{0};
}

int64_t pixel_decode_count() { return g_pixel_decodes.load(); }
void reset_pixel_decode_count() { g_pixel_decodes.store(0); }

bool TokenGrid::has_drop(int drop_id) const {
    for (int id : ids)
        if (id == drop_id) return true;
    return false;
}

Codebook init_codebook(const VqConfig& cfg) {
    Codebook cb;
    cb.k = cfg.codebook_size;
    cb.d = cfg.dim;
    cb.entries.resize(static_cast<size_t>(cb.k) * cb.d);
    Rng rng = Rng::derive(cfg.seed, 0xc0de);
    const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.dim));
    for (auto& v : cb.entries) v = static_cast<float>(rng.uniform(-bound, bound));
    return cb;
}

TokenGrid quantize(const nn::TensorF& vectors, const Codebook& cb, int side) {
    if (cb.k == 0) throw ConfigError("quantize: empty codebook");
    if (vectors.cols() != cb.d) throw DimensionError("quantize: vector dim != codebook dim");
    const int n = vectors.rows();
    if (n != side * side) throw DimensionError("quantize: vector count != side^2");
    TokenGrid grid;
    grid.side = side;
    grid.ids.resize(static_cast<size_t>(n));
    const auto v = vectors.value();
    for (int i = 0; i < n; ++i) {
        const float* row = v.data() + static_cast<size_t>(i) * cb.d;
        int best = 0;
        float best_d = std::numeric_limits<float>::infinity();
        for (int k = 0; k < cb.k; ++k) {
            const float* e = cb.row(k);
            float dist = 0.0f;
            for (int j = 0; j < cb.d; ++j) {
                const float diff = row[j] - e[j];
                dist += diff * diff;
            }
            if (dist < best_d) {  // strict: ties keep the lowest index
                best_d = dist;
                best = k;
            }
        }
        grid.ids[static_cast<size_t>(i)] = best;
    }
    return grid;
}

template <class S>
nn::Tensor<S> embed(const TokenGrid& grid, const Codebook& cb) {
    const int n = grid.n();
    if (static_cast<int>(grid.ids.size()) != n) throw ContractError("embed: grid id count != side^2");
    std::vector<S> data(static_cast<size_t>(n) * cb.d);
    for (int i = 0; i < n; ++i) {
        const int id = grid.ids[static_cast<size_t>(i)];
        if (id == cb.drop_id())
            throw ContractError("embed: dropped token present; the VLM never sees dropped tokens");
        if (id < 0 || id >= cb.k) throw ContractError("embed: id out of codebook range");
        const float* e = cb.row(id);
        for (int j = 0; j < cb.d; ++j) data[static_cast<size_t>(i) * cb.d + j] = static_cast<S>(e[j]);
    }
    return nn::Tensor<S>::from({n, cb.d}, std::move(data));
}

template nn::Tensor<float> embed<float>(const TokenGrid&, const Codebook&);
template nn::Tensor<double> embed<double>(const TokenGrid&, const Codebook&);

nn::TensorF image_to_patches(const ToyImage& img, const VqConfig& cfg) {
    const int size = cfg.image_size();
    if (img.h != size || img.w != size) throw ConfigError("image_to_patches: image dims do not match config");
    const int n = cfg.tokens();
    const int pv = cfg.patch_values();
    std::vector<float> data(static_cast<size_t>(n) * pv);
    for (int gy = 0; gy < cfg.side; ++gy)
        for (int gx = 0; gx < cfg.side; ++gx) {
            float* dst = data.data() + (static_cast<size_t>(gy) * cfg.side + gx) * pv;
            int at = 0;
            for (int py = 0; py < cfg.patch; ++py)
                for (int px = 0; px < cfg.patch; ++px)
                    for (int c = 0; c < 3; ++c)
                        dst[at++] = img.at(gy * cfg.patch + py, gx * cfg.patch + px, c);
        }
    return nn::TensorF::from({n, pv}, std::move(data));
}

ToyImage patches_to_image(const std::vector<float>& values, const VqConfig& cfg) {
    const int size = cfg.image_size();
    ToyImage img;
    img.h = img.w = size;
    img.rgb.assign(static_cast<size_t>(size) * size * 3, 0.0f);
    const int pv = cfg.patch_values();
    for (int gy = 0; gy < cfg.side; ++gy)
        for (int gx = 0; gx < cfg.side; ++gx) {
            const float* src = values.data() + (static_cast<size_t>(gy) * cfg.side + gx) * pv;
            int at = 0;
            for (int py = 0; py < cfg.patch; ++py)
                for (int px = 0; px < cfg.patch; ++px)
                    for (int c = 0; c < 3; ++c)
                        img.at(gy * cfg.patch + py, gx * cfg.patch + px, c) =
                            std::clamp(src[at++], 0.0f, 1.0f);
        }
    return img;
}

Backbone::Backbone(const VqConfig& cfg, uint64_t seed) : cfg_(cfg) {
    Rng rng = Rng::derive(seed, 0xbb);
    codebook_ = init_codebook(cfg);
    codebook_param_.t = nn::TensorF::from({codebook_.k, codebook_.d}, codebook_.entries, true);
    codebook_param_.name = "vq.codebook";

    const int pv = cfg.patch_values();
    const int hidden = 128;
    enc_in_ = nn::Linear<float>(pv, cfg.dim, rng, "vq.enc.in");
    dec_out_ = nn::Linear<float>(cfg.dim, pv, rng, "vq.dec.out");
    const int blocks = 4;
    for (int i = 0; i < blocks; ++i) {
        enc_blocks_.push_back({nn::FeedForward<float>(cfg.dim, hidden, rng, "vq.enc.b" + std::to_string(i) + ".local"),
                               nn::FeedForward<float>(cfg.dim, hidden, rng, "vq.enc.b" + std::to_string(i) + ".global")});
        dec_blocks_.push_back({nn::FeedForward<float>(cfg.dim, hidden, rng, "vq.dec.b" + std::to_string(i) + ".local"),
                               nn::FeedForward<float>(cfg.dim, hidden, rng, "vq.dec.b" + std::to_string(i) + ".global")});
    }
}

nn::TensorF Backbone::run_blocks(const std::vector<MixBlock>& blocks, const nn::TensorF& x, int batch) const {
    nn::TensorF h = x;
    const int n = h.rows() / batch;
    const std::vector<int> lengths(static_cast<size_t>(batch), n);
    for (const auto& b : blocks) {
        h = nn::add(h, b.local.forward(h));
        // Permutation-equivariant global mixing: every patch of an image
        // sees that image's mean.
        nn::TensorF pooled = nn::mean_pool_rows(h, batch, n, lengths);
        h = nn::add(h, nn::repeat_rows(b.global.forward(pooled), n));
    }
    return h;
}

nn::TensorF Backbone::encode_patches(const nn::TensorF& patches, int batch) const {
    if (patches.cols() != cfg_.patch_values())
        throw ConfigError("encode: patch width does not match config");
    if (patches.rows() % (batch * cfg_.tokens()) != 0)
        throw ConfigError("encode: row count does not match batch * tokens");
    return run_blocks(enc_blocks_, enc_in_.forward(patches), batch);
}

nn::TensorF Backbone::decode_embeddings(const nn::TensorF& z, int batch) const {
    if (z.cols() != cfg_.dim) throw ConfigError("decode: embedding width does not match config");
    return dec_out_.forward(run_blocks(dec_blocks_, z, batch));
}

TokenGrid Backbone::encode_image(const ToyImage& img) const {
    const nn::TensorF z = encode_patches(image_to_patches(img, cfg_));
    return quantize(z, codebook_, cfg_.side);
}

ToyImage Backbone::decode_tokens(const TokenGrid& grid) const {
    if (grid.has_drop(codebook_.drop_id()))
        throw ContractError("decode_tokens: dropped token in finalized grid");
    g_pixel_decodes.fetch_add(1);
    const nn::TensorF px = decode_embeddings(embed<float>(grid, codebook_));
    return patches_to_image({px.value().begin(), px.value().end()}, cfg_);
}

nn::ParamList<float> Backbone::params() {
    nn::ParamList<float> out;
    out.push_back(&codebook_param_);
    enc_in_.collect(out);
    for (auto& b : enc_blocks_) {
        b.local.collect(out);
        b.global.collect(out);
    }
    for (auto& b : dec_blocks_) {
        b.local.collect(out);
        b.global.collect(out);
    }
    dec_out_.collect(out);
    return out;
}

void Backbone::set_trainable(bool trainable) {
    for (auto* p : params()) {
        p->trainable = trainable;
        p->t.set_requires_grad(trainable);
    }
}

void Backbone::refresh_codebook() {
    const auto v = codebook_param_.t.value();
    codebook_.entries.assign(v.begin(), v.end());
}

VqTrainStats pretrain_reconstruction(Backbone& backbone, const std::vector<ToyImage>& images, int steps,
                                     int batch_size, float lr, uint64_t seed) {
    if (images.empty()) throw DataError("vq pretraining: empty image set");
    backbone.set_trainable(true);
    const auto& cfg = backbone.config();
    auto params = backbone.params();
    nn::AdamWConfig ocfg;
    ocfg.lr = lr;
    ocfg.warmup_steps = std::max(1, steps / 20);
    nn::AdamW<float> opt(ocfg);
    Rng rng = Rng::derive(seed, 0x7a);

    const float commitment_beta = 0.25f;
    VqTrainStats stats;
    for (int step = 0; step < steps; ++step) {
        std::vector<nn::TensorF> patch_parts;
        patch_parts.reserve(static_cast<size_t>(batch_size));
        for (int b = 0; b < batch_size; ++b) {
            const auto& img = images[static_cast<size_t>(rng.randint(0, static_cast<int>(images.size())))];
            patch_parts.push_back(image_to_patches(img, cfg));
        }
        const nn::TensorF patches = nn::concat_rows(patch_parts);
        const nn::TensorF z_e = backbone.encode_patches(patches, batch_size);

        // Nearest codes from the *current* codebook parameter.
        backbone.refresh_codebook();
        std::vector<int> ids(static_cast<size_t>(z_e.rows()));
        {
            const auto& cb = backbone.codebook();
            const auto zv = z_e.value();
            for (int i = 0; i < z_e.rows(); ++i) {
                const float* row = zv.data() + static_cast<size_t>(i) * cb.d;
                int best = 0;
                float best_d = std::numeric_limits<float>::infinity();
                for (int k = 0; k < cb.k; ++k) {
                    const float* e = cb.row(k);
                    float dist = 0.0f;
                    for (int j = 0; j < cb.d; ++j) {
                        const float diff = row[j] - e[j];
                        dist += diff * diff;
                    }
                    if (dist < best_d) {
                        best_d = dist;
                        best = k;
                    }
                }
                ids[static_cast<size_t>(i)] = best;
            }
        }
        nn::ParamList<float> plist = backbone.params();
        nn::Parameter<float>* cb_param = plist.front();  // vq.codebook
        const nn::TensorF z_q = nn::embedding(cb_param->t, ids);

        // Straight-through: decoder sees z_e + (z_q - z_e) with the gap detached.
        const nn::TensorF st = nn::add(z_e, nn::detach(nn::sub(z_q, z_e)));
        const nn::TensorF recon = backbone.decode_embeddings(st, batch_size);
        nn::TensorF loss = nn::mse(recon, patches);
        loss = nn::add(loss, nn::mse(z_q, nn::detach(z_e)));
        loss = nn::add(loss, nn::scale(nn::mse(z_e, nn::detach(z_q)), commitment_beta));

        for (auto* p : plist) p->t.zero_grad();
        nn::backward(loss);
        opt.step(plist, lr);
        stats.final_loss = loss.item();
        stats.steps = step + 1;
    }
    backbone.refresh_codebook();
    backbone.set_trainable(false);
    return stats;
}

void save_backbone(Backbone& backbone, const std::string& path) {
    backbone.refresh_codebook();
    io::CheckpointWriter w("vq");
    const auto& cfg = backbone.config();
    w.set_config({{"K", cfg.codebook_size},
                  {"D", cfg.dim},
                  {"side", cfg.side},
                  {"patch", cfg.patch},
                  {"seed", cfg.seed}});
    auto params = backbone.params();
    w.add_section("vq", params);
    w.write(path);
}

Backbone load_backbone(const std::string& path) {
    io::CheckpointReader r(path);
    if (r.kind() != "vq") throw IoError("not a vq checkpoint: " + path);
    const auto cfg_json = r.config();
    VqConfig cfg;
    cfg.codebook_size = cfg_json.at("K").get<int>();
    cfg.dim = cfg_json.at("D").get<int>();
    cfg.side = cfg_json.at("side").get<int>();
    cfg.patch = cfg_json.at("patch").get<int>();
    cfg.seed = cfg_json.at("seed").get<uint64_t>();
    Backbone backbone(cfg, cfg.seed);
    auto params = backbone.params();
    r.load_section("vq", params);
    backbone.refresh_codebook();
    backbone.set_trainable(false);
    return backbone;
}

}  // namespace synth::vq
