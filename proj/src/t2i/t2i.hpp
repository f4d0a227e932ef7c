#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/layers.hpp"
#include "core/metrics.hpp"
#include "core/optim.hpp"
#include "core/serialize.hpp"
#include "vq/vq.hpp"

namespace synth::t2i {

struct T2IConfig {
    int codebook_size = 512;  // K; output head width (drop token never predicted)
    int grid_side = 8;        // N = side^2
    int dim = 128;
    int layers = 4;
    int heads = 4;
    int ffn = 512;
    float dropout = 0.1f;
    float caption_dropout = 0.1f;  // null-caption rate enabling guidance
    int lm_dim = 128;              // width of incoming pooled caption embeddings
    uint64_t seed = 7;

    int tokens() const { return grid_side * grid_side; }
    int drop_id() const { return codebook_size; }
};

struct DecodeConfig {
    int steps = 24;
    float guidance_scale = 4.0f;
    float choice_temperature = 32.5f;
    uint64_t seed = 0;
};

// Training-time mask size for a schedule draw u ~ U[0,1):
// max(1, round(N*cos(pi*u/2))). Mean fraction is 2/pi.
int mask_count_from_u(double u, int n);

// Draws u and samples that many indices without replacement.
std::vector<int> sample_mask(Rng& rng, int n);

vq::TokenGrid apply_mask(const vq::TokenGrid& grid, const std::vector<int>& mask, int drop_id);

// Inference schedule: ceil(N*cos(pi/2 * t/T)); N at t=0, 0 at t=T,
// non-increasing in between.
int masked_count_at_step(int t, int steps, int n);

// Masked-token transformer conditioned on a caption embedding through
// per-layer cross-attention. The conditioning input is the frozen LM's
// pooled caption state; a learned null embedding replaces it for
// caption-dropout samples and for the unconditional guidance branch.
template <class S>
class T2IModel {
  public:
    T2IModel(const T2IConfig& cfg, uint64_t seed);

    const T2IConfig& config() const { return cfg_; }

    // grids: batch of (possibly corrupted) token grids; cond_raw: [B x lm_dim]
    // pooled caption embeddings; use_null: per-sample null-caption flags.
    // Returns [B*N x K] logits.
    nn::Tensor<S> forward(const std::vector<vq::TokenGrid>& grids, const nn::Tensor<S>& cond_raw,
                          const std::vector<uint8_t>& use_null, Rng* dropout_rng) const;

    nn::ParamList<S> params();
    void set_trainable(bool trainable);

  private:
    T2IConfig cfg_;
    nn::Parameter<S> tok_emb_;   // [(K+1) x dim], last row embeds the dropped token
    nn::Parameter<S> pos_emb_;   // [N x dim]
    nn::Parameter<S> null_cond_; // [1 x dim]
    nn::Linear<S> cond_proj_;    // lm_dim -> dim
    std::vector<nn::TransformerBlock<S>> blocks_;
    nn::LayerNormLayer<S> final_ln_;
    nn::Linear<S> head_;         // dim -> K
};

// Masked-only cross-entropy: forward on apply_mask(grid, M), loss over
// positions in M. Grid must be clean ground truth; M must be non-empty.
template <class S>
nn::Tensor<S> t2i_loss(const T2IModel<S>& model, const nn::Tensor<S>& caption_emb,
                       const vq::TokenGrid& grid, const std::vector<int>& mask);

// Iterative parallel decoding: start fully dropped, sample candidates at
// masked positions from guided logits, commit the most confident so the
// masked count follows masked_count_at_step exactly. Committed ids are
// never re-masked. choice_temperature scales annealed Gumbel noise on
// the confidences; 0 makes decoding fully deterministic (greedy).
vq::TokenGrid decode_iterative(const T2IModel<float>& model, const nn::TensorF& caption_emb,
                               const DecodeConfig& cfg, Rng& rng);

// Same loop over many grids in one batched forward per step; grid i uses
// its own rng so results match a solo decode_iterative bit for bit.
std::vector<vq::TokenGrid> decode_batch(const T2IModel<float>& model,
                                        const std::vector<std::vector<float>>& cond_raws,
                                        const DecodeConfig& cfg, std::vector<Rng>& rngs);

struct T2IPair {
    std::vector<float> caption_emb;  // pooled LM embedding, lm_dim
    vq::TokenGrid grid;              // clean ground truth
};

struct T2ITrainConfig {
    int steps = 3000;
    int batch_size = 16;
    float lr = 1e-4f;
    int warmup_steps = 5000;
    float clip_norm = 1.0f;
    float weight_decay = 1e-4f;
    uint64_t seed = 7;
};

// Masked-token training with caption dropout. Returns the per-step log;
// entry.real_fraction records the share of non-null captions.
TrainLog train_t2i(T2IModel<float>& model, const std::vector<T2IPair>& pairs, const T2ITrainConfig& cfg);

// Checkpoint section plumbing; the pipeline bundles t2i together with
// the frozen lm and vq sections it depends on.
std::string add_t2i_section(io::CheckpointWriter& writer, T2IModel<float>& model);
void load_t2i_section(const io::CheckpointReader& reader, T2IModel<float>& model);
T2IConfig t2i_config_from_json(const nlohmann::json& j);
nlohmann::json t2i_config_to_json(const T2IConfig& cfg);

}  // namespace synth::t2i
