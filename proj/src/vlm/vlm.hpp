#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "core/metrics.hpp"
#include "core/serialize.hpp"
#include "lm/lm.hpp"
#include "vq/vq.hpp"

namespace synth::vlm {

enum class Modality { kPixel, kEmbedding };
enum class Origin { kReal, kSynthetic };

std::string to_string(Modality m);
std::string to_string(Origin o);

// One VLM training example. Pixel-modality records carry the image and
// run through the VQ encoder; embedding-modality records carry the token
// grid directly, bypassing pixel space.
struct PairRecord {
    std::vector<int> caption_ids;  // [BOS..EOS]
    vq::TokenGrid grid;
    std::optional<vq::ToyImage> image;  // present for pixel modality
    Modality modality = Modality::kEmbedding;
    Origin origin = Origin::kReal;
    std::string caption_text;
};

struct ResamplerConfig {
    int latents = 16;
    int layers = 2;
    int heads = 4;
    int dim = 128;
    int input_dim = 32;    // VQ embedding width
    int max_tokens = 256;  // learned positional table size
};

// Fixed set of learned latent queries cross-attending to a variable
// number of image token embeddings.
template <class S>
class Resampler {
  public:
    Resampler(const ResamplerConfig& cfg, uint64_t seed);

    const ResamplerConfig& config() const { return cfg_; }

    // tokens: [batch*n x input_dim] soft embeddings. Returns
    // [batch*latents x dim]. use_positions=false gives set semantics.
    nn::Tensor<S> forward(const nn::Tensor<S>& tokens, int batch, int n, bool use_positions) const;

    nn::ParamList<S> params();

  private:
    struct Layer {
        nn::LayerNormLayer<S> ln_q;
        nn::MultiHeadAttention<S> attn;
        nn::LayerNormLayer<S> ln_f;
        nn::FeedForward<S> ffn;
    };
    ResamplerConfig cfg_;
    nn::Parameter<S> latents_;  // [latents x dim]
    nn::Parameter<S> pos_emb_;  // [max_tokens x dim]
    nn::Linear<S> input_proj_;  // input_dim -> dim
    std::vector<Layer> layers_;
};

// Cross-attention into the frozen LM residual stream, scaled by a
// tanh-activated scalar gate. Zero-initialized gates make the layer the
// identity, so an untrained VLM reproduces the LM exactly.
template <class S>
struct GatedXAttn {
    nn::LayerNormLayer<S> ln;
    nn::MultiHeadAttention<S> attn;
    nn::Parameter<S> gate;  // [1]

    GatedXAttn() = default;
    GatedXAttn(int dim, int heads, Rng& rng, const std::string& name);

    nn::Tensor<S> forward(const nn::Tensor<S>& h, const nn::Tensor<S>& latents, int batch) const;
    void collect(nn::ParamList<S>& out) {
        ln.collect(out);
        attn.collect(out);
        out.push_back(&gate);
    }
};

struct VlmConfig {
    ResamplerConfig resampler;
    uint64_t seed = 23;
};

// Frozen LM + frozen VQ backbone + trainable resampler and gated
// cross-attention after every LM block.
template <class S>
class Vlm {
  public:
    Vlm(const VlmConfig& cfg, const lm::LmConfig& lm_cfg, const vq::Codebook& codebook, uint64_t seed);

    const VlmConfig& config() const { return cfg_; }
    lm::Lm<S>& language_model() { return lm_; }
    const lm::Lm<S>& language_model() const { return lm_; }
    const vq::Codebook& codebook() const { return codebook_; }

    // Latents for a batch of token grids (already soft-embedded).
    nn::Tensor<S> resample_grids(const std::vector<const vq::TokenGrid*>& grids) const;

    // Next-token logits over the caption batch, conditioned on latents.
    // flat_inputs is the padded [B*T] shifted caption input.
    nn::Tensor<S> caption_logits(const std::vector<int>& flat_inputs, int batch, int t,
                                 const nn::Tensor<S>& latents, Rng* dropout_rng) const;

    nn::ParamList<S> trainable_params();
    nn::ParamList<S> frozen_lm_params() { return lm_.params(); }

    const Resampler<S>& resampler() const { return resampler_; }

  private:
    VlmConfig cfg_;
    lm::Lm<S> lm_;
    vq::Codebook codebook_;
    Resampler<S> resampler_;
    std::vector<GatedXAttn<S>> xattn_;
};

// Resolves the input path: embedding modality embeds the stored grid,
// pixel modality encodes the image first. Both converge on the same
// TokenGrid -> soft-embedding route.
vq::TokenGrid grid_for_record(const PairRecord& rec, const vq::Backbone& backbone);

// Mean cross-entropy of p(y_l | y_<l, x); PAD ignored.
template <class S>
nn::Tensor<S> vlm_loss(const Vlm<S>& model, const std::vector<const PairRecord*>& batch,
                       const vq::Backbone& backbone, Rng* dropout_rng);

struct VlmTrainConfig {
    int steps = 2000;
    int batch_size = 16;
    float lr = 1e-4f;
    int warmup_steps = 5000;
    float clip_norm = 1.0f;
    float weight_decay = 1e-4f;
    uint64_t seed = 23;
};

// Greedy decode until EOS or max_len.
std::vector<int> generate_caption(const Vlm<float>& model, const vq::TokenGrid& grid, int max_len);

std::string add_vlm_sections(io::CheckpointWriter& writer, Vlm<float>& model);
void load_vlm_sections(const io::CheckpointReader& reader, Vlm<float>& model);

}  // namespace synth::vlm
