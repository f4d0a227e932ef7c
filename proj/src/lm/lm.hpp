#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "capgen/capgen.hpp"
#include "core/layers.hpp"
#include "core/optim.hpp"

namespace synth::lm {

struct LmConfig {
    int vocab = capgen::ByteTokenizer::kVocabSize;
    int dim = 128;
    int layers = 2;
    int heads = 4;
    int ffn = 512;
    int max_len = 64;
    float dropout = 0.1f;
    uint64_t seed = 101;
};

// Decoder-only byte LM. Pretrained on the caption corpus, then frozen
// to act as the pipeline's language model: its final hidden states
// provide caption embeddings and the VLM decodes through it.
template <class S>
class Lm {
  public:
    Lm(const LmConfig& cfg, uint64_t seed);

    const LmConfig& config() const { return cfg_; }

    // Token + position embeddings for a padded batch laid out [B*T].
    nn::Tensor<S> embed_tokens(const std::vector<int>& flat_ids, int batch, int t) const;
    // Causal hidden states after all blocks and the final norm.
    nn::Tensor<S> hidden_states(const std::vector<int>& flat_ids, int batch, int t, Rng* dropout_rng) const;
    nn::Tensor<S> logits_from_hidden(const nn::Tensor<S>& h) const;

    // Mean of final hidden states over the first `length` positions.
    nn::Tensor<S> pooled_embedding(const std::vector<int>& ids) const;

    const std::vector<nn::TransformerBlock<S>>& blocks() const { return blocks_; }
    nn::Tensor<S> block_forward(int i, const nn::Tensor<S>& h, int batch, Rng* dropout_rng) const;
    nn::Tensor<S> final_norm(const nn::Tensor<S>& h) const { return final_ln_.forward(h); }

    nn::ParamList<S> params();
    void set_trainable(bool trainable);

  private:
    LmConfig cfg_;
    nn::Parameter<S> tok_emb_;  // [vocab x dim]
    nn::Parameter<S> pos_emb_;  // [max_len x dim]
    std::vector<nn::TransformerBlock<S>> blocks_;
    nn::LayerNormLayer<S> final_ln_;
    nn::Linear<S> head_;
};

struct LmTrainStats {
    int steps = 0;
    float final_loss = 0.0f;
};

// Next-token pretraining over caption records; PAD is ignored in the
// loss. The model is left frozen when training finishes.
LmTrainStats pretrain_lm(Lm<float>& model, const std::vector<capgen::CaptionRecord>& captions, int steps,
                         int batch_size, float base_lr, int warmup_steps, uint64_t seed);

// Pads [BOS..EOS] token ids and builds shifted next-token pairs.
struct LmBatch {
    std::vector<int> inputs;   // [B*T]
    std::vector<int> targets;  // [B*T], PAD where ignored
    int batch = 0;
    int t = 0;
};
LmBatch make_lm_batch(const std::vector<const std::vector<int>*>& seqs);

void save_lm(Lm<float>& model, const std::string& path);
Lm<float> load_lm(const std::string& path);

}  // namespace synth::lm
