#pragma once

#include <atomic>
#include <cstdint>
#include <string>
#include <vector>

#include "core/layers.hpp"
#include "core/optim.hpp"

namespace synth::vq {

struct VqConfig {
    int codebook_size = 512;  // K
    int dim = 32;             // D
    int side = 8;             // grid side; N = side^2
    int patch = 4;            // pixels per patch edge; image is side*patch square
    uint64_t seed = 17;

    int tokens() const { return side * side; }
    int image_size() const { return side * patch; }
    int patch_values() const { return patch * patch * 3; }
};

// Length side^2 sequence of codebook indices. kDropSentinel marks masked
// entries inside the generator; finalized grids never contain it.
struct TokenGrid {
    int side = 0;
    std::vector<int> ids;

    int n() const { return side * side; }
    bool has_drop(int drop_id) const;
};

struct ToyImage {
    int h = 0, w = 0;
    std::vector<float> rgb;  // h*w*3, row-major, values in [0,1]

    float& at(int y, int x, int c) { return rgb[(static_cast<size_t>(y) * w + x) * 3 + c]; }
    float at(int y, int x, int c) const { return rgb[(static_cast<size_t>(y) * w + x) * 3 + c]; }
};

struct Codebook {
    int k = 0, d = 0;
    std::vector<float> entries;  // k x d

    const float* row(int i) const { return entries.data() + static_cast<size_t>(i) * d; }
    // One past the codebook, so it can never collide with a real id.
    int drop_id() const { return k; }
};

Codebook init_codebook(const VqConfig& cfg);

// argmin-L2 assignment; ties break to the lowest index.
TokenGrid quantize(const nn::TensorF& vectors, const Codebook& cb, int side);

// Soft-embedding lookup: row i of the result is codebook[ids[i]].
// Rejects grids containing the dropped token.
template <class S>
nn::Tensor<S> embed(const TokenGrid& grid, const Codebook& cb);

// Toy stand-in for the frozen VQ-GAN backbone: patch-wise linear
// projection with residual mixing blocks on both sides of the codebook.
class Backbone {
  public:
    Backbone(const VqConfig& cfg, uint64_t seed);

    const VqConfig& config() const { return cfg_; }
    const Codebook& codebook() const { return codebook_; }

    // Differentiable encode of already-patchified pixels
    // ([batch*N x patch_values]); global mixing pools per image.
    nn::TensorF encode_patches(const nn::TensorF& patches, int batch = 1) const;
    nn::TensorF decode_embeddings(const nn::TensorF& z, int batch = 1) const;

    TokenGrid encode_image(const ToyImage& img) const;
    ToyImage decode_tokens(const TokenGrid& grid) const;

    nn::ParamList<float> params();
    void set_trainable(bool trainable);
    // Copies the trained codebook parameter into the runtime table.
    void refresh_codebook();

  private:
    struct MixBlock {
        nn::FeedForward<float> local;
        nn::FeedForward<float> global;
    };
    nn::TensorF run_blocks(const std::vector<MixBlock>& blocks, const nn::TensorF& x, int batch) const;

    VqConfig cfg_;
    nn::Parameter<float> codebook_param_;
    nn::Linear<float> enc_in_;
    std::vector<MixBlock> enc_blocks_;
    std::vector<MixBlock> dec_blocks_;
    nn::Linear<float> dec_out_;
    Codebook codebook_;
};

// Pixels <-> patch rows ([N x patch*patch*3]).
nn::TensorF image_to_patches(const ToyImage& img, const VqConfig& cfg);
ToyImage patches_to_image(const std::vector<float>& values, const VqConfig& cfg);

struct VqTrainStats {
    int steps = 0;
    float final_loss = 0.0f;
};

// Reconstruction pretraining: MSE through a straight-through estimator
// plus codebook/commitment terms. The backbone is frozen afterwards.
VqTrainStats pretrain_reconstruction(Backbone& backbone, const std::vector<ToyImage>& images, int steps,
                                     int batch_size, float lr, uint64_t seed);

// Counts decode_tokens calls; the synthetic path must never trigger one.
int64_t pixel_decode_count();
void reset_pixel_decode_count();

void save_backbone(Backbone& backbone, const std::string& path);
Backbone load_backbone(const std::string& path);

}  // namespace synth::vq
