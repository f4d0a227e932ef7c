#pragma once

#include <cstdint>
#include <vector>

#include "core/tensor.hpp"

namespace synth::nn {

struct AdamWConfig {
    float lr = 1e-4f;
    float beta1 = 0.9f;
    float beta2 = 0.99f;
    float eps = 1e-8f;
    float weight_decay = 1e-4f;
    float clip_norm = 1.0f;  // <= 0 disables clipping
    int warmup_steps = 5000;
};

// Linear warmup 0 -> base_lr over warmup_steps, constant afterwards.
float lr_at_step(int64_t step, float base_lr, int warmup_steps);

// Decoupled-weight-decay Adam over a parameter list. Gradients are
// globally norm-clipped before the moment update; frozen parameters are
// never touched.
template <class S>
class AdamW {
  public:
    explicit AdamW(AdamWConfig cfg) : cfg_(cfg) {}

    // Applies one update at the given learning rate using grads already
    // accumulated in the params. Returns the pre-clip global grad norm.
    double step(const ParamList<S>& params, float lr);

    // Convenience: lr from the configured warmup schedule.
    double step(const ParamList<S>& params) {
        return step(params, lr_at_step(step_count_, cfg_.lr, cfg_.warmup_steps));
    }

    int64_t step_count() const { return step_count_; }
    const AdamWConfig& config() const { return cfg_; }

  private:
    struct Moments {
        std::vector<S> m, v;
    };
    AdamWConfig cfg_;
    std::vector<Moments> state_;
    int64_t step_count_ = 0;
};

}  // namespace synth::nn
