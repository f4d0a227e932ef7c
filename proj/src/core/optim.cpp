#include "core/optim.hpp"

#include <cmath>
#include <string>

namespace synth::nn {

float lr_at_step(int64_t step, float base_lr, int warmup_steps) {
    if (step < 0) throw ParameterError("lr_at_step: negative step");
    if (warmup_steps <= 0 || step >= warmup_steps) return base_lr;
    return base_lr * static_cast<float>(step) / static_cast<float>(warmup_steps);
}

template <class S>
double AdamW<S>::step(const ParamList<S>& params, float lr) {
    if (state_.empty()) {
        state_.resize(params.size());
        for (size_t i = 0; i < params.size(); ++i) {
            state_[i].m.assign(params[i]->t.size(), S(0));
            state_[i].v.assign(params[i]->t.size(), S(0));
        }
    }
    if (state_.size() != params.size()) throw ContractError("AdamW: parameter list changed between steps");

    // Global norm over trainable grads; non-finite aborts the step.
    double sq = 0.0;
    for (const auto* p : params) {
        if (!p->trainable || !p->t.has_grad()) continue;
        for (S g : p->t.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
    }
    const double norm = std::sqrt(sq);
    if (!std::isfinite(norm)) {
        std::string diag = "AdamW: non-finite gradient at step " + std::to_string(step_count_ + 1);
        for (const auto* p : params) {
            if (!p->trainable || !p->t.has_grad()) continue;
            for (S g : p->t.grad())
                if (!std::isfinite(static_cast<double>(g))) {
                    diag += " (first offending parameter: " + p->name + ")";
                    throw NumericError(diag);
                }
        }
        throw NumericError(diag);
    }

    double clip_scale = 1.0;
    if (cfg_.clip_norm > 0.0f && norm > static_cast<double>(cfg_.clip_norm))
        clip_scale = static_cast<double>(cfg_.clip_norm) / norm;

    step_count_ += 1;
    const double t = static_cast<double>(step_count_);
    const double b1 = cfg_.beta1, b2 = cfg_.beta2;
    const double bc1 = 1.0 - std::pow(b1, t);
    const double bc2 = 1.0 - std::pow(b2, t);

    for (size_t i = 0; i < params.size(); ++i) {
        Parameter<S>* p = params[i];
        if (!p->trainable) continue;
        if (!p->t.has_grad()) continue;
        auto val = p->t.value();
        auto grad = p->t.grad();
        auto& m = state_[i].m;
        auto& v = state_[i].v;
        for (size_t j = 0; j < val.size(); ++j) {
            const double g = static_cast<double>(grad[j]) * clip_scale;
            const double mj = b1 * static_cast<double>(m[j]) + (1.0 - b1) * g;
            const double vj = b2 * static_cast<double>(v[j]) + (1.0 - b2) * g * g;
            m[j] = static_cast<S>(mj);
            v[j] = static_cast<S>(vj);
            const double mhat = mj / bc1;
            const double vhat = vj / bc2;
            const double upd = mhat / (std::sqrt(vhat) + static_cast<double>(cfg_.eps)) +
                               static_cast<double>(cfg_.weight_decay) * static_cast<double>(val[j]);
            val[j] = static_cast<S>(static_cast<double>(val[j]) - static_cast<double>(lr) * upd);
        }
    }
    return norm;
}

template class AdamW<float>;
template class AdamW<double>;

}  // namespace synth::nn
