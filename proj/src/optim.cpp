#include "sci/optim.hpp"

#include <cmath>

namespace sci {

void adam_update(std::span<float> param, std::span<const float> grad,
                 std::span<float> m, std::span<float> v,
                 int64_t step, const AdamConfig& cfg) {
    const float bc1 = 1.0f - std::pow(cfg.beta1, static_cast<float>(step));
    const float bc2 = 1.0f - std::pow(cfg.beta2, static_cast<float>(step));
    for (size_t i = 0; i < param.size(); ++i) {
        m[i] = cfg.beta1 * m[i] + (1.0f - cfg.beta1) * grad[i];
        v[i] = cfg.beta2 * v[i] + (1.0f - cfg.beta2) * grad[i] * grad[i];
        const float mhat = m[i] / bc1;
        const float vhat = v[i] / bc2;
        param[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
}

Adam::Adam(std::vector<Tensor> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
    state_.m.reserve(params_.size());
    state_.v.reserve(params_.size());
    for (const Tensor& p : params_) {
        state_.m.emplace_back(p.data().size(), 0.0f);
        state_.v.emplace_back(p.data().size(), 0.0f);
    }
}

void Adam::step() {
    ++state_.step;
    for (size_t i = 0; i < params_.size(); ++i) {
        Tensor& p = params_[i];
        if (!p.has_grad())
            throw ContractError("adam: parameter " + std::to_string(i) +
                                " has no gradient (run backward first)");
        adam_update(p.data(), p.grad(), state_.m[i], state_.v[i], state_.step, cfg_);
    }
}

void Adam::zero_grad() {
    for (Tensor& p : params_) p.zero_grad();
}

float LrSchedule::at(int epoch) const {
    switch (kind) {
    case Kind::Cosine: {
        if (total_epochs <= 1) return base_lr;
        const double t = static_cast<double>(epoch) / static_cast<double>(total_epochs);
        return base_lr * 0.5f * (1.0f + static_cast<float>(std::cos(3.14159265358979323846 * t)));
    }
    case Kind::StepDecay: {
        float lr = base_lr;
        for (int ms : milestones)
            if (epoch >= ms) lr *= decay_factor;
        return lr;
    }
    }
    return base_lr;
}

} // namespace sci
