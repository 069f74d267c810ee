#pragma once

#include <vector>

#include "sci/tensor.hpp"

namespace sci {

struct AdamConfig {
    float lr = 3.5e-4f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
};

/// Per-parameter Adam moments; step increases by exactly 1 per apply.
struct AdamState {
    int64_t step = 0;
    std::vector<std::vector<float>> m;
    std::vector<std::vector<float>> v;
};

/// Bias-corrected Adam update of one parameter buffer.
void adam_update(std::span<float> param, std::span<const float> grad,
                 std::span<float> m, std::span<float> v,
                 int64_t step, const AdamConfig& cfg);

/// Optimizer bound to a fixed parameter list. step() requires every bound
/// parameter to carry a populated gradient (ContractError otherwise).
class Adam {
public:
    Adam(std::vector<Tensor> params, AdamConfig cfg = {});

    void step();
    void zero_grad();
    void set_lr(float lr) { cfg_.lr = lr; }
    float lr() const { return cfg_.lr; }
    int64_t step_count() const { return state_.step; }

    const std::vector<Tensor>& params() const { return params_; }
    AdamState& state() { return state_; }
    const AdamState& state() const { return state_; }

private:
    std::vector<Tensor> params_;
    AdamConfig cfg_;
    AdamState state_;
};

/// Learning-rate schedule over epochs. Cosine starts exactly at base_lr;
/// step-decay multiplies by decay_factor at each milestone epoch.
struct LrSchedule {
    enum class Kind { Cosine, StepDecay };

    Kind kind = Kind::Cosine;
    float base_lr = 3.5e-4f;
    int total_epochs = 1;
    std::vector<int> milestones;
    float decay_factor = 0.1f;

    float at(int epoch) const;
};

} // namespace sci
