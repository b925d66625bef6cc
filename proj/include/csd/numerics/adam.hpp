#pragma once

#include <cstdint>
#include <vector>

#include "csd/numerics/tensor.hpp"

namespace csd::num {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// First/second moment accumulators, one per parameter tensor.
struct AdamState {
    AdamConfig config;
    std::vector<Tensor> first_moment;
    std::vector<Tensor> second_moment;
    std::int64_t step = 0;

    AdamState() = default;
    explicit AdamState(AdamConfig cfg) : config(cfg) {}
};

// Bias-corrected Adam update in place. Accumulators are created on the first
// call; afterwards every grads[i] must match params[i] in shape.
void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, AdamState& state);
void adam_step(std::vector<Tensor*> params, const std::vector<const Tensor*>& grads, AdamState& state);

}  // namespace csd::num
