#include "csd/numerics/adam.hpp"

#include <cmath>

namespace csd::num {

void adam_step(std::vector<Tensor*> params, const std::vector<const Tensor*>& grads, AdamState& state)
{
    if (params.size() != grads.size())
        throw ContractViolation("adam_step: " + std::to_string(params.size()) + " params but " +
                                std::to_string(grads.size()) + " gradients");
    if (state.first_moment.empty()) {
        for (const Tensor* p : params) {
            state.first_moment.emplace_back(p->shape());
            state.second_moment.emplace_back(p->shape());
        }
    }
    if (state.first_moment.size() != params.size())
        throw ContractViolation("adam_step: optimizer state tracks a different parameter set");
    for (std::size_t i = 0; i < params.size(); ++i)
        if (params[i]->shape() != grads[i]->shape() || params[i]->shape() != state.first_moment[i].shape())
            throw ContractViolation("adam_step: shape mismatch for parameter " + std::to_string(i) + " " +
                                    shape_string(params[i]->shape()) + " vs " + shape_string(grads[i]->shape()));

    state.step += 1;
    const auto& c = state.config;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(c.beta1, t);
    const double correction2 = 1.0 - std::pow(c.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = *params[i];
        const auto& g = *grads[i];
        auto& m = state.first_moment[i];
        auto& v = state.second_moment[i];
        for (std::size_t j = 0; j < p.size(); ++j) {
            const double gj = g[j];
            const double mj = c.beta1 * m[j] + (1.0 - c.beta1) * gj;
            const double vj = c.beta2 * v[j] + (1.0 - c.beta2) * gj * gj;
            m[j] = static_cast<float>(mj);
            v[j] = static_cast<float>(vj);
            const double update = c.learning_rate * (mj / correction1) / (std::sqrt(vj / correction2) + c.epsilon);
            p[j] = static_cast<float>(p[j] - update);
        }
    }
}

void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, AdamState& state)
{
    std::vector<Tensor*> ps;
    std::vector<const Tensor*> gs;
    for (auto& p : params) ps.push_back(&p);
    for (const auto& g : grads) gs.push_back(&g);
    adam_step(std::move(ps), gs, state);
}

}  // namespace csd::num
