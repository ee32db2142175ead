#include "adviris/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace adviris::nn {

void adam_step(std::vector<NamedParam>& params, const std::vector<Tensor>& grads, AdamState& state) {
    if (params.size() != grads.size())
        throw std::invalid_argument("adam_step: " + std::to_string(params.size()) + " params vs " +
                                    std::to_string(grads.size()) + " grads");
    if (state.m.empty()) {
        for (const auto& p : params) {
            state.m.emplace_back(p.value.shape);
            state.v.emplace_back(p.value.shape);
        }
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!same_shape(params[i].value, grads[i]))
            throw std::invalid_argument("adam_step: gradient shape " + shape_str(grads[i].shape) +
                                        " does not match parameter '" + params[i].name + "' " +
                                        shape_str(params[i].value.shape));
        if (!grads[i].all_finite())
            throw std::runtime_error("adam_step: non-finite gradient for parameter '" + params[i].name + "'");
    }

    state.step_count += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i].value.v;
        const auto& gr = grads[i].v;
        auto& m = state.m[i].v;
        auto& v = state.v[i].v;
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * gr[j];
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * gr[j] * gr[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p[j] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

}  // namespace adviris::nn
