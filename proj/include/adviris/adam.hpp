#pragma once

#include <string>
#include <vector>

#include "adviris/tensor.hpp"

namespace adviris::nn {

struct NamedParam {
    std::string name;
    Tensor value;
};

// ADAM with bias correction.  m/v buffers are allocated lazily to match the
// parameter shapes on first step.
struct AdamState {
    std::int64_t step_count = 0;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::vector<Tensor> m;
    std::vector<Tensor> v;
};

// One update over the full parameter list.  grads[i] pairs with params[i];
// a non-finite gradient rejects the whole step, naming the parameter.
void adam_step(std::vector<NamedParam>& params, const std::vector<Tensor>& grads, AdamState& state);

}  // namespace adviris::nn
