#pragma once

#include <functional>
#include <vector>

#include "adviris/graph.hpp"

namespace adviris::nn {

// Builds a scalar loss from parameter leaves.  Called once with
// requires_grad leaves for the analytic pass and repeatedly with frozen
// perturbed values for the probing passes.
using ScalarBuilder = std::function<Var(Graph&, const std::vector<Var>&)>;

struct GradCheckResult {
    double max_rel_err = 0.0;
    int worst_param = -1;
    std::int64_t worst_coord = -1;
};

// Central-difference check of reverse-mode gradients:
//   max over coordinates of |analytic - (f(x+h)-f(x-h))/2h| / max(1, |analytic|).
// Throws if a probed function value is non-finite, reporting the coordinate.
GradCheckResult finite_diff_check(const ScalarBuilder& build, const std::vector<Tensor>& params, double h);

}  // namespace adviris::nn
