#include "adviris/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

namespace adviris::nn {

namespace {

double evaluate(const ScalarBuilder& build, const std::vector<Tensor>& params) {
    Graph g;
    std::vector<Var> leaves;
    leaves.reserve(params.size());
    for (const auto& p : params) leaves.push_back(g.leaf(p, /*requires_grad=*/false, "probe"));
    const Var loss = build(g, leaves);
    if (g.value(loss).numel() != 1) throw std::invalid_argument("finite_diff_check: builder must return a scalar");
    return g.value(loss).v[0];
}

}  // namespace

GradCheckResult finite_diff_check(const ScalarBuilder& build, const std::vector<Tensor>& params, double h) {
    if (h <= 0.0) throw std::invalid_argument("finite_diff_check: h must be positive");

    // analytic pass
    Graph g;
    std::vector<Var> leaves;
    leaves.reserve(params.size());
    for (const auto& p : params) leaves.push_back(g.leaf(p, /*requires_grad=*/true, "param"));
    const Var loss = build(g, leaves);
    g.backward(loss);
    std::vector<Tensor> analytic;
    analytic.reserve(params.size());
    for (Var v : leaves) analytic.push_back(g.grad(v));

    GradCheckResult res;
    std::vector<Tensor> probe = params;
    for (std::size_t i = 0; i < params.size(); ++i) {
        for (std::size_t j = 0; j < params[i].v.size(); ++j) {
            const double orig = probe[i].v[j];
            probe[i].v[j] = orig + h;
            const double fp = evaluate(build, probe);
            probe[i].v[j] = orig - h;
            const double fm = evaluate(build, probe);
            probe[i].v[j] = orig;
            if (!std::isfinite(fp) || !std::isfinite(fm))
                throw std::runtime_error("finite_diff_check: non-finite function value at param " +
                                         std::to_string(i) + " coord " + std::to_string(j));
            const double numeric = (fp - fm) / (2.0 * h);
            const double a = analytic[i].v[j];
            const double rel = std::abs(a - numeric) / std::max(1.0, std::abs(a));
            if (rel > res.max_rel_err) {
                res.max_rel_err = rel;
                res.worst_param = static_cast<int>(i);
                res.worst_coord = static_cast<std::int64_t>(j);
            }
        }
    }
    return res;
}

}  // namespace adviris::nn
