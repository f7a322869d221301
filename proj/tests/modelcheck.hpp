#pragma once

// Finite-difference spot checks against live model parameters (the gradcheck
// harness owns its leaves; this one perturbs parameter stores in place).

#include "insertnet/autograd.hpp"
#include "insertnet/netblocks.hpp"

#include <cmath>
#include <functional>
#include <vector>

namespace modelcheck {

struct Pick {
    insertnet::ag::Var param;
    std::vector<std::size_t> coords;
};

struct Result {
    double max_rel_err = 0.0;
    double max_abs_grad = 0.0;
};

inline Result fd_vs_autograd(const std::vector<Pick>& picks,
                             const std::function<insertnet::ag::Var()>& build, double h = 1e-5) {
    insertnet::ag::Var loss = build();
    insertnet::ag::backward(loss);
    auto eval = [&]() {
        insertnet::ag::NoGradGuard ng;
        return build()->scalar();
    };
    Result r;
    for (const auto& pick : picks) {
        for (std::size_t i : pick.coords) {
            const double keep = pick.param->value[i];
            pick.param->value[i] = keep + h;
            const double fp = eval();
            pick.param->value[i] = keep - h;
            const double fm = eval();
            pick.param->value[i] = keep;
            const double num = (fp - fm) / (2.0 * h);
            const double ana = pick.param->grad_ready() ? pick.param->grad[i] : 0.0;
            const double denom = std::max({std::abs(num), std::abs(ana), 1e-6});
            r.max_rel_err = std::max(r.max_rel_err, std::abs(num - ana) / denom);
            r.max_abs_grad = std::max(r.max_abs_grad, std::abs(ana));
        }
    }
    return r;
}

inline void zero_store(insertnet::nets::ParameterStore& ps) {
    for (auto& [name, var] : ps.arrays())
        std::fill(var->value.data(), var->value.data() + var->value.numel(), 0.0);
}

} // namespace modelcheck
