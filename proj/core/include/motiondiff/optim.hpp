#pragma once

#include <cstdint>
#include <vector>

#include "motiondiff/autograd.hpp"

namespace motiondiff {

struct AdamConfig {
    double lr = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    void validate() const;
};

struct AdamState {
    std::vector<Matrix> m;
    std::vector<Matrix> v;
    std::int64_t step = 0;

    static AdamState zeros_like(const ParameterSet& params);
    bool matches(const ParameterSet& params) const;
};

// One bias-corrected Adam step using each parameter's accumulated grad.
void adam_update(ParameterSet& params, AdamState& state, const AdamConfig& config);

// shadow <- m * shadow + (1 - m) * live
void ema_update(ParameterSet& shadow, const ParameterSet& live, double m);

// Rescales gradients so their global L2 norm is at most max_norm. Returns the
// norm before clipping.
double clip_grad_norm(ParameterSet& params, double max_norm);

}  // namespace motiondiff
