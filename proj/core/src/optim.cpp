#include "motiondiff/optim.hpp"

#include <cmath>

#include "motiondiff/error.hpp"

namespace motiondiff {

void AdamConfig::validate() const {
    if (!(lr > 0.0)) throw UsageError("learning rate must be positive");
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) throw UsageError("Adam betas must lie in (0, 1)");
    if (!(eps > 0.0)) throw UsageError("Adam epsilon must be positive");
}

AdamState AdamState::zeros_like(const ParameterSet& params) {
    AdamState s;
    for (const Parameter& p : params) {
        s.m.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
        s.v.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    }
    return s;
}

bool AdamState::matches(const ParameterSet& params) const {
    if (m.size() != params.size() || v.size() != params.size()) return false;
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (m[i].rows() != params[i].value.rows() || m[i].cols() != params[i].value.cols()) return false;
        if (v[i].rows() != params[i].value.rows() || v[i].cols() != params[i].value.cols()) return false;
    }
    return true;
}

void adam_update(ParameterSet& params, AdamState& state, const AdamConfig& c) {
    if (!state.matches(params)) throw UsageError("optimizer state does not match parameter layout");
    ++state.step;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Parameter& p = params[i];
        if (p.grad.size() == 0) continue;
        state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * p.grad;
        state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * p.grad.cwiseAbs2();
        p.value.array() -= c.lr * (state.m[i].array() / bc1) / ((state.v[i].array() / bc2).sqrt() + c.eps);
    }
}

void ema_update(ParameterSet& shadow, const ParameterSet& live, double m) {
    if (!shadow.same_layout(live)) throw UsageError("EMA shadow does not match parameter layout");
    if (!(m >= 0.0 && m <= 1.0)) throw UsageError("EMA decay must lie in [0, 1]");
    for (std::size_t i = 0; i < live.size(); ++i) {
        shadow[i].value = m * shadow[i].value + (1.0 - m) * live[i].value;
    }
}

double clip_grad_norm(ParameterSet& params, double max_norm) {
    const double norm = params.grad_norm();
    if (max_norm > 0.0 && norm > max_norm) params.scale_grad(max_norm / norm);
    return norm;
}

}  // namespace motiondiff
