#pragma once

#include <random>
#include <string>

#include "motiondiff/autograd.hpp"

namespace motiondiff {

// Layers hold indices into a ParameterSet owned by the enclosing model, so
// models stay copyable with value semantics.

struct Linear {
    std::size_t weight = 0;  // in x out
    std::size_t bias = 0;    // 1 x out
    int in = 0;
    int out = 0;
    bool has_bias = true;

    static Linear create(ParameterSet& params, const std::string& name, int in, int out, std::mt19937_64& rng,
                         bool with_bias = true);
    Var operator()(Tape& t, ParameterSet& params, Var x) const;
};

// 1-D convolution over time for (batch*frames) x channels activations.
struct Conv1d {
    std::size_t weight = 0;  // (kernel*in) x out
    std::size_t bias = 0;
    int in = 0;
    int out = 0;
    int kernel = 3;
    int stride = 1;
    int pad = 1;

    static Conv1d create(ParameterSet& params, const std::string& name, int in, int out, int kernel, int stride,
                         std::mt19937_64& rng);
    int out_frames(int frames) const { return conv_out_frames(frames, kernel, stride, pad); }
    Var operator()(Tape& t, ParameterSet& params, Var x, int frames) const;
};

// Single-head self-attention with a residual connection.
struct SelfAttention {
    Linear query, key, value, proj;

    static SelfAttention create(ParameterSet& params, const std::string& name, int channels, std::mt19937_64& rng);
    Var operator()(Tape& t, ParameterSet& params, Var x, int frames) const;
};

}  // namespace motiondiff
