#include "motiondiff/layers.hpp"

#include <cmath>

namespace motiondiff {

namespace {

Matrix uniform_init(Eigen::Index rows, Eigen::Index cols, double bound, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
    return m;
}

}  // namespace

Linear Linear::create(ParameterSet& params, const std::string& name, int in, int out, std::mt19937_64& rng,
                      bool with_bias) {
    Linear l;
    l.in = in;
    l.out = out;
    l.has_bias = with_bias;
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    l.weight = params.add(name + ".weight", uniform_init(in, out, bound, rng));
    if (with_bias) l.bias = params.add(name + ".bias", uniform_init(1, out, bound, rng));
    return l;
}

Var Linear::operator()(Tape& t, ParameterSet& params, Var x) const {
    Var y = ag::matmul(t, x, t.param(params[weight]));
    if (has_bias) y = ag::add_bias(t, y, t.param(params[bias]));
    return y;
}

Conv1d Conv1d::create(ParameterSet& params, const std::string& name, int in, int out, int kernel, int stride,
                      std::mt19937_64& rng) {
    Conv1d c;
    c.in = in;
    c.out = out;
    c.kernel = kernel;
    c.stride = stride;
    c.pad = kernel / 2;
    const double bound = 1.0 / std::sqrt(static_cast<double>(in * kernel));
    c.weight = params.add(name + ".weight", uniform_init(static_cast<Eigen::Index>(kernel) * in, out, bound, rng));
    c.bias = params.add(name + ".bias", uniform_init(1, out, bound, rng));
    return c;
}

Var Conv1d::operator()(Tape& t, ParameterSet& params, Var x, int frames) const {
    Var cols = kernel == 1 && stride == 1 ? x : ag::im2col(t, x, frames, kernel, stride, pad);
    Var y = ag::matmul(t, cols, t.param(params[weight]));
    return ag::add_bias(t, y, t.param(params[bias]));
}

SelfAttention SelfAttention::create(ParameterSet& params, const std::string& name, int channels,
                                    std::mt19937_64& rng) {
    SelfAttention a;
    a.query = Linear::create(params, name + ".query", channels, channels, rng);
    a.key = Linear::create(params, name + ".key", channels, channels, rng);
    a.value = Linear::create(params, name + ".value", channels, channels, rng);
    a.proj = Linear::create(params, name + ".proj", channels, channels, rng);
    return a;
}

Var SelfAttention::operator()(Tape& t, ParameterSet& params, Var x, int frames) const {
    Var q = query(t, params, x);
    Var k = key(t, params, x);
    Var v = value(t, params, x);
    Var h = ag::attention(t, q, k, v, frames);
    return ag::add(t, x, proj(t, params, h));
}

}  // namespace motiondiff
