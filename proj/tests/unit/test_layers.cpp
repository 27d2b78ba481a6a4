#include <doctest.h>

#include <random>

#include "../oracles.hpp"
#include "motiondiff/layers.hpp"

using namespace motiondiff;
using oracle::random_matrix;

TEST_SUITE("layers") {

TEST_CASE("linear layer equals x W + b and passes finite differences") {
    std::mt19937_64 rng(1);
    ParameterSet ps;
    const Linear lin = Linear::create(ps, "lin", 4, 3, rng);
    ps[lin.bias].value = random_matrix(1, 3, rng);
    const Matrix x = random_matrix(5, 4, rng);
    Tape t(false);
    const Matrix y = t.value(lin(t, ps, t.constant_ref(x)));
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 3; ++j) {
            double s = ps[lin.bias].value(0, j);
            for (int k = 0; k < 4; ++k) s += x(i, k) * ps[lin.weight].value(k, j);
            CHECK(y(i, j) == doctest::Approx(s).epsilon(1e-13));
        }
    const Matrix w = random_matrix(5, 3, rng);
    CHECK(oracle::parameter_gradient_error(ps, [&](Tape& tp) { return oracle::project(tp, lin(tp, ps, tp.constant_ref(x)), w); }, rng) < 1e-4);
    CHECK(oracle::input_gradient_error([&](Tape& tp, Var v) { return oracle::project(tp, lin(tp, ps, v), w); }, x) < 1e-4);
}

TEST_CASE("conv1d matches a direct convolution loop") {
    std::mt19937_64 rng(2);
    const int frames = 8, in = 3, out = 2;
    for (int stride : {1, 2}) {
        ParameterSet ps;
        const Conv1d conv = Conv1d::create(ps, "c", in, out, 3, stride, rng);
        ps[conv.bias].value = random_matrix(1, out, rng);
        const Matrix x = random_matrix(2 * frames, in, rng);
        Tape t(false);
        const Matrix y = t.value(conv(t, ps, t.constant_ref(x), frames));
        const int of = conv.out_frames(frames);
        REQUIRE(y.rows() == 2 * of);
        const Matrix& W = ps[conv.weight].value;
        for (int c = 0; c < 2; ++c)
            for (int o = 0; o < of; ++o)
                for (int j = 0; j < out; ++j) {
                    double s = ps[conv.bias].value(0, j);
                    for (int k = 0; k < 3; ++k) {
                        const int src = o * stride + k - 1;
                        if (src < 0 || src >= frames) continue;
                        for (int ch = 0; ch < in; ++ch) s += x(c * frames + src, ch) * W(k * in + ch, j);
                    }
                    CHECK(y(c * of + o, j) == doctest::Approx(s).epsilon(1e-12));
                }
    }
    CHECK(conv_out_frames(32, 3, 2, 1) == 16);
    CHECK(conv_out_frames(32, 3, 1, 1) == 32);
}

TEST_CASE("conv1d and self-attention pass finite differences") {
    std::mt19937_64 rng(3);
    const int frames = 6;
    ParameterSet ps;
    const Conv1d conv = Conv1d::create(ps, "c", 3, 4, 3, 2, rng);
    const SelfAttention attn = SelfAttention::create(ps, "a", 4, rng);
    const Matrix x = random_matrix(2 * frames, 3, rng);
    const int of = conv.out_frames(frames);
    const Matrix w = random_matrix(2 * of, 4, rng);
    auto net = [&](Tape& t, Var v) { return oracle::project(t, attn(t, ps, conv(t, ps, v, frames), of), w); };
    CHECK(oracle::parameter_gradient_error(ps, [&](Tape& t) { return net(t, t.constant_ref(x)); }, rng, 40) < 1e-4);
    CHECK(oracle::input_gradient_error(net, x) < 1e-4);
}

TEST_CASE("self-attention keeps clips independent") {
    std::mt19937_64 rng(4);
    const int frames = 4;
    ParameterSet ps;
    const SelfAttention attn = SelfAttention::create(ps, "a", 3, rng);
    Matrix x = random_matrix(2 * frames, 3, rng);
    Tape t1(false);
    const Matrix y1 = t1.value(attn(t1, ps, t1.constant_ref(x), frames));
    x.bottomRows(frames) = random_matrix(frames, 3, rng);
    Tape t2(false);
    const Matrix y2 = t2.value(attn(t2, ps, t2.constant_ref(x), frames));
    CHECK((y1.topRows(frames) - y2.topRows(frames)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((y1.bottomRows(frames) - y2.bottomRows(frames)).cwiseAbs().maxCoeff() > 0.0);
}

}
