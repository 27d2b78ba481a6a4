#include <doctest.h>

#include <cmath>
#include <random>
#include <set>
#include <vector>

#include "../oracles.hpp"
#include "motiondiff/error.hpp"
#include "motiondiff/model.hpp"
#include "motiondiff/motion.hpp"

using namespace motiondiff;
using oracle::random_matrix;

namespace {

DenoiserConfig tiny_denoiser() {
    DenoiserConfig c;
    c.rot_channels = 6;
    c.feet = 2;
    c.contents = 2;
    c.styles = 3;
    c.steps = 10;
    c.width = 8;
    c.levels = 2;
    c.attention = true;
    return c;
}

struct Heads {
    Matrix eps, root, foot;
};

Heads random_heads(int rows, int rot, int feet, std::mt19937_64& rng) {
    return {random_matrix(rows, rot, rng), random_matrix(rows, kRootChannels, rng), random_matrix(rows, feet, rng)};
}

Var project_heads(Tape& t, const DenoiserOutput& out, const Heads& h) {
    return ag::add(t, ag::add(t, oracle::project(t, out.eps_hat, h.eps), oracle::project(t, out.root_hat, h.root)),
                   oracle::project(t, out.foot_logits, h.foot));
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("one-hot rows have a single unit entry") {
    const std::vector<int> ids = {2, 0, 5};
    const Matrix m = one_hot(ids, 6);
    for (int i = 0; i < 3; ++i) {
        CHECK(m.row(i).sum() == 1.0);
        CHECK(m(i, ids[static_cast<std::size_t>(i)]) == 1.0);
    }
    const std::vector<int> bad = {6};
    CHECK_THROWS_AS(one_hot(bad, 6), UsageError);
    const std::vector<int> neg = {-1};
    CHECK_THROWS_AS(one_hot(neg, 6), UsageError);
}

TEST_CASE("sinusoidal embedding matches the closed form and is injective on 1..1000") {
    const int dim = 16;
    std::vector<int> steps(1000);
    for (int i = 0; i < 1000; ++i) steps[static_cast<std::size_t>(i)] = i + 1;
    const Matrix e = sinusoidal_embedding(steps, dim);
    CHECK(e(41, 3) == doctest::Approx(std::sin(42.0 / std::pow(10000.0, 6.0 / 16.0))));
    CHECK(e(41, 8 + 3) == doctest::Approx(std::cos(42.0 / std::pow(10000.0, 6.0 / 16.0))));
    double closest = 1e9;
    for (int i = 0; i < 1000; ++i)
        for (int j = i + 1; j < 1000; ++j) closest = std::min(closest, (e.row(i) - e.row(j)).norm());
    CHECK(closest > 1e-3);
}

TEST_CASE("denoiser shapes, determinism and rebuild stability") {
    DenoiserConfig cfg = tiny_denoiser();
    cfg.contents = 6;
    cfg.styles = 8;
    const Denoiser a(cfg, 5);
    const Denoiser b(cfg, 5);
    REQUIRE(a.params().size() == b.params().size());
    for (std::size_t i = 0; i < a.params().size(); ++i) CHECK(a.params()[i].name == b.params()[i].name);
    CHECK(a.params().fingerprint() == b.params().fingerprint());
    CHECK(Denoiser(cfg, 6).params().fingerprint() != a.params().fingerprint());

    std::mt19937_64 rng(1);
    const Matrix x = random_matrix(2 * kClipFrames, 6, rng);
    const std::vector<int> t = {1, 10}, c = {5, 0}, s = {7, 2};
    const auto p1 = a.denoise(x, t, c, s, kClipFrames);
    const auto p2 = a.denoise(x, t, c, s, kClipFrames);
    CHECK(p1.eps_hat.rows() == 2 * kClipFrames);
    CHECK(p1.eps_hat.cols() == 6);
    CHECK(p1.root_hat.cols() == 4);
    CHECK(p1.foot_logits.cols() == 2);
    CHECK(p1.eps_hat == p2.eps_hat);
    CHECK(p1.root_hat == p2.root_hat);
    CHECK(p1.foot_logits == p2.foot_logits);

    Tape tape(false);
    const auto out = a.forward(tape, tape.constant_ref(x), t, c, s, kClipFrames);
    CHECK((tape.value(out.eps_hat) - p1.eps_hat).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("denoiser passes central finite differences on parameters and input") {
    std::mt19937_64 rng(2);
    Denoiser net(tiny_denoiser(), 3);
    const int frames = 8;
    const Matrix x = random_matrix(2 * frames, 6, rng);
    const std::vector<int> t = {3, 9}, c = {1, 0}, s = {2, 0};
    const Heads h = random_heads(2 * frames, 6, 2, rng);
    auto loss = [&](Tape& tp, Var xv) { return project_heads(tp, net.forward(tp, xv, t, c, s, frames), h); };
    CHECK(oracle::parameter_gradient_error(net.params(), [&](Tape& tp) { return loss(tp, tp.constant_ref(x)); }, rng, 12) < 1e-4);
    CHECK(oracle::input_gradient_error(loss, x) < 1e-4);
}

TEST_CASE("denoiser without attention and with one level also passes") {
    std::mt19937_64 rng(12);
    DenoiserConfig cfg = tiny_denoiser();
    cfg.levels = 1;
    cfg.attention = false;
    Denoiser net(cfg, 4);
    const int frames = 4;
    const Matrix x = random_matrix(frames, 6, rng);
    const std::vector<int> t = {5}, c = {1}, s = {1};
    const Heads h = random_heads(frames, 6, 2, rng);
    CHECK(oracle::parameter_gradient_error(net.params(), [&](Tape& tp) {
              return project_heads(tp, net.forward(tp, tp.constant_ref(x), t, c, s, frames), h);
          }, rng, 12) < 1e-4);
}

TEST_CASE("conditioning is wired in: style, content and step change the output") {
    std::mt19937_64 rng(3);
    const Denoiser net(tiny_denoiser(), 7);
    const Matrix x = random_matrix(kClipFrames, 6, rng);
    const std::vector<int> t = {4}, c = {0}, s = {0}, s2 = {2}, c2 = {1}, t2 = {5};
    const auto base = net.denoise(x, t, c, s, kClipFrames);
    CHECK((net.denoise(x, t, c, s2, kClipFrames).eps_hat - base.eps_hat).cwiseAbs().maxCoeff() > 0.0);
    CHECK((net.denoise(x, t, c2, s, kClipFrames).eps_hat - base.eps_hat).cwiseAbs().maxCoeff() > 0.0);
    CHECK((net.denoise(x, t2, c, s, kClipFrames).eps_hat - base.eps_hat).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("clips in a batch do not interact") {
    std::mt19937_64 rng(4);
    const Denoiser net(tiny_denoiser(), 8);
    Matrix x = random_matrix(2 * kClipFrames, 6, rng);
    const std::vector<int> t = {2, 7}, c = {0, 1}, s = {1, 2};
    const auto a = net.denoise(x, t, c, s, kClipFrames);
    x.bottomRows(kClipFrames) = random_matrix(kClipFrames, 6, rng);
    const auto b = net.denoise(x, t, c, s, kClipFrames);
    CHECK((a.eps_hat.topRows(kClipFrames) - b.eps_hat.topRows(kClipFrames)).cwiseAbs().maxCoeff() < 1e-12);
    const std::vector<int> t1 = {2}, c1 = {0}, s1 = {1};
    const auto single = net.denoise(x.topRows(kClipFrames), t1, c1, s1, kClipFrames);
    CHECK((single.eps_hat - a.eps_hat.topRows(kClipFrames)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("outputs stay finite over 1000 random draws") {
    std::mt19937_64 rng(5);
    const Denoiser net(tiny_denoiser(), 9);
    std::uniform_int_distribution<int> step(1, 10), content(0, 1), style(0, 2);
    std::uniform_real_distribution<double> scale(0.1, 10.0);
    bool finite = true;
    for (int i = 0; i < 1000; ++i) {
        const Matrix x = random_matrix(8, 6, rng, scale(rng));
        const std::vector<int> t = {step(rng)}, c = {content(rng)}, s = {style(rng)};
        const auto p = net.denoise(x, t, c, s, 8);
        finite = finite && p.eps_hat.allFinite() && p.root_hat.allFinite() && p.foot_logits.allFinite();
    }
    CHECK(finite);
}

TEST_CASE("denoiser rejects malformed input") {
    const Denoiser net(tiny_denoiser(), 1);
    const std::vector<int> t = {1}, c = {0}, s = {0};
    CHECK_THROWS_AS(net.denoise(Matrix::Zero(8, 5), t, c, s, 8), UsageError);
    CHECK_THROWS_AS(net.denoise(Matrix::Zero(6, 6), t, c, s, 6), UsageError);
    const std::vector<int> bad_t = {11}, bad_c = {2}, bad_s = {3};
    CHECK_THROWS_AS(net.denoise(Matrix::Zero(8, 6), bad_t, c, s, 8), UsageError);
    CHECK_THROWS_AS(net.denoise(Matrix::Zero(8, 6), t, bad_c, s, 8), UsageError);
    CHECK_THROWS_AS(net.denoise(Matrix::Zero(8, 6), t, c, bad_s, 8), UsageError);
    DenoiserConfig odd = tiny_denoiser();
    odd.width = 7;
    CHECK_THROWS_AS(Denoiser(odd, 1), UsageError);
}

TEST_CASE("discriminator: one score per clip, deterministic, finite differences") {
    std::mt19937_64 rng(6);
    Discriminator d({6, 2, 8}, 11);
    const int frames = 8;
    const Matrix x = random_matrix(3 * frames, 6, rng);
    const Matrix r = random_matrix(3 * frames, 4, rng);
    const Matrix f = random_matrix(3 * frames, 2, rng);
    Tape t(false);
    const Matrix score = t.value(d.forward(t, t.constant_ref(x), t.constant_ref(r), t.constant_ref(f), frames));
    CHECK(score.rows() == 3);
    CHECK(score.cols() == 1);
    Tape t2(false);
    CHECK(t2.value(d.forward(t2, t2.constant_ref(x), t2.constant_ref(r), t2.constant_ref(f), frames)) == score);

    const Matrix w = random_matrix(3, 1, rng);
    CHECK(oracle::parameter_gradient_error(d.params(), [&](Tape& tp) {
              return oracle::project(tp, d.forward(tp, tp.constant_ref(x), tp.constant_ref(r), tp.constant_ref(f), frames), w);
          }, rng, 20) < 1e-4);
    CHECK(oracle::input_gradient_error([&](Tape& tp, Var v) {
              return oracle::project(tp, d.forward(tp, v, tp.constant_ref(r), tp.constant_ref(f), frames), w);
          }, x) < 1e-4);
    CHECK(oracle::input_gradient_error([&](Tape& tp, Var v) {
              return oracle::project(tp, d.forward(tp, tp.constant_ref(x), v, tp.constant_ref(f), frames), w);
          }, r) < 1e-4);
    CHECK(oracle::input_gradient_error([&](Tape& tp, Var v) {
              return oracle::project(tp, d.forward(tp, tp.constant_ref(x), tp.constant_ref(r), v, frames), w);
          }, f) < 1e-4);
    CHECK_THROWS_AS(d.forward(t, t.constant(Matrix::Zero(8, 5)), t.constant_ref(r), t.constant_ref(f), frames), UsageError);
}

TEST_CASE("classifier passes finite differences and exposes its features") {
    std::mt19937_64 rng(7);
    Classifier cls({6, 3, 8}, 13);
    const int frames = 8;
    const Matrix x = random_matrix(4 * frames, 6, rng);
    const std::vector<int> labels = {0, 2, 1, 2};
    const Matrix w = random_matrix(4, 8, rng);
    auto loss = [&](Tape& tp, Var v) {
        const auto out = cls.forward(tp, v, frames);
        return ag::add(tp, ag::softmax_cross_entropy(tp, out.logits, labels), oracle::project(tp, out.features, w));
    };
    CHECK(oracle::parameter_gradient_error(cls.params(), [&](Tape& tp) { return loss(tp, tp.constant_ref(x)); }, rng, 20) < 1e-4);
    CHECK(oracle::input_gradient_error(loss, x) < 1e-4);
    const Matrix feats = cls.features(x, frames);
    CHECK(feats.rows() == 4);
    CHECK(feats.cols() == 8);
    CHECK(cls.logits(x, frames).cols() == 3);
}

}
