#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "../oracles.hpp"
#include "motiondiff/error.hpp"
#include "motiondiff/schedule.hpp"

using namespace motiondiff;

namespace {

// Desk-style endpoints for short chains, full-scale endpoints for T = 1000.
NoiseSchedule schedule_for(int steps) {
    return steps >= 1000 ? make_schedule(steps, 1e-4, 0.02) : make_schedule(steps, 5e-4, 0.1);
}

const int kChains[] = {1, 10, 200, 1000};

}  // namespace

TEST_SUITE("schedule") {

TEST_CASE("alpha_bar equals the running product of 1 - sigma") {
    for (int steps : kChains) {
        const NoiseSchedule s = schedule_for(steps);
        const auto expected = oracle::alpha_bar_product(s.sigmas());
        for (int t = 1; t <= steps; ++t) {
            CHECK(s.alpha_bar(t) == doctest::Approx(expected[static_cast<std::size_t>(t - 1)]).epsilon(1e-14));
            CHECK(s.sqrt_alpha_bar(t) * s.sqrt_alpha_bar(t) == doctest::Approx(s.alpha_bar(t)).epsilon(1e-14));
            CHECK(s.sqrt_one_minus_alpha_bar(t) * s.sqrt_one_minus_alpha_bar(t) ==
                  doctest::Approx(1.0 - s.alpha_bar(t)).epsilon(1e-12));
        }
    }
}

TEST_CASE("hand-evaluated schedule values") {
    CHECK(make_schedule(1, 0.5, 0.5).alpha_bar(1) == doctest::Approx(0.5));
    CHECK(make_schedule(3, 0.1, 0.1).alpha_bar(3) == doctest::Approx(0.729));
}

TEST_CASE("hand-evaluated forward, reconstruction and reverse steps") {
    const NoiseSchedule s64 = NoiseSchedule::from_sigmas({0.36});  // abar_1 = 0.64
    const Matrix one = Matrix::Constant(1, 1, 1.0);
    const Matrix half = Matrix::Constant(1, 1, 0.5);
    CHECK(q_sample(one, 1, half, s64)(0, 0) == doctest::Approx(1.1));
    CHECK(reconstruct_x0(Matrix::Constant(1, 1, 1.1), 1, half, s64)(0, 0) == doctest::Approx(1.0));

    const Matrix zero = Matrix::Zero(1, 1);
    const Matrix e = Matrix::Constant(1, 1, 0.6);
    // sigma_2 = 0.19, abar_2 = 0.64: (1 - 0.19 / 0.6 * 0.6) / 0.9 = 0.9
    const NoiseSchedule s = NoiseSchedule::from_sigmas({0.17 / 0.81, 0.19});
    REQUIRE(s.alpha_bar(2) == doctest::Approx(0.64));
    CHECK(reverse_step(one, 2, e, zero, s)(0, 0) == doctest::Approx(0.9));
    CHECK(reverse_step(one, 2, zero, zero, s)(0, 0) == doctest::Approx(1.0 / 0.9));
    // sigma_2 = 0.19, abar_2 = 0.36: sqrt(1 - abar) = 0.8, (1 - 0.19 / 0.8 * 0.6) / 0.9
    const NoiseSchedule s36 = NoiseSchedule::from_sigmas({5.0 / 9.0, 0.19});
    REQUIRE(s36.alpha_bar(2) == doctest::Approx(0.36));
    CHECK(reverse_step(one, 2, e, zero, s36)(0, 0) == doctest::Approx((1.0 - 0.1425) / 0.9));
}

TEST_CASE("reverse_step is linear in each argument") {
    std::mt19937_64 rng(21);
    const NoiseSchedule s = make_schedule(10, 5e-4, 0.1);
    const Matrix u = oracle::random_matrix(3, 4, rng);
    const Matrix zero = Matrix::Zero(3, 4);
    for (double a : {-1.7, 0.3, 2.5}) {
        CHECK((reverse_step(a * u, 5, zero, zero, s) - a * reverse_step(u, 5, zero, zero, s)).norm() < 1e-12);
        CHECK((reverse_step(zero, 5, a * u, zero, s) - a * reverse_step(zero, 5, u, zero, s)).norm() < 1e-12);
        CHECK((reverse_step(zero, 5, zero, a * u, s) - a * reverse_step(zero, 5, zero, u, s)).norm() < 1e-12);
    }
}

TEST_CASE("linear sigma hits both endpoints") {
    const NoiseSchedule s = make_schedule(1000, 1e-4, 0.02);
    CHECK(s.sigma(1) == doctest::Approx(1e-4));
    CHECK(s.sigma(1000) == doctest::Approx(0.02));
    CHECK(s.sigma(500) == doctest::Approx(1e-4 + 499.0 / 999.0 * (0.02 - 1e-4)));
    const NoiseSchedule one = make_schedule(1, 1e-4, 0.02);
    CHECK(one.sigma(1) == doctest::Approx(1e-4));
}

TEST_CASE("monotone: sigma non-decreasing, alpha_bar strictly decreasing in (0, 1)") {
    for (int steps : kChains) {
        const NoiseSchedule s = schedule_for(steps);
        for (int t = 1; t <= steps; ++t) {
            CHECK(s.alpha_bar(t) > 0.0);
            CHECK(s.alpha_bar(t) < 1.0);
            if (t > 1) {
                CHECK(s.sigma(t) >= s.sigma(t - 1));
                CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
            }
        }
    }
}

TEST_CASE("full-scale chain ends near pure noise") {
    const NoiseSchedule s = make_schedule(1000, 1e-4, 0.02);
    CHECK(s.alpha_bar(1000) < 1e-4);
    CHECK(s.alpha_bar(1000) > 1e-5);
}

TEST_CASE("reconstruct_x0 inverts q_sample at every step") {
    std::mt19937_64 rng(7);
    for (int steps : kChains) {
        const NoiseSchedule s = schedule_for(steps);
        const Matrix x0 = oracle::random_matrix(8, 5, rng);
        const Matrix eps = oracle::random_matrix(8, 5, rng);
        for (int t = 1; t <= steps; ++t) {
            const Matrix back = reconstruct_x0(q_sample(x0, t, eps, s), t, eps, s);
            CHECK((back - x0).cwiseAbs().maxCoeff() < 1e-5);
        }
    }
}

TEST_CASE("zero noise gives scaled signal, zero signal gives scaled noise") {
    const NoiseSchedule s = make_schedule(10, 5e-4, 0.1);
    const Matrix x0 = Matrix::Constant(2, 3, 2.0);
    const Matrix zero = Matrix::Zero(2, 3);
    CHECK(q_sample(x0, 4, zero, s)(1, 2) == doctest::Approx(2.0 * std::sqrt(s.alpha_bar(4))));
    CHECK(q_sample(zero, 4, x0, s)(0, 0) == doctest::Approx(2.0 * std::sqrt(1.0 - s.alpha_bar(4))));
}

TEST_CASE("forward marginal matches N(sqrt(abar) x0, 1 - abar)") {
    const int n = 40000;
    std::mt19937_64 rng(11);
    std::normal_distribution<double> normal;
    for (int steps : kChains) {
        const NoiseSchedule s = schedule_for(steps);
        for (int t : {1, (steps + 1) / 2, steps}) {
            const Matrix x0 = Matrix::Constant(n, 1, 0.7);
            Matrix eps(n, 1);
            for (int i = 0; i < n; ++i) eps(i, 0) = normal(rng);
            const Matrix xt = q_sample(x0, t, eps, s);
            const double mean = xt.mean();
            const double var = (xt.array() - mean).square().sum() / (n - 1);
            const double want_mean = std::sqrt(s.alpha_bar(t)) * 0.7;
            const double want_var = 1.0 - s.alpha_bar(t);
            CHECK(std::abs(mean - want_mean) < 3.0 * std::sqrt(want_var / n));
            CHECK(std::abs(var / want_var - 1.0) < 0.05);
        }
    }
}

TEST_CASE("reverse_step matches the closed form") {
    std::mt19937_64 rng(3);
    const NoiseSchedule s = make_schedule(10, 5e-4, 0.1);
    const Matrix xt = oracle::random_matrix(4, 3, rng);
    const Matrix eh = oracle::random_matrix(4, 3, rng);
    const Matrix z = oracle::random_matrix(4, 3, rng);
    for (int t = 2; t <= 10; ++t) {
        const double sg = s.sigmas()[static_cast<std::size_t>(t - 1)];
        double ab = 1.0;
        for (int i = 0; i < t; ++i) ab *= 1.0 - s.sigmas()[static_cast<std::size_t>(i)];
        const Matrix want = (xt - sg / std::sqrt(1.0 - ab) * eh) / std::sqrt(1.0 - sg) + std::sqrt(sg) * z;
        CHECK((reverse_step(xt, t, eh, z, s) - want).cwiseAbs().maxCoeff() < 1e-12);
    }
    const Matrix zero = Matrix::Zero(4, 3);
    const double sg = s.sigma(1);
    const Matrix want1 = (xt - sg / std::sqrt(sg) * eh) / std::sqrt(1.0 - sg);
    CHECK((reverse_step(xt, 1, eh, zero, s) - want1).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("batched forms equal per-clip calls") {
    std::mt19937_64 rng(5);
    const NoiseSchedule s = make_schedule(200, 5e-4, 0.1);
    const int frames = 6;
    const std::vector<int> steps = {1, 57, 200};
    const Matrix x0 = oracle::random_matrix(18, 4, rng);
    const Matrix eps = oracle::random_matrix(18, 4, rng);
    Matrix z = oracle::random_matrix(18, 4, rng);
    z.topRows(frames).setZero();  // clip 0 is at t = 1
    const Matrix qb = q_sample_batch(x0, steps, eps, s, frames);
    const Matrix rb = reverse_step_batch(x0, steps, eps, z, s, frames);
    const auto coef = reconstruction_coefficients(steps, s, frames);
    REQUIRE(coef.x_scale.size() == 18);
    for (int c = 0; c < 3; ++c) {
        const int t = steps[static_cast<std::size_t>(c)];
        const Matrix xc = x0.middleRows(c * frames, frames);
        const Matrix ec = eps.middleRows(c * frames, frames);
        const Matrix zc = z.middleRows(c * frames, frames);
        CHECK((qb.middleRows(c * frames, frames) - q_sample(xc, t, ec, s)).cwiseAbs().maxCoeff() < 1e-14);
        CHECK((rb.middleRows(c * frames, frames) - reverse_step(xc, t, ec, zc, s)).cwiseAbs().maxCoeff() < 1e-12);
        for (int f = 0; f < frames; ++f) {
            const auto r = static_cast<std::size_t>(c * frames + f);
            const Matrix via = coef.x_scale[r] * qb.row(c * frames + f) + coef.eps_scale[r] * eps.row(c * frames + f);
            CHECK((via - x0.row(c * frames + f)).cwiseAbs().maxCoeff() < 1e-10);
        }
    }
}

TEST_CASE("invalid steps and schedules are usage errors") {
    const NoiseSchedule s = make_schedule(10, 5e-4, 0.1);
    const Matrix m = Matrix::Zero(2, 2);
    CHECK_THROWS_AS(s.alpha_bar(0), UsageError);
    CHECK_THROWS_AS(s.alpha_bar(11), UsageError);
    CHECK_THROWS_AS(q_sample(m, 0, m, s), UsageError);
    CHECK_THROWS_AS(q_sample(m, 1, Matrix::Zero(3, 2), s), UsageError);
    CHECK_THROWS_AS(reverse_step(m, 1, m, Matrix::Constant(2, 2, 0.1), s), UsageError);
    CHECK_THROWS_AS(make_schedule(0, 1e-4, 0.02), UsageError);
    CHECK_THROWS_AS(make_schedule(kMaxDiffusionSteps + 1, 1e-4, 0.02), UsageError);
    CHECK_NOTHROW(make_schedule(kMaxDiffusionSteps, 1e-4, 0.02));
    CHECK_THROWS_AS(make_schedule(10, 0.0, 0.02), UsageError);
    CHECK_THROWS_AS(make_schedule(10, 0.03, 0.02), UsageError);
    CHECK_THROWS_AS(make_schedule(10, 1e-4, 1.0), UsageError);
    CHECK_THROWS_AS(NoiseSchedule::from_sigmas({0.1, 1.5}), UsageError);
    const std::vector<int> steps = {1, 2};
    CHECK_THROWS_AS(q_sample_batch(Matrix::Zero(5, 2), steps, Matrix::Zero(5, 2), s, 3), UsageError);
}

}
