#include "motiondiff/schedule.hpp"

#include <cmath>
#include <string>

#include "motiondiff/error.hpp"

namespace motiondiff {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw UsageError(std::string(what) + ": tensor shapes differ");
    }
}

void require_batch(const Matrix& x, std::span<const int> steps, int frames, const char* what) {
    if (frames <= 0 || x.rows() != static_cast<Eigen::Index>(steps.size()) * frames) {
        throw UsageError(std::string(what) + ": rows must equal clips * frames");
    }
}

}  // namespace

NoiseSchedule::NoiseSchedule(std::vector<double> sigmas) : sigma_(std::move(sigmas)) {
    if (sigma_.empty()) throw UsageError("noise schedule needs at least one step");
    double running = 1.0;
    alpha_bar_.reserve(sigma_.size());
    for (std::size_t i = 0; i < sigma_.size(); ++i) {
        const double s = sigma_[i];
        if (!(s > 0.0 && s < 1.0)) {
            throw UsageError("noise schedule value at t=" + std::to_string(i + 1) + " is outside (0, 1)");
        }
        running *= 1.0 - s;
        alpha_bar_.push_back(running);
        sqrt_alpha_bar_.push_back(std::sqrt(running));
        sqrt_one_minus_alpha_bar_.push_back(std::sqrt(1.0 - running));
    }
}

NoiseSchedule NoiseSchedule::linear(int steps, double sigma_min, double sigma_max) {
    if (steps < 1 || steps > kMaxDiffusionSteps) {
        throw UsageError("number of diffusion steps must lie in [1, " + std::to_string(kMaxDiffusionSteps) + "]");
    }
    if (!(sigma_min > 0.0 && sigma_min <= sigma_max && sigma_max < 1.0)) {
        throw UsageError("schedule bounds must satisfy 0 < sigma_min <= sigma_max < 1");
    }
    std::vector<double> s(static_cast<std::size_t>(steps));
    for (int i = 0; i < steps; ++i) {
        const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / (steps - 1);
        s[static_cast<std::size_t>(i)] = sigma_min + frac * (sigma_max - sigma_min);
    }
    return NoiseSchedule(std::move(s));
}

NoiseSchedule NoiseSchedule::from_sigmas(std::vector<double> sigmas) { return NoiseSchedule(std::move(sigmas)); }

void NoiseSchedule::check_step(int t) const {
    if (t < 1 || t > steps()) {
        throw UsageError("diffusion step " + std::to_string(t) + " outside [1, " + std::to_string(steps()) + "]");
    }
}

std::size_t NoiseSchedule::index(int t) const {
    check_step(t);
    return static_cast<std::size_t>(t - 1);
}

NoiseSchedule make_schedule(int steps, double sigma_min, double sigma_max) {
    return NoiseSchedule::linear(steps, sigma_min, sigma_max);
}

Matrix q_sample(const Matrix& x0, int t, const Matrix& eps, const NoiseSchedule& sched) {
    require_same_shape(x0, eps, "q_sample");
    return sched.sqrt_alpha_bar(t) * x0 + sched.sqrt_one_minus_alpha_bar(t) * eps;
}

Matrix reconstruct_x0(const Matrix& x_t, int t, const Matrix& eps_hat, const NoiseSchedule& sched) {
    require_same_shape(x_t, eps_hat, "reconstruct_x0");
    return (x_t - sched.sqrt_one_minus_alpha_bar(t) * eps_hat) / sched.sqrt_alpha_bar(t);
}

Matrix reverse_step(const Matrix& x_t, int t, const Matrix& eps_hat, const Matrix& z, const NoiseSchedule& sched) {
    require_same_shape(x_t, eps_hat, "reverse_step");
    require_same_shape(x_t, z, "reverse_step");
    const double s = sched.sigma(t);
    if (t == 1 && !z.isZero(0.0)) throw UsageError("reverse_step: noise must be zero at t=1");
    const double coef = s / sched.sqrt_one_minus_alpha_bar(t);
    return (x_t - coef * eps_hat) / std::sqrt(1.0 - s) + std::sqrt(s) * z;
}

Matrix q_sample_batch(const Matrix& x0, std::span<const int> steps, const Matrix& eps, const NoiseSchedule& sched,
                      int frames) {
    require_same_shape(x0, eps, "q_sample_batch");
    require_batch(x0, steps, frames, "q_sample_batch");
    Matrix out(x0.rows(), x0.cols());
    for (std::size_t b = 0; b < steps.size(); ++b) {
        const Eigen::Index r0 = static_cast<Eigen::Index>(b) * frames;
        const int t = steps[b];
        out.middleRows(r0, frames) = sched.sqrt_alpha_bar(t) * x0.middleRows(r0, frames) +
                                     sched.sqrt_one_minus_alpha_bar(t) * eps.middleRows(r0, frames);
    }
    return out;
}

Matrix reverse_step_batch(const Matrix& x_t, std::span<const int> steps, const Matrix& eps_hat, const Matrix& z,
                          const NoiseSchedule& sched, int frames) {
    require_same_shape(x_t, eps_hat, "reverse_step_batch");
    require_same_shape(x_t, z, "reverse_step_batch");
    require_batch(x_t, steps, frames, "reverse_step_batch");
    Matrix out(x_t.rows(), x_t.cols());
    for (std::size_t b = 0; b < steps.size(); ++b) {
        const Eigen::Index r0 = static_cast<Eigen::Index>(b) * frames;
        out.middleRows(r0, frames) = reverse_step(x_t.middleRows(r0, frames), steps[b], eps_hat.middleRows(r0, frames),
                                                  z.middleRows(r0, frames), sched);
    }
    return out;
}

ReconstructionCoefficients reconstruction_coefficients(std::span<const int> steps, const NoiseSchedule& sched,
                                                       int frames) {
    ReconstructionCoefficients c;
    c.x_scale.reserve(steps.size() * static_cast<std::size_t>(frames));
    c.eps_scale.reserve(steps.size() * static_cast<std::size_t>(frames));
    for (int t : steps) {
        const double a = 1.0 / sched.sqrt_alpha_bar(t);
        const double b = -sched.sqrt_one_minus_alpha_bar(t) / sched.sqrt_alpha_bar(t);
        for (int f = 0; f < frames; ++f) {
            c.x_scale.push_back(a);
            c.eps_scale.push_back(b);
        }
    }
    return c;
}

}  // namespace motiondiff
