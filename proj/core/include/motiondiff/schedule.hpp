#pragma once

// Closed-form diffusion algebra. Every public function takes 1-based diffusion
// steps t in [1, T]; storage is 0-based internally.

#include <span>
#include <vector>

#include "motiondiff/tensor.hpp"

namespace motiondiff {

class NoiseSchedule {
public:
    // Linear per-step variance from sigma_min (t = 1) to sigma_max (t = T).
    static NoiseSchedule linear(int steps, double sigma_min, double sigma_max);
    static NoiseSchedule from_sigmas(std::vector<double> sigmas);

    int steps() const noexcept { return static_cast<int>(sigma_.size()); }

    double sigma(int t) const { return sigma_[index(t)]; }
    double alpha_bar(int t) const { return alpha_bar_[index(t)]; }
    double sqrt_alpha_bar(int t) const { return sqrt_alpha_bar_[index(t)]; }
    double sqrt_one_minus_alpha_bar(int t) const { return sqrt_one_minus_alpha_bar_[index(t)]; }

    const std::vector<double>& sigmas() const noexcept { return sigma_; }
    const std::vector<double>& alpha_bars() const noexcept { return alpha_bar_; }

    void check_step(int t) const;

private:
    explicit NoiseSchedule(std::vector<double> sigmas);
    std::size_t index(int t) const;

    std::vector<double> sigma_;
    std::vector<double> alpha_bar_;
    std::vector<double> sqrt_alpha_bar_;
    std::vector<double> sqrt_one_minus_alpha_bar_;
};

inline constexpr int kMaxDiffusionSteps = 100000;

NoiseSchedule make_schedule(int steps, double sigma_min, double sigma_max);

// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps
Matrix q_sample(const Matrix& x0, int t, const Matrix& eps, const NoiseSchedule& sched);

// x0_hat = (x_t - sqrt(1 - abar_t) eps_hat) / sqrt(abar_t)
Matrix reconstruct_x0(const Matrix& x_t, int t, const Matrix& eps_hat, const NoiseSchedule& sched);

// x_{t-1} = (x_t - sigma_t / sqrt(1 - abar_t) eps_hat) / sqrt(1 - sigma_t) + sqrt(sigma_t) z.
// z must be zero at t = 1.
Matrix reverse_step(const Matrix& x_t, int t, const Matrix& eps_hat, const Matrix& z, const NoiseSchedule& sched);

// Batched forms over (batch*frames) x channels matrices with one step per clip.
Matrix q_sample_batch(const Matrix& x0, std::span<const int> steps, const Matrix& eps, const NoiseSchedule& sched,
                      int frames);
Matrix reverse_step_batch(const Matrix& x_t, std::span<const int> steps, const Matrix& eps_hat, const Matrix& z,
                          const NoiseSchedule& sched, int frames);

// Per-row coefficients for the differentiable reconstruction
// x0_hat = a * x_t + b * eps_hat with a = 1/sqrt(abar), b = -sqrt(1-abar)/sqrt(abar).
struct ReconstructionCoefficients {
    std::vector<double> x_scale;
    std::vector<double> eps_scale;
};
ReconstructionCoefficients reconstruction_coefficients(std::span<const int> steps, const NoiseSchedule& sched,
                                                       int frames);

}  // namespace motiondiff
