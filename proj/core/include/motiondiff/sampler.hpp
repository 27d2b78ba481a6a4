#pragma once

#include <random>
#include <span>
#include <vector>

#include "motiondiff/trainer.hpp"

namespace motiondiff {

struct SampleOptions {
    bool use_ema = true;
    int chunk = 64;  // clips denoised together; part of the determinism contract
};

// Runs the reverse chain from x_T ~ N(0, I) for one clip per label pair and
// returns de-normalized clips. Foot contacts are the final foot head output
// thresholded at 0.5.
std::vector<MotionClip> sample_labels(const TrainingState& ckpt, std::span<const int> contents,
                                      std::span<const int> styles, std::mt19937_64& rng,
                                      const SampleOptions& options = {});

std::vector<MotionClip> sample(const TrainingState& ckpt, int content, int style, int count, std::mt19937_64& rng,
                               const SampleOptions& options = {});

struct SampleTrajectory {
    std::vector<int> steps;       // diffusion index of each snapshot (T first, 0 last)
    std::vector<Matrix> states;   // normalized (clips*frames) x channels
    std::vector<MotionClip> clips;
};

// Snapshots x_T, then every record_every steps, and always x_0:
// ceil(T / record_every) + 1 states in total.
SampleTrajectory sample_trajectory(const TrainingState& ckpt, std::span<const int> contents,
                                   std::span<const int> styles, std::mt19937_64& rng, int record_every,
                                   const SampleOptions& options = {});

}  // namespace motiondiff
