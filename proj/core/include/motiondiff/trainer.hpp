#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "motiondiff/dataset.hpp"
#include "motiondiff/losses.hpp"
#include "motiondiff/model.hpp"
#include "motiondiff/optim.hpp"
#include "motiondiff/schedule.hpp"

namespace motiondiff {

struct TrainerConfig {
    std::string preset = "desk";
    double learning_rate = 1.5e-3;
    double disc_learning_rate = 1e-4;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    int batch_size = 16;
    int diffusion_steps = 200;  // T
    double sigma_min = 5e-4;
    double sigma_max = 0.1;
    double ema_decay = 0.9999;
    // EMA decay is capped at (1 + n) / (10 + n) after n updates.
    bool ema_warmup = true;
    LossWeights weights;
    Ablation ablation;
    std::uint64_t seed = 0;
    int steps = 2000;
    int width = 64;  // must exceed the rotation channel count to pass the input through
    int levels = 2;
    bool attention = true;
    int disc_width = 32;
    double grad_clip = 1.0;  // global norm; <= 0 disables
    // Scales each clip's velocity, acceleration and generator adversarial
    // terms by min(1, abar_t / (1 - abar_t)). Reconstructions at high noise
    // levels amplify the noise error by sqrt((1 - abar) / abar).
    bool global_snr_weighting = true;
    int checkpoint_every = 500;

    static TrainerConfig desk();
    static TrainerConfig paper();
    static TrainerConfig preset_named(std::string_view name);

    void validate() const;
    LossWeights effective_weights() const { return apply_ablation(weights, ablation); }
    NoiseSchedule schedule() const { return make_schedule(diffusion_steps, sigma_min, sigma_max); }

    std::string to_json() const;
    // Keys absent from `text` keep the values of `base`. Unknown keys and
    // ill-typed values throw UsageError naming the key.
    static TrainerConfig from_json(std::string_view text, const TrainerConfig& base);
};

// Everything needed to continue training bit-exactly or to sample.
struct TrainingState {
    TrainerConfig config;
    DenoiserConfig denoiser_config;
    Denoiser denoiser;
    Discriminator discriminator;
    ParameterSet ema;
    AdamState gen_opt;
    AdamState disc_opt;
    std::int64_t step = 0;
    std::int64_t ema_updates = 0;

    std::mt19937_64 rng;
    std::normal_distribution<double> normal{0.0, 1.0};
    std::vector<int> order;  // current epoch permutation
    std::size_t cursor = 0;

    DatasetStats stats;
    SkeletonDef skeleton;
    std::vector<std::string> content_names;
    std::vector<std::string> style_names;
    double frame_time = kDefaultFrameTime;
};

// Fresh models for `dataset` seeded from config.seed.
TrainingState init_training(const TrainerConfig& config, const Dataset& dataset);

// One generator step, one discriminator step and one EMA update. Throws
// NumericError naming the offending term if any loss is non-finite; the state
// is left untouched in that case.
LossReport train_step(TrainingState& state, const std::vector<MotionClip>& clips, const NoiseSchedule& schedule);

// Single-line JSON record of a step.
std::string metrics_record(std::int64_t step, const LossReport& report);

struct RunOptions {
    std::filesystem::path out_dir;
    bool resume = false;
    // Called after every step; may be empty.
    std::function<void(std::int64_t, const LossReport&)> on_step;
};

// Trains until config.steps, writing metrics.jsonl (one record per step),
// checkpoint.mdck every checkpoint_every steps and at the end, and
// config.json. With resume set, continues from out_dir/checkpoint.mdck and
// truncates metrics.jsonl to the checkpoint step.
TrainingState run_training(const TrainerConfig& config, const Dataset& dataset, const RunOptions& options);

// Ablation rows: "full", "foot", "root", "physical", "discriminator"
// (the last four disable that component).
Ablation ablation_for_row(std::string_view row);
std::vector<std::string> ablation_rows();

}  // namespace motiondiff
