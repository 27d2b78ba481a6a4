#pragma once

// Learnable networks over (batch*frames) x channels activations.
//
// Denoiser: 1-D U-Net along time. Each level halves the frame count with a
// strided convolution; the bottleneck carries self-attention; the decoder
// upsamples and concatenates the matching encoder features. A conditioning
// vector built from content, style and diffusion step is added inside every
// residual block. Three linear heads share the final feature map.

#include <cstdint>
#include <span>
#include <vector>

#include "motiondiff/autograd.hpp"
#include "motiondiff/layers.hpp"

namespace motiondiff {

struct DenoiserConfig {
    int rot_channels = 0;
    int feet = 0;
    int contents = 1;
    int styles = 1;
    int steps = 1000;  // T
    int width = 32;
    int levels = 2;
    bool attention = true;

    void validate() const;
};

// Rows of `ids` as one-hot vectors; throws UsageError on an out-of-range id.
Matrix one_hot(std::span<const int> ids, int classes);
// Row i: [sin(t_i w_0), ..., sin(t_i w_{d/2-1}), cos(t_i w_0), ...] with
// w_k = 10000^(-2k/d).
Matrix sinusoidal_embedding(std::span<const int> steps, int dim);

struct DenoiserOutput {
    Var eps_hat;      // (batch*frames) x rot_channels
    Var root_hat;     // (batch*frames) x 4
    Var foot_logits;  // (batch*frames) x feet
};

struct DenoiserPrediction {
    Matrix eps_hat;
    Matrix root_hat;
    Matrix foot_logits;
};

class Denoiser {
public:
    Denoiser() = default;
    Denoiser(const DenoiserConfig& config, std::uint64_t seed);

    const DenoiserConfig& config() const noexcept { return config_; }
    ParameterSet& params() noexcept { return params_; }
    const ParameterSet& params() const noexcept { return params_; }

    // [content projection | style projection | sinusoidal step], batch x 3*width.
    Var embed_condition(Tape& t, std::span<const int> content, std::span<const int> style,
                        std::span<const int> steps) const;

    DenoiserOutput forward(Tape& t, Var x_t, std::span<const int> steps, std::span<const int> content,
                           std::span<const int> style, int frames) const;

    // Inference without gradient tracking; safe to call concurrently.
    DenoiserPrediction denoise(const Matrix& x_t, std::span<const int> steps, std::span<const int> content,
                               std::span<const int> style, int frames) const;

private:
    struct ResBlock {
        Conv1d conv1, conv2;
        Linear cond;
        Conv1d skip;
        bool has_skip = false;
    };
    ResBlock make_block(const std::string& name, int in, int out, std::mt19937_64& rng);
    Var run_block(Tape& t, const ResBlock& b, Var x, Var cond, int frames) const;
    ParameterSet& mut() const { return const_cast<ParameterSet&>(params_); }

    DenoiserConfig config_;
    ParameterSet params_;
    Linear content_proj_, style_proj_, cond_mlp_;
    Conv1d input_;
    std::vector<ResBlock> down_blocks_;  // one per level 0..levels-1 (level 0 at full rate)
    std::vector<Conv1d> downsample_;     // levels entries
    ResBlock mid1_, mid2_;
    SelfAttention attn_;
    std::vector<ResBlock> up_blocks_;  // index l produces level l
    Linear eps_head_, root_head_, foot_head_;
};

struct DiscriminatorConfig {
    int rot_channels = 0;
    int feet = 0;
    int width = 32;
};

// Least-squares critic over concatenated (rotations, root, foot probability).
class Discriminator {
public:
    Discriminator() = default;
    Discriminator(const DiscriminatorConfig& config, std::uint64_t seed);

    const DiscriminatorConfig& config() const noexcept { return config_; }
    ParameterSet& params() noexcept { return params_; }
    const ParameterSet& params() const noexcept { return params_; }

    // Returns batch x 1 scores.
    Var forward(Tape& t, Var x0, Var root, Var foot, int frames) const;

private:
    ParameterSet& mut() const { return const_cast<ParameterSet&>(params_); }

    DiscriminatorConfig config_;
    ParameterSet params_;
    std::vector<Conv1d> convs_;
    Linear out_;
};

struct ClassifierConfig {
    int rot_channels = 0;
    int classes = 1;
    int feature_width = 64;
};

// Temporal-convolution content classifier. features() returns the
// penultimate activations used for FID.
class Classifier {
public:
    Classifier() = default;
    Classifier(const ClassifierConfig& config, std::uint64_t seed);

    const ClassifierConfig& config() const noexcept { return config_; }
    ParameterSet& params() noexcept { return params_; }
    const ParameterSet& params() const noexcept { return params_; }

    struct Output {
        Var features;  // batch x feature_width
        Var logits;    // batch x classes
    };
    Output forward(Tape& t, Var x, int frames) const;

    Matrix features(const Matrix& x, int frames) const;
    Matrix logits(const Matrix& x, int frames) const;

private:
    ParameterSet& mut() const { return const_cast<ParameterSet&>(params_); }

    ClassifierConfig config_;
    ParameterSet params_;
    std::vector<Conv1d> convs_;
    Linear hidden_, out_;
};

}  // namespace motiondiff
