#include "motiondiff/model.hpp"

#include <cmath>
#include <random>
#include <string>

#include "motiondiff/error.hpp"
#include "motiondiff/motion.hpp"

namespace motiondiff {

namespace {

int level_width(int base, int level) { return level == 0 ? base : 2 * base; }

void check_batch(std::span<const int> steps, std::span<const int> content, std::span<const int> style,
                 Eigen::Index rows, int frames) {
    if (frames <= 0 || rows % frames != 0) throw UsageError("activation rows are not a multiple of the frame count");
    const auto batch = static_cast<std::size_t>(rows / frames);
    if (steps.size() != batch || content.size() != batch || style.size() != batch) {
        throw UsageError("conditioning arrays must have one entry per clip");
    }
}

}  // namespace

void DenoiserConfig::validate() const {
    if (rot_channels < 1) throw UsageError("denoiser needs at least one rotation channel");
    if (feet < 0) throw UsageError("foot count must be non-negative");
    if (contents < 1 || styles < 1) throw UsageError("content and style counts must be >= 1");
    if (steps < 1) throw UsageError("diffusion steps must be >= 1");
    if (width < 2 || width % 2 != 0) throw UsageError("denoiser width must be an even number >= 2");
    if (levels < 1 || levels > 5) throw UsageError("denoiser levels must lie in [1, 5]");
}

Matrix one_hot(std::span<const int> ids, int classes) {
    Matrix m = Matrix::Zero(static_cast<Eigen::Index>(ids.size()), classes);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= classes) {
            throw UsageError("label " + std::to_string(ids[i]) + " outside [0, " + std::to_string(classes) + ")");
        }
        m(static_cast<Eigen::Index>(i), ids[i]) = 1.0;
    }
    return m;
}

Matrix sinusoidal_embedding(std::span<const int> steps, int dim) {
    const int half = dim / 2;
    Matrix m(static_cast<Eigen::Index>(steps.size()), dim);
    for (std::size_t i = 0; i < steps.size(); ++i) {
        for (int k = 0; k < half; ++k) {
            const double w = std::pow(10000.0, -2.0 * k / dim);
            m(static_cast<Eigen::Index>(i), k) = std::sin(steps[i] * w);
            m(static_cast<Eigen::Index>(i), half + k) = std::cos(steps[i] * w);
        }
    }
    return m;
}

Denoiser::Denoiser(const DenoiserConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    std::mt19937_64 rng(seed);
    const int w = config_.width;
    const int cond = 4 * w;
    content_proj_ = Linear::create(params_, "cond.content", config_.contents, w, rng, false);
    style_proj_ = Linear::create(params_, "cond.style", config_.styles, w, rng, false);
    cond_mlp_ = Linear::create(params_, "cond.mlp", 3 * w, cond, rng);
    input_ = Conv1d::create(params_, "input", config_.rot_channels, w, 3, 1, rng);

    down_blocks_.push_back(make_block("down0", w, w, rng));
    for (int l = 1; l <= config_.levels; ++l) {
        const std::string n = std::to_string(l);
        downsample_.push_back(Conv1d::create(params_, "downsample" + n, level_width(w, l - 1), level_width(w, l), 3, 2, rng));
        if (l < config_.levels) down_blocks_.push_back(make_block("down" + n, level_width(w, l), level_width(w, l), rng));
    }
    const int bw = level_width(w, config_.levels);
    mid1_ = make_block("mid1", bw, bw, rng);
    if (config_.attention) attn_ = SelfAttention::create(params_, "mid.attention", bw, rng);
    mid2_ = make_block("mid2", bw, bw, rng);
    up_blocks_.resize(static_cast<std::size_t>(config_.levels));
    for (int l = config_.levels - 1; l >= 0; --l) {
        up_blocks_[static_cast<std::size_t>(l)] =
            make_block("up" + std::to_string(l), level_width(w, l + 1) + level_width(w, l), level_width(w, l), rng);
    }
    eps_head_ = Linear::create(params_, "head.eps", w, config_.rot_channels, rng);
    root_head_ = Linear::create(params_, "head.root", w, kRootChannels, rng);
    foot_head_ = Linear::create(params_, "head.foot", w, config_.feet, rng);
}

Denoiser::ResBlock Denoiser::make_block(const std::string& name, int in, int out, std::mt19937_64& rng) {
    ResBlock b;
    b.conv1 = Conv1d::create(params_, name + ".conv1", in, out, 3, 1, rng);
    b.cond = Linear::create(params_, name + ".cond", 4 * config_.width, out, rng);
    b.conv2 = Conv1d::create(params_, name + ".conv2", out, out, 3, 1, rng);
    b.has_skip = in != out;
    if (b.has_skip) b.skip = Conv1d::create(params_, name + ".skip", in, out, 1, 1, rng);
    return b;
}

Var Denoiser::run_block(Tape& t, const ResBlock& b, Var x, Var cond, int frames) const {
    Var h = ag::silu(t, b.conv1(t, mut(), x, frames));
    h = ag::add_per_clip(t, h, b.cond(t, mut(), cond), frames);
    h = ag::silu(t, b.conv2(t, mut(), h, frames));
    Var s = b.has_skip ? b.skip(t, mut(), x, frames) : x;
    return ag::add(t, h, s);
}

Var Denoiser::embed_condition(Tape& t, std::span<const int> content, std::span<const int> style,
                              std::span<const int> steps) const {
    for (int s : steps) {
        if (s < 1 || s > config_.steps) {
            throw UsageError("diffusion step " + std::to_string(s) + " outside [1, " + std::to_string(config_.steps) + "]");
        }
    }
    Var c = content_proj_(t, mut(), t.constant(one_hot(content, config_.contents)));
    Var s = style_proj_(t, mut(), t.constant(one_hot(style, config_.styles)));
    Var e = t.constant(sinusoidal_embedding(steps, config_.width));
    return ag::concat_cols(t, {c, s, e});
}

DenoiserOutput Denoiser::forward(Tape& t, Var x_t, std::span<const int> steps, std::span<const int> content,
                                 std::span<const int> style, int frames) const {
    const Matrix& xv = t.value(x_t);
    if (xv.cols() != config_.rot_channels) {
        throw UsageError("denoiser expects " + std::to_string(config_.rot_channels) + " channels, got " +
                         std::to_string(xv.cols()));
    }
    check_batch(steps, content, style, xv.rows(), frames);
    if (frames % (1 << config_.levels) != 0) {
        throw UsageError("frame count must be divisible by 2^levels");
    }
    Var cond = ag::silu(t, cond_mlp_(t, mut(), embed_condition(t, content, style, steps)));

    std::vector<Var> skips;
    int f = frames;
    Var h = input_(t, mut(), x_t, f);
    h = run_block(t, down_blocks_[0], h, cond, f);
    skips.push_back(h);
    for (int l = 1; l <= config_.levels; ++l) {
        const Conv1d& ds = downsample_[static_cast<std::size_t>(l - 1)];
        h = ds(t, mut(), h, f);
        f = ds.out_frames(f);
        if (l < config_.levels) {
            h = run_block(t, down_blocks_[static_cast<std::size_t>(l)], h, cond, f);
            skips.push_back(h);
        }
    }
    h = run_block(t, mid1_, h, cond, f);
    if (config_.attention) h = attn_(t, mut(), h, f);
    h = run_block(t, mid2_, h, cond, f);
    for (int l = config_.levels - 1; l >= 0; --l) {
        h = ag::upsample2(t, h, f);
        f *= 2;
        h = ag::concat_cols(t, h, skips[static_cast<std::size_t>(l)]);
        h = run_block(t, up_blocks_[static_cast<std::size_t>(l)], h, cond, f);
    }
    h = ag::silu(t, h);
    DenoiserOutput out;
    out.eps_hat = eps_head_(t, mut(), h);
    out.root_hat = root_head_(t, mut(), h);
    out.foot_logits = foot_head_(t, mut(), h);
    return out;
}

DenoiserPrediction Denoiser::denoise(const Matrix& x_t, std::span<const int> steps, std::span<const int> content,
                                     std::span<const int> style, int frames) const {
    Tape t(false);
    DenoiserOutput o = forward(t, t.constant_ref(x_t), steps, content, style, frames);
    DenoiserPrediction p;
    p.eps_hat = t.value(o.eps_hat);
    p.root_hat = t.value(o.root_hat);
    p.foot_logits = t.value(o.foot_logits);
    return p;
}

Discriminator::Discriminator(const DiscriminatorConfig& config, std::uint64_t seed) : config_(config) {
    if (config_.rot_channels < 1 || config_.feet < 0 || config_.width < 1) throw UsageError("invalid discriminator config");
    std::mt19937_64 rng(seed);
    const int in = config_.rot_channels + kRootChannels + config_.feet;
    const int w = config_.width;
    convs_.push_back(Conv1d::create(params_, "disc.conv0", in, w, 3, 2, rng));
    convs_.push_back(Conv1d::create(params_, "disc.conv1", w, 2 * w, 3, 2, rng));
    convs_.push_back(Conv1d::create(params_, "disc.conv2", 2 * w, 2 * w, 3, 2, rng));
    out_ = Linear::create(params_, "disc.out", 2 * w, 1, rng);
}

Var Discriminator::forward(Tape& t, Var x0, Var root, Var foot, int frames) const {
    const Matrix& xv = t.value(x0);
    if (xv.cols() != config_.rot_channels || t.value(root).cols() != kRootChannels ||
        t.value(foot).cols() != config_.feet || t.value(root).rows() != xv.rows() || t.value(foot).rows() != xv.rows()) {
        throw UsageError("discriminator input shapes do not match its configuration");
    }
    if (frames <= 0 || xv.rows() % frames != 0) throw UsageError("activation rows are not a multiple of the frame count");
    Var h = config_.feet > 0 ? ag::concat_cols(t, {x0, root, foot}) : ag::concat_cols(t, x0, root);
    int f = frames;
    for (const Conv1d& c : convs_) {
        h = ag::leaky_relu(t, c(t, mut(), h, f), 0.2);
        f = c.out_frames(f);
    }
    return out_(t, mut(), ag::clip_mean(t, h, f));
}

Classifier::Classifier(const ClassifierConfig& config, std::uint64_t seed) : config_(config) {
    if (config_.rot_channels < 1 || config_.classes < 1 || config_.feature_width < 1) {
        throw UsageError("invalid classifier config");
    }
    std::mt19937_64 rng(seed);
    convs_.push_back(Conv1d::create(params_, "cls.conv0", config_.rot_channels, 32, 3, 1, rng));
    convs_.push_back(Conv1d::create(params_, "cls.conv1", 32, 64, 3, 2, rng));
    convs_.push_back(Conv1d::create(params_, "cls.conv2", 64, 64, 3, 2, rng));
    hidden_ = Linear::create(params_, "cls.hidden", 64, config_.feature_width, rng);
    out_ = Linear::create(params_, "cls.out", config_.feature_width, config_.classes, rng);
}

Classifier::Output Classifier::forward(Tape& t, Var x, int frames) const {
    if (t.value(x).cols() != config_.rot_channels) throw UsageError("classifier input channel mismatch");
    if (frames <= 0 || t.value(x).rows() % frames != 0) throw UsageError("activation rows are not a multiple of the frame count");
    Var h = x;
    int f = frames;
    for (const Conv1d& c : convs_) {
        h = ag::relu(t, c(t, mut(), h, f));
        f = c.out_frames(f);
    }
    Output o;
    o.features = ag::relu(t, hidden_(t, mut(), ag::clip_mean(t, h, f)));
    o.logits = out_(t, mut(), o.features);
    return o;
}

Matrix Classifier::features(const Matrix& x, int frames) const {
    Tape t(false);
    return t.value(forward(t, t.constant_ref(x), frames).features);
}

Matrix Classifier::logits(const Matrix& x, int frames) const {
    Tape t(false);
    return t.value(forward(t, t.constant_ref(x), frames).logits);
}

}  // namespace motiondiff
