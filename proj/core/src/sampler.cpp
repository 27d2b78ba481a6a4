#include "motiondiff/sampler.hpp"

#include <algorithm>
#include <string>

#include "motiondiff/error.hpp"

namespace motiondiff {

namespace {

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
    return m;
}

void check_labels(const TrainingState& ckpt, std::span<const int> contents, std::span<const int> styles) {
    if (contents.size() != styles.size()) throw UsageError("content and style lists differ in length");
    const int nc = ckpt.denoiser_config.contents;
    const int ns = ckpt.denoiser_config.styles;
    for (int c : contents) {
        if (c < 0 || c >= nc) throw UsageError("content " + std::to_string(c) + " out of range [0, " + std::to_string(nc - 1) + "]");
    }
    for (int s : styles) {
        if (s < 0 || s >= ns) throw UsageError("style " + std::to_string(s) + " out of range [0, " + std::to_string(ns - 1) + "]");
    }
    if (ckpt.stats.empty()) throw DataError("checkpoint carries no dataset statistics");
}

Denoiser sampling_model(const TrainingState& ckpt, bool use_ema) {
    Denoiser d = ckpt.denoiser;
    if (use_ema) d.params().assign_values(ckpt.ema);
    return d;
}

struct ChainResult {
    Matrix x0;
    DenoiserPrediction last;
};

template <class Record>
ChainResult run_chain(const Denoiser& model, const NoiseSchedule& sched, std::span<const int> contents,
                      std::span<const int> styles, std::mt19937_64& rng, Record&& record) {
    const int frames = kClipFrames;
    const auto n = static_cast<Eigen::Index>(contents.size());
    const int channels = model.config().rot_channels;
    Matrix x = gaussian(n * frames, channels, rng);
    record(sched.steps(), x);
    ChainResult r;
    std::vector<int> steps(contents.size());
    for (int t = sched.steps(); t >= 1; --t) {
        std::fill(steps.begin(), steps.end(), t);
        r.last = model.denoise(x, steps, contents, styles, frames);
        const Matrix z = t > 1 ? gaussian(x.rows(), x.cols(), rng) : Matrix::Zero(x.rows(), x.cols());
        x = reverse_step_batch(x, steps, r.last.eps_hat, z, sched, frames);
        if (!x.allFinite()) throw NumericError("sampling produced non-finite values at step " + std::to_string(t));
        record(t - 1, x);
    }
    r.x0 = std::move(x);
    return r;
}

std::vector<MotionClip> assemble(const TrainingState& ckpt, const ChainResult& r, std::span<const int> contents,
                                 std::span<const int> styles) {
    Batch b;
    b.frames = kClipFrames;
    b.x0 = r.x0;
    b.root = r.last.root_hat;
    b.foot = (r.last.foot_logits.array() > 0.0).cast<double>().matrix();  // sigmoid(l) > 0.5
    b.content.assign(contents.begin(), contents.end());
    b.style.assign(styles.begin(), styles.end());
    auto clips = unstack_batch(b, ckpt.frame_time);
    for (auto& c : clips) denormalize_clip(c, ckpt.stats);
    return clips;
}

}  // namespace

std::vector<MotionClip> sample_labels(const TrainingState& ckpt, std::span<const int> contents,
                                      std::span<const int> styles, std::mt19937_64& rng, const SampleOptions& options) {
    check_labels(ckpt, contents, styles);
    if (options.chunk < 1) throw UsageError("sampling chunk must be positive");
    const Denoiser model = sampling_model(ckpt, options.use_ema);
    const NoiseSchedule sched = ckpt.config.schedule();
    std::vector<MotionClip> out;
    for (std::size_t start = 0; start < contents.size(); start += static_cast<std::size_t>(options.chunk)) {
        const std::size_t len = std::min(contents.size() - start, static_cast<std::size_t>(options.chunk));
        const auto c = contents.subspan(start, len);
        const auto s = styles.subspan(start, len);
        const ChainResult r = run_chain(model, sched, c, s, rng, [](int, const Matrix&) {});
        auto clips = assemble(ckpt, r, c, s);
        std::move(clips.begin(), clips.end(), std::back_inserter(out));
    }
    return out;
}

std::vector<MotionClip> sample(const TrainingState& ckpt, int content, int style, int count, std::mt19937_64& rng,
                               const SampleOptions& options) {
    if (count < 0) throw UsageError("sample count must be non-negative");
    const std::vector<int> c(static_cast<std::size_t>(count), content);
    const std::vector<int> s(static_cast<std::size_t>(count), style);
    return sample_labels(ckpt, c, s, rng, options);
}

SampleTrajectory sample_trajectory(const TrainingState& ckpt, std::span<const int> contents,
                                   std::span<const int> styles, std::mt19937_64& rng, int record_every,
                                   const SampleOptions& options) {
    check_labels(ckpt, contents, styles);
    if (record_every < 1) throw UsageError("record_every must be positive");
    const Denoiser model = sampling_model(ckpt, options.use_ema);
    const NoiseSchedule sched = ckpt.config.schedule();
    const int T = sched.steps();
    SampleTrajectory traj;
    const ChainResult r = run_chain(model, sched, contents, styles, rng, [&](int t, const Matrix& x) {
        if (t == T || t == 0 || (T - t) % record_every == 0) {
            traj.steps.push_back(t);
            traj.states.push_back(x);
        }
    });
    traj.clips = assemble(ckpt, r, contents, styles);
    return traj;
}

}  // namespace motiondiff
