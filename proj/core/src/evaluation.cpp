#include "motiondiff/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Eigenvalues>
#include <json.hpp>

#include "motiondiff/error.hpp"
#include "motiondiff/sampler.hpp"

namespace motiondiff {

namespace {

constexpr double kEigenTolerance = 1e-6;
constexpr int kFeatureChunk = 256;

Matrix stacked_rotations(const std::vector<MotionClip>& clips, std::size_t begin, std::size_t end) {
    const auto cols = clips[begin].rotations.cols();
    Matrix x(static_cast<Eigen::Index>(end - begin) * kClipFrames, cols);
    for (std::size_t i = begin; i < end; ++i) {
        const MotionClip& c = clips[i];
        if (c.num_frames() != kClipFrames || c.rotations.cols() != cols) {
            throw DataError("classifier input clips must be " + std::to_string(kClipFrames) + " frames with equal channels");
        }
        x.middleRows(static_cast<Eigen::Index>(i - begin) * kClipFrames, kClipFrames) = c.rotations;
    }
    return x;
}

template <class Fn>
Matrix chunked(const std::vector<MotionClip>& clips, Eigen::Index cols, Fn&& fn) {
    Matrix out(static_cast<Eigen::Index>(clips.size()), cols);
    for (std::size_t b = 0; b < clips.size(); b += kFeatureChunk) {
        const std::size_t e = std::min(clips.size(), b + kFeatureChunk);
        out.middleRows(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(e - b)) = fn(stacked_rotations(clips, b, e));
    }
    return out;
}

Eigen::SelfAdjointEigenSolver<Matrix> checked_eigen(const Matrix& m, const char* what) {
    const Matrix sym = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
    if (es.info() != Eigen::Success) throw NumericError(std::string("eigendecomposition failed for ") + what);
    if (es.eigenvalues().size() > 0 && es.eigenvalues().minCoeff() < -kEigenTolerance) {
        throw NumericError(std::string(what) + " is not positive semi-definite (eigenvalue " +
                           std::to_string(es.eigenvalues().minCoeff()) + ")");
    }
    return es;
}

Matrix psd_sqrt(const Matrix& m, const char* what) {
    const auto es = checked_eigen(m, what);
    const Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

void ClassifierTrainConfig::validate() const {
    if (steps < 0) throw UsageError("classifier steps must be non-negative");
    if (batch_size < 1) throw UsageError("classifier batch_size must be positive");
    if (!(learning_rate > 0.0)) throw UsageError("classifier learning_rate must be positive");
    if (feature_width < 1) throw UsageError("classifier feature_width must be positive");
}

ClassifierBundle train_classifier(const std::vector<MotionClip>& clips, const std::vector<std::string>& content_names,
                                  const ClassifierTrainConfig& config) {
    config.validate();
    if (clips.empty()) throw DataError("no clips to train the classifier on");
    if (content_names.empty()) throw DataError("classifier needs at least one content class");
    const int classes = static_cast<int>(content_names.size());
    for (const auto& c : clips) {
        if (c.content < 0 || c.content >= classes) throw DataError("clip content label out of range");
    }

    std::mt19937_64 rng(config.seed);
    ClassifierBundle bundle;
    bundle.model = Classifier({static_cast<int>(clips.front().rotations.cols()), classes, config.feature_width}, rng());
    bundle.content_names = content_names;
    bundle.seed = config.seed;
    bundle.frames = kClipFrames;

    AdamState opt = AdamState::zeros_like(bundle.model.params());
    const AdamConfig adam{config.learning_rate, 0.9, 0.999, 1e-8};
    std::vector<int> order(clips.size());
    std::iota(order.begin(), order.end(), 0);
    std::size_t cursor = order.size();
    const auto batch = static_cast<std::size_t>(std::min<int>(config.batch_size, static_cast<int>(clips.size())));

    for (int step = 0; step < config.steps; ++step) {
        std::vector<int> idx;
        while (idx.size() < batch) {
            if (cursor == order.size()) {
                std::shuffle(order.begin(), order.end(), rng);
                cursor = 0;
            }
            idx.push_back(order[cursor++]);
        }
        const Batch b = make_batch(clips, idx);
        ParameterSet& params = bundle.model.params();
        params.zero_grad();
        Tape t;
        const auto out = bundle.model.forward(t, t.constant_ref(b.x0), b.frames);
        const Var loss = ag::softmax_cross_entropy(t, out.logits, b.content);
        if (!std::isfinite(t.value(loss)(0, 0))) throw NumericError("classifier loss is not finite");
        t.backward(loss);
        adam_update(params, opt, adam);
    }
    return bundle;
}

Matrix extract_features(const Classifier& classifier, const std::vector<MotionClip>& clips) {
    if (clips.empty()) return Matrix(0, classifier.config().feature_width);
    return chunked(clips, classifier.config().feature_width,
                   [&](const Matrix& x) { return classifier.features(x, kClipFrames); });
}

std::vector<int> predict_contents(const Classifier& classifier, const std::vector<MotionClip>& clips) {
    std::vector<int> out;
    if (clips.empty()) return out;
    const Matrix logits =
        chunked(clips, classifier.config().classes, [&](const Matrix& x) { return classifier.logits(x, kClipFrames); });
    out.reserve(clips.size());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        Eigen::Index arg = 0;
        logits.row(i).maxCoeff(&arg);
        out.push_back(static_cast<int>(arg));
    }
    return out;
}

double classification_accuracy(const Classifier& classifier, const std::vector<MotionClip>& clips) {
    if (clips.empty()) return 0.0;
    const auto pred = predict_contents(classifier, clips);
    int hit = 0;
    for (std::size_t i = 0; i < clips.size(); ++i) hit += pred[i] == clips[i].content;
    return static_cast<double>(hit) / static_cast<double>(clips.size());
}

FidStats compute_stats(const Matrix& features) {
    if (features.rows() < 2) throw DataError("feature statistics need at least two samples");
    if (!features.allFinite()) throw NumericError("features contain non-finite values");
    FidStats s;
    s.mu = features.colwise().mean();
    const Matrix centered = features.rowwise() - s.mu;
    s.sigma = centered.transpose() * centered / static_cast<double>(features.rows() - 1);
    return s;
}

double fid(const FidStats& r, const FidStats& g) {
    const auto d = r.mu.size();
    if (g.mu.size() != d || r.sigma.rows() != d || r.sigma.cols() != d || g.sigma.rows() != d || g.sigma.cols() != d) {
        throw DataError("FID statistics have mismatched dimensions");
    }
    const Matrix sr = psd_sqrt(r.sigma, "real covariance");
    checked_eigen(g.sigma, "generated covariance");
    // (S_r S_g)^(1/2) shares its spectrum with (S_r^(1/2) S_g S_r^(1/2))^(1/2), which is symmetric.
    const auto es = checked_eigen(sr * g.sigma * sr, "covariance product");
    const double trace_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
    const double mean_term = (r.mu - g.mu).squaredNorm();
    const double value = mean_term + r.sigma.trace() + g.sigma.trace() - 2.0 * trace_sqrt;
    return std::max(0.0, value);
}

double mean_joint_acceleration(const SkeletonDef& skeleton, const std::vector<MotionClip>& clips) {
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& c : clips) {
        const Matrix p = forward_kinematics(skeleton, c);
        const double inv_dt2 = 1.0 / (c.frame_time * c.frame_time);
        for (Eigen::Index f = 1; f + 1 < p.rows(); ++f) {
            const RowVector a = p.row(f + 1) - 2.0 * p.row(f) + p.row(f - 1);
            for (int j = 0; j < skeleton.num_joints(); ++j) {
                total += a.segment(3 * j, 3).norm() * inv_dt2;
                ++count;
            }
        }
    }
    return count ? total / static_cast<double>(count) : 0.0;
}

std::string EvalReport::to_json() const {
    nlohmann::ordered_json j;
    j["fid"] = fid;
    j["accuracy"] = accuracy;
    nlohmann::ordered_json per = nlohmann::ordered_json::object();
    for (std::size_t i = 0; i < per_content_accuracy.size(); ++i) {
        const std::string name = i < content_names.size() ? content_names[i] : std::to_string(i);
        per[name] = per_content_accuracy[i];
    }
    j["per_content_accuracy"] = per;
    j["mean_joint_acceleration"] = mean_joint_acceleration;
    j["n_gen"] = n_gen;
    j["n_real"] = n_real;
    j["seed"] = seed;
    return j.dump(2);
}

std::vector<std::pair<int, int>> balanced_labels(int n, int contents, int styles) {
    if (n < 0 || contents < 1 || styles < 1) throw UsageError("invalid label grid");
    std::vector<std::pair<int, int>> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) out.emplace_back(i % contents, (i / contents) % styles);
    return out;
}

EvalReport evaluate_run(const TrainingState& ckpt, const std::vector<MotionClip>& held_out,
                        const ClassifierBundle& classifier, const EvalOptions& options) {
    if (held_out.size() < 2) throw DataError("evaluation needs at least two held-out clips");
    if (options.n_gen < 0) throw UsageError("n_gen must be non-negative");
    const int classes = classifier.model.config().classes;
    if (classes != ckpt.denoiser_config.contents) throw DataError("classifier and checkpoint disagree on content count");

    EvalReport rep;
    rep.n_real = static_cast<int>(held_out.size());
    rep.n_gen = options.n_gen > 0 ? options.n_gen : rep.n_real;
    rep.seed = options.seed;
    rep.content_names = classifier.content_names;

    std::vector<int> contents, styles;
    for (const auto& [c, s] : balanced_labels(rep.n_gen, classes, ckpt.denoiser_config.styles)) {
        contents.push_back(c);
        styles.push_back(s);
    }
    std::mt19937_64 rng(options.seed);
    SampleOptions so;
    so.use_ema = options.use_ema;
    std::vector<MotionClip> generated = sample_labels(ckpt, contents, styles, rng, so);
    rep.mean_joint_acceleration = mean_joint_acceleration(ckpt.skeleton, generated);
    for (auto& c : generated) normalize_clip(c, ckpt.stats);

    const FidStats real = compute_stats(extract_features(classifier.model, held_out));
    const FidStats gen = compute_stats(extract_features(classifier.model, generated));
    rep.fid = fid(real, gen);

    const auto pred = predict_contents(classifier.model, generated);
    std::vector<int> hits(static_cast<std::size_t>(classes), 0), totals(static_cast<std::size_t>(classes), 0);
    int hit = 0;
    for (std::size_t i = 0; i < generated.size(); ++i) {
        const auto c = static_cast<std::size_t>(generated[i].content);
        ++totals[c];
        if (pred[i] == generated[i].content) {
            ++hits[c];
            ++hit;
        }
    }
    rep.accuracy = static_cast<double>(hit) / static_cast<double>(generated.size());
    for (int c = 0; c < classes; ++c) {
        const auto k = static_cast<std::size_t>(c);
        rep.per_content_accuracy.push_back(totals[k] ? static_cast<double>(hits[k]) / totals[k] : 0.0);
    }
    return rep;
}

double real_split_fid(const std::vector<MotionClip>& held_out, const ClassifierBundle& classifier) {
    const Split halves = stratified_split(held_out, 0.5);
    return fid(compute_stats(extract_features(classifier.model, halves.first)),
               compute_stats(extract_features(classifier.model, halves.second)));
}

}  // namespace motiondiff
