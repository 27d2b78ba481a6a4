#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "motiondiff/checkpoint.hpp"
#include "motiondiff/trainer.hpp"

namespace motiondiff {

struct ClassifierTrainConfig {
    int steps = 400;
    int batch_size = 32;
    double learning_rate = 1e-3;
    int feature_width = 64;
    std::uint64_t seed = 0;

    void validate() const;
};

// Trains a content classifier on normalized clips. Deterministic under seed.
ClassifierBundle train_classifier(const std::vector<MotionClip>& clips, const std::vector<std::string>& content_names,
                                  const ClassifierTrainConfig& config);

// clips x feature_width penultimate activations of normalized clips.
Matrix extract_features(const Classifier& classifier, const std::vector<MotionClip>& clips);
std::vector<int> predict_contents(const Classifier& classifier, const std::vector<MotionClip>& clips);
double classification_accuracy(const Classifier& classifier, const std::vector<MotionClip>& clips);

struct FidStats {
    RowVector mu;
    Matrix sigma;
};

// Mean and unbiased covariance; needs at least two rows.
FidStats compute_stats(const Matrix& features);

// ||mu_r - mu_g||^2 + tr(S_r + S_g - 2 (S_r S_g)^(1/2)).
double fid(const FidStats& real, const FidStats& generated);

// Mean world-space joint acceleration magnitude (units / s^2) over all
// interior frames, joints and clips. Clips are de-normalized.
double mean_joint_acceleration(const SkeletonDef& skeleton, const std::vector<MotionClip>& clips);

struct EvalOptions {
    int n_gen = 0;  // 0: as many clips as the held-out set
    std::uint64_t seed = 0;
    bool use_ema = true;
};

struct EvalReport {
    double fid = 0.0;
    double accuracy = 0.0;
    std::vector<double> per_content_accuracy;
    std::vector<std::string> content_names;
    double mean_joint_acceleration = 0.0;
    int n_gen = 0;
    int n_real = 0;
    std::uint64_t seed = 0;

    std::string to_json() const;
};

// Label pairs for n generated clips, cycling content fastest so that every
// (content, style) pair is equally represented when n is a multiple of C*S.
std::vector<std::pair<int, int>> balanced_labels(int n, int contents, int styles);

// Generates clips from the checkpoint, scores them against `held_out`
// (normalized real clips) with the classifier.
EvalReport evaluate_run(const TrainingState& checkpoint, const std::vector<MotionClip>& held_out,
                        const ClassifierBundle& classifier, const EvalOptions& options = {});

// FID between the two stratified halves of `held_out`.
double real_split_fid(const std::vector<MotionClip>& held_out, const ClassifierBundle& classifier);

}  // namespace motiondiff
