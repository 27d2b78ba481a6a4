#pragma once

// Normalized clip datasets and their on-disk container.
//
// Container layout (little-endian):
//   magic "MDL1" | u32 version | u32 clips | u32 frames | u32 rotation channels
//   | u32 root channels | u32 foot channels
//   | f32 rotations [clips][frames][rot] | f32 root [clips][frames][4]
//   | f32 foot contacts [clips][frames][feet] | i32 content [clips] | i32 style [clips]
// A JSON sidecar at "<path>.json" stores label names, normalization
// statistics, the skeleton and the frame time.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "motiondiff/motion.hpp"

namespace motiondiff {

inline constexpr double kStdFloor = 1e-6;

struct DatasetStats {
    RowVector rot_mean, rot_std;
    RowVector root_mean, root_std;

    bool empty() const noexcept { return rot_mean.size() == 0; }
};

// Per-channel mean and population std over every frame of every clip; std is
// floored at kStdFloor so constant channels stay finite.
DatasetStats compute_dataset_stats(const std::vector<MotionClip>& clips);

void normalize_clip(MotionClip& clip, const DatasetStats& stats);
void denormalize_clip(MotionClip& clip, const DatasetStats& stats);

struct WindowOptions {
    int window = kClipFrames;
    int stride = 16;
    // Contact thresholds; non-positive values are calibrated from the data.
    double height_thresh = 0.0;
    double speed_thresh = 0.0;
    // Keep labels already present on the sequences instead of detecting them.
    bool keep_contacts = false;
};

struct WindowResult {
    std::vector<MotionClip> clips;
    DatasetStats stats;
};

// Cuts full-length sequences into windows, labels foot contacts on the raw
// motion and z-normalizes rotations and root channels. Throws DataError when a
// sequence is shorter than one window.
WindowResult window_and_normalize(const std::vector<MotionClip>& sequences, const SkeletonDef& skeleton,
                                  const std::optional<DatasetStats>& stats, const WindowOptions& options = {});

struct Dataset {
    SkeletonDef skeleton;
    std::vector<std::string> content_names;
    std::vector<std::string> style_names;
    DatasetStats stats;
    std::vector<MotionClip> clips;  // normalized
    double frame_time = kDefaultFrameTime;

    int num_contents() const noexcept { return static_cast<int>(content_names.size()); }
    int num_styles() const noexcept { return static_cast<int>(style_names.size()); }
    int num_clips() const noexcept { return static_cast<int>(clips.size()); }
};

void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

// Synthetic dataset: generated, labeled analytically and normalized.
Dataset make_synthetic_dataset(int num_clips, int content_classes, int style_classes, std::uint64_t seed);

// Clips stacked along rows: (batch*frames) x channels.
struct Batch {
    Matrix x0;
    Matrix root;
    Matrix foot;
    std::vector<int> content;
    std::vector<int> style;
    int frames = kClipFrames;

    int size() const noexcept { return static_cast<int>(content.size()); }
};

Batch make_batch(const std::vector<MotionClip>& clips, std::span<const int> indices);
Batch make_batch(const std::vector<MotionClip>& clips);
std::vector<MotionClip> unstack_batch(const Batch& batch, double frame_time);

// Deterministic split stratified by (content, style): the first
// round(fraction * n) clips of every group (in dataset order) go to `first`.
struct Split {
    std::vector<MotionClip> first;
    std::vector<MotionClip> second;
};
Split stratified_split(const std::vector<MotionClip>& clips, double fraction);

}  // namespace motiondiff
