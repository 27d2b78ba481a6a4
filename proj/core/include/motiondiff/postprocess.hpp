#pragma once

#include <vector>

#include "motiondiff/motion.hpp"

namespace motiondiff {

inline constexpr double kDefaultFilterSigma = 1.0;
inline constexpr int kIkBlendFrames = 3;

// Normalized Gaussian taps for offsets -r..r with r = ceil(4 sigma).
// sigma == 0 gives the single tap {1}.
std::vector<double> gaussian_kernel(double sigma_frames);

// Smooths every rotation channel along time with a half-sample symmetric
// boundary (d c b a | a b c d | d c b a). Root channels and contact labels
// are left alone.
MotionClip gaussian_filter(const MotionClip& clip, double sigma_frames = kDefaultFilterSigma);

struct IkReport {
    int runs = 0;            // contact runs processed over all feet
    int solved_frames = 0;   // (frame, foot) pairs where the leg was moved
    int clamped_frames = 0;  // targets beyond full leg extension
    bool clamped() const noexcept { return clamped_frames > 0; }
};

struct IkResult {
    MotionClip clip;
    IkReport report;
};

// Pins each foot to the mean world position of every maximal contact run by
// two-bone IK on its hip-knee-ankle chain. The correction at a run edge fades
// out over the next kIkBlendFrames frames (weights 3/4, 1/2, 1/4).
// `contacts` is frames x feet; entries > 0.5 count as contact.
IkResult ik_foot_cleanup(const MotionClip& clip, const SkeletonDef& skeleton, const Matrix& contacts);

// Mean per-frame displacement of feet during contact (over consecutive
// frames both flagged as contact). Zero when there is no such pair.
double contact_foot_drift(const MotionClip& clip, const SkeletonDef& skeleton, const Matrix& contacts);

}  // namespace motiondiff
