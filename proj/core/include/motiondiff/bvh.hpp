#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "motiondiff/error.hpp"
#include "motiondiff/motion.hpp"

namespace motiondiff {

enum class BvhChannel { x_position, y_position, z_position, x_rotation, y_rotation, z_rotation };

// Motion exactly as stored in a BVH file: one column per channel, in file
// order. Rotation channels are held in radians.
struct RawMotion {
    SkeletonDef skeleton;
    std::vector<std::vector<BvhChannel>> channels;  // per joint
    Matrix frames;                                  // frames x total channels
    double frame_time = kDefaultFrameTime;

    int total_channels() const;
    int num_frames() const noexcept { return static_cast<int>(frames.rows()); }
};

class BvhParseError : public DataError {
public:
    BvhParseError(int line, const std::string& message)
        : DataError("bvh line " + std::to_string(line) + ": " + message), line_(line) {}
    int line() const noexcept { return line_; }

private:
    int line_;
};

// Foot joints are picked by name ("foot" or "ankle", case-insensitive).
RawMotion parse_bvh(std::string_view text);
RawMotion read_bvh_file(const std::filesystem::path& path);

// Joints are emitted in depth-first order, which equals index order for any
// skeleton produced by parse_bvh.
std::string write_bvh(const RawMotion& motion);

// Re-expresses a clip with the standard channel layout: the root carries
// "Xposition Yposition Zposition Zrotation Xrotation Yrotation", every other
// joint "Zrotation Xrotation Yrotation". Root translation is integrated from
// the root velocity channels starting at the origin.
RawMotion raw_from_clip(const SkeletonDef& skeleton, const MotionClip& clip);
std::string serialize_bvh(const SkeletonDef& skeleton, const MotionClip& clip);

// Full-length clip (any frame count). Foot contacts are left at zero.
MotionClip clip_from_raw(const RawMotion& motion);

}  // namespace motiondiff
