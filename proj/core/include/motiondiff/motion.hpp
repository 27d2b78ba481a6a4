#pragma once

// Skeletal motion representation and kinematics.
//
// Conventions:
//  * y is up, +z is the character's forward direction at zero heading.
//  * Each joint stores Euler angles (z, x, y) in radians and its local rotation
//    is Rz(z) * Rx(x) * Ry(y), matching the "Zrotation Xrotation Yrotation"
//    channel order of BVH files.
//  * Root motion lives in a separate 4-channel block per frame:
//    (planar velocity x, planar velocity z) expressed in the heading frame,
//    root height, and heading (yaw) rate. The root joint's own rotation is
//    relative to the heading frame. Velocities are per second.

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "motiondiff/tensor.hpp"

namespace motiondiff {

inline constexpr int kClipFrames = 32;
inline constexpr int kRootChannels = 4;
inline constexpr double kDefaultFrameTime = 1.0 / 30.0;

struct SkeletonDef {
    std::vector<std::string> joint_names;
    std::vector<int> parent_index;
    std::vector<Vec3> offsets;
    std::vector<int> foot_joint_indices;
    // BVH "End Site" offsets, kept for faithful re-serialization.
    std::vector<std::optional<Vec3>> end_sites;

    int num_joints() const noexcept { return static_cast<int>(joint_names.size()); }
    int rotation_channels() const noexcept { return 3 * num_joints(); }
    int num_feet() const noexcept { return static_cast<int>(foot_joint_indices.size()); }

    // Throws DataError unless: one root at index 0, parent_index[i] < i,
    // matching array sizes, valid foot indices.
    void validate() const;

    // (hip, knee, foot) for the given foot joint; requires two ancestors.
    std::array<int, 3> leg_chain(int foot_joint) const;
    double bone_length(int joint) const { return offsets[static_cast<std::size_t>(joint)].norm(); }
    int find_joint(const std::string& name) const;
};

struct MotionClip {
    Matrix rotations;     // frames x (3 * joints)
    Matrix root;          // frames x 4
    Matrix foot_contact;  // frames x feet, entries in {0, 1} for ground truth
    int content = 0;
    int style = 0;
    double frame_time = kDefaultFrameTime;

    int num_frames() const noexcept { return static_cast<int>(rotations.rows()); }
    int num_joints() const noexcept { return static_cast<int>(rotations.cols() / 3); }
};

Mat3 rot_x(double a);
Mat3 rot_y(double a);
Mat3 rot_z(double a);
Mat3 euler_zxy_to_matrix(double z, double x, double y);
// Returns (z, x, y) with x in [-pi/2, pi/2].
Vec3 matrix_to_euler_zxy(const Mat3& r);
// Yaw of the rotated +z axis projected onto the ground plane.
double heading_of(const Mat3& r);
double wrap_angle(double a);

Mat3 joint_rotation(const MotionClip& clip, int frame, int joint);
void set_joint_rotation(MotionClip& clip, int frame, int joint, const Mat3& r);

struct RootState {
    Vec3 position;  // world position of the root translation (x, height, z)
    double heading = 0.0;
};

// Integrates the root channels from the origin with zero initial heading.
std::vector<RootState> integrate_root(const MotionClip& clip);

// Per-frame world transforms of every joint.
struct WorldPose {
    std::vector<Vec3> position;
    std::vector<Mat3> rotation;
};
std::vector<WorldPose> world_poses(const SkeletonDef& skeleton, const MotionClip& clip);

// frames x (3 * joints) world joint positions.
Matrix forward_kinematics(const SkeletonDef& skeleton, const MotionClip& clip);

// contact[f, k] = 1 iff the k-th foot is below height_thresh and moves slower
// than speed_thresh (units per second). Frame 0 uses the forward difference.
Matrix detect_foot_contacts(const SkeletonDef& skeleton, const Matrix& positions, double frame_time,
                            double height_thresh, double speed_thresh);

struct ContactThresholds {
    double height = 0.0;
    double speed = 0.0;
};

// Height: resting foot height (5th percentile of foot heights) plus 10% of the
// leg length. Speed: 5% of the mean planar root speed, but at least 5% of the
// leg length per second so near-static data still registers contacts.
ContactThresholds calibrate_contact_thresholds(const SkeletonDef& skeleton, const std::vector<MotionClip>& clips);

// Analytic two-bone IK on a chain a (hip) -> b (knee) -> c (ankle). Returns
// the new world rotations of a and b so that c lands on `target` (or as close
// as the chain allows). `bend_hint` is used as the bend axis when the chain is
// fully straight.
struct TwoBoneSolution {
    Mat3 hip_world;
    Mat3 knee_world;
    bool clamped = false;
};
TwoBoneSolution solve_two_bone_ik(const Vec3& a, const Vec3& b, const Vec3& c, const Mat3& a_world,
                                  const Mat3& b_world, const Vec3& target, const Vec3& bend_hint);

}  // namespace motiondiff
