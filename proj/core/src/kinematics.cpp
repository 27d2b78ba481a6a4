#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Geometry>

#include "motiondiff/error.hpp"
#include "motiondiff/motion.hpp"

namespace motiondiff {

void SkeletonDef::validate() const {
    const std::size_t n = joint_names.size();
    if (n == 0) throw DataError("skeleton has no joints");
    if (parent_index.size() != n || offsets.size() != n) throw DataError("skeleton arrays have inconsistent lengths");
    if (!end_sites.empty() && end_sites.size() != n) throw DataError("skeleton end-site array has wrong length");
    if (parent_index[0] != -1) throw DataError("joint 0 must be the root");
    for (std::size_t i = 1; i < n; ++i) {
        const int p = parent_index[i];
        if (p < 0 || p >= static_cast<int>(i)) {
            throw DataError("joint '" + joint_names[i] + "' has invalid parent index " + std::to_string(p));
        }
    }
    for (const auto& o : offsets) {
        if (!o.allFinite()) throw DataError("skeleton offset is not finite");
    }
    for (int f : foot_joint_indices) {
        if (f < 0 || f >= static_cast<int>(n)) throw DataError("foot joint index " + std::to_string(f) + " out of range");
    }
}

std::array<int, 3> SkeletonDef::leg_chain(int foot_joint) const {
    const int knee = parent_index.at(static_cast<std::size_t>(foot_joint));
    const int hip = knee >= 0 ? parent_index.at(static_cast<std::size_t>(knee)) : -1;
    if (knee < 0 || hip < 0) throw DataError("foot joint '" + joint_names.at(static_cast<std::size_t>(foot_joint)) + "' needs two ancestors for a leg chain");
    return {hip, knee, foot_joint};
}

int SkeletonDef::find_joint(const std::string& name) const {
    auto it = std::find(joint_names.begin(), joint_names.end(), name);
    return it == joint_names.end() ? -1 : static_cast<int>(it - joint_names.begin());
}

Mat3 rot_x(double a) {
    const double c = std::cos(a), s = std::sin(a);
    Mat3 m;
    m << 1, 0, 0, 0, c, -s, 0, s, c;
    return m;
}

Mat3 rot_y(double a) {
    const double c = std::cos(a), s = std::sin(a);
    Mat3 m;
    m << c, 0, s, 0, 1, 0, -s, 0, c;
    return m;
}

Mat3 rot_z(double a) {
    const double c = std::cos(a), s = std::sin(a);
    Mat3 m;
    m << c, -s, 0, s, c, 0, 0, 0, 1;
    return m;
}

Mat3 euler_zxy_to_matrix(double z, double x, double y) { return rot_z(z) * rot_x(x) * rot_y(y); }

Vec3 matrix_to_euler_zxy(const Mat3& r) {
    const double sx = std::clamp(r(2, 1), -1.0, 1.0);
    const double x = std::asin(sx);
    double z = 0.0;
    double y = 0.0;
    if (std::abs(sx) < 1.0 - 1e-12) {
        z = std::atan2(-r(0, 1), r(1, 1));
        y = std::atan2(-r(2, 0), r(2, 2));
    } else {
        z = std::atan2(r(1, 0), r(0, 0));
    }
    return {z, x, y};
}

double heading_of(const Mat3& r) { return std::atan2(r(0, 2), r(2, 2)); }

double wrap_angle(double a) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    a = std::fmod(a + std::numbers::pi, two_pi);
    if (a < 0) a += two_pi;
    return a - std::numbers::pi;
}

Mat3 joint_rotation(const MotionClip& clip, int frame, int joint) {
    const auto e = clip.rotations.row(frame).segment(3 * joint, 3);
    return euler_zxy_to_matrix(e(0), e(1), e(2));
}

void set_joint_rotation(MotionClip& clip, int frame, int joint, const Mat3& r) {
    clip.rotations.row(frame).segment(3 * joint, 3) = matrix_to_euler_zxy(r).transpose();
}

std::vector<RootState> integrate_root(const MotionClip& clip) {
    const int n = clip.num_frames();
    std::vector<RootState> out(static_cast<std::size_t>(n));
    double x = 0.0, z = 0.0, heading = 0.0;
    for (int k = 0; k < n; ++k) {
        out[static_cast<std::size_t>(k)].position = Vec3(x, clip.root(k, 2), z);
        out[static_cast<std::size_t>(k)].heading = heading;
        const double vx = clip.root(k, 0), vz = clip.root(k, 1);
        const double c = std::cos(heading), s = std::sin(heading);
        x += (c * vx + s * vz) * clip.frame_time;
        z += (-s * vx + c * vz) * clip.frame_time;
        heading += clip.root(k, 3) * clip.frame_time;
    }
    return out;
}

std::vector<WorldPose> world_poses(const SkeletonDef& skeleton, const MotionClip& clip) {
    const int joints = skeleton.num_joints();
    if (clip.num_joints() != joints) throw DataError("clip joint count does not match skeleton");
    const auto roots = integrate_root(clip);
    std::vector<WorldPose> poses(roots.size());
    for (int k = 0; k < clip.num_frames(); ++k) {
        WorldPose& p = poses[static_cast<std::size_t>(k)];
        p.position.resize(static_cast<std::size_t>(joints));
        p.rotation.resize(static_cast<std::size_t>(joints));
        const RootState& root = roots[static_cast<std::size_t>(k)];
        p.rotation[0] = rot_y(root.heading) * joint_rotation(clip, k, 0);
        p.position[0] = root.position + skeleton.offsets[0];
        for (int j = 1; j < joints; ++j) {
            const auto parent = static_cast<std::size_t>(skeleton.parent_index[static_cast<std::size_t>(j)]);
            p.rotation[static_cast<std::size_t>(j)] = p.rotation[parent] * joint_rotation(clip, k, j);
            p.position[static_cast<std::size_t>(j)] = p.position[parent] + p.rotation[parent] * skeleton.offsets[static_cast<std::size_t>(j)];
        }
    }
    return poses;
}

Matrix forward_kinematics(const SkeletonDef& skeleton, const MotionClip& clip) {
    const auto poses = world_poses(skeleton, clip);
    Matrix out(clip.num_frames(), 3 * skeleton.num_joints());
    for (int k = 0; k < clip.num_frames(); ++k) {
        for (int j = 0; j < skeleton.num_joints(); ++j) {
            out.row(k).segment(3 * j, 3) = poses[static_cast<std::size_t>(k)].position[static_cast<std::size_t>(j)].transpose();
        }
    }
    return out;
}

Matrix detect_foot_contacts(const SkeletonDef& skeleton, const Matrix& positions, double frame_time,
                            double height_thresh, double speed_thresh) {
    const int frames = static_cast<int>(positions.rows());
    Matrix contacts = Matrix::Zero(frames, skeleton.num_feet());
    for (int f = 0; f < skeleton.num_feet(); ++f) {
        const int j = skeleton.foot_joint_indices[static_cast<std::size_t>(f)];
        for (int k = 0; k < frames; ++k) {
            const Vec3 p = positions.row(k).segment(3 * j, 3).transpose();
            double speed = 0.0;
            if (frames > 1) {
                const int a = k == 0 ? 1 : k;
                const Vec3 q0 = positions.row(a - 1).segment(3 * j, 3).transpose();
                const Vec3 q1 = positions.row(a).segment(3 * j, 3).transpose();
                speed = (q1 - q0).norm() / frame_time;
            }
            contacts(k, f) = (p.y() < height_thresh && speed < speed_thresh) ? 1.0 : 0.0;
        }
    }
    return contacts;
}

ContactThresholds calibrate_contact_thresholds(const SkeletonDef& skeleton, const std::vector<MotionClip>& clips) {
    std::vector<double> heights;
    double speed_sum = 0.0;
    std::size_t speed_count = 0;
    for (const auto& clip : clips) {
        const Matrix pos = forward_kinematics(skeleton, clip);
        for (int j : skeleton.foot_joint_indices) {
            for (Eigen::Index k = 0; k < pos.rows(); ++k) heights.push_back(pos(k, 3 * j + 1));
        }
        for (Eigen::Index k = 0; k < clip.root.rows(); ++k) {
            speed_sum += std::hypot(clip.root(k, 0), clip.root(k, 1));
            ++speed_count;
        }
    }
    double leg = 0.0;
    for (int f : skeleton.foot_joint_indices) {
        const auto chain = skeleton.leg_chain(f);
        leg = std::max(leg, skeleton.bone_length(chain[1]) + skeleton.bone_length(chain[2]));
    }
    ContactThresholds th;
    double rest = 0.0;
    if (!heights.empty()) {
        const auto nth = heights.begin() + static_cast<std::ptrdiff_t>(heights.size() / 20);
        std::nth_element(heights.begin(), nth, heights.end());
        rest = *nth;
    }
    th.height = rest + 0.1 * leg;
    const double mean_speed = speed_count ? speed_sum / static_cast<double>(speed_count) : 0.0;
    // Stationary data would otherwise give a zero speed threshold.
    th.speed = std::max(0.05 * mean_speed, 0.05 * leg);
    return th;
}

namespace {

double angle_between(const Vec3& u, const Vec3& v) { return std::atan2(u.cross(v).norm(), u.dot(v)); }

}  // namespace

TwoBoneSolution solve_two_bone_ik(const Vec3& a, const Vec3& b, const Vec3& c, const Mat3& a_world,
                                  const Mat3& b_world, const Vec3& target, const Vec3& bend_hint) {
    constexpr double eps = 1e-9;
    const double lab = (b - a).norm();
    const double lcb = (c - b).norm();
    const double lat_raw = (target - a).norm();
    const double lat = std::clamp(lat_raw, std::abs(lab - lcb) + eps, lab + lcb - eps);

    TwoBoneSolution sol;
    sol.clamped = lat_raw > lab + lcb - eps;

    const double ac_ab_0 = angle_between(c - a, b - a);
    const double ba_bc_0 = angle_between(a - b, c - b);
    const double ac_ab_1 = std::acos(std::clamp((lcb * lcb - lab * lab - lat * lat) / (-2.0 * lab * lat), -1.0, 1.0));
    const double ba_bc_1 = std::acos(std::clamp((lat * lat - lab * lab - lcb * lcb) / (-2.0 * lab * lcb), -1.0, 1.0));

    Vec3 axis = (c - a).cross(b - a);
    if (axis.norm() < 1e-12) axis = bend_hint;
    axis.normalize();

    const Mat3 q0 = Eigen::AngleAxisd(ac_ab_1 - ac_ab_0, axis).toRotationMatrix();
    const Mat3 q1 = Eigen::AngleAxisd(ba_bc_1 - ba_bc_0, axis).toRotationMatrix();

    const Vec3 b1 = a + q0 * (b - a);
    const Vec3 c1 = b1 + q1 * q0 * (c - b);
    const Mat3 q2 = Eigen::Quaterniond::FromTwoVectors(c1 - a, target - a).toRotationMatrix();

    sol.hip_world = q2 * q0 * a_world;
    sol.knee_world = q2 * q1 * q0 * b_world;
    return sol;
}

}  // namespace motiondiff
