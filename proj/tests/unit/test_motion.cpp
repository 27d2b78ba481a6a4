#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "../oracles.hpp"
#include "motiondiff/error.hpp"
#include "motiondiff/motion.hpp"
#include "motiondiff/synthetic.hpp"

using namespace motiondiff;

namespace {

MotionClip zero_clip(const SkeletonDef& sk, int frames) {
    MotionClip c;
    c.rotations = Matrix::Zero(frames, sk.rotation_channels());
    c.root = Matrix::Zero(frames, kRootChannels);
    c.foot_contact = Matrix::Zero(frames, sk.num_feet());
    return c;
}

MotionClip random_clip(const SkeletonDef& sk, int frames, std::mt19937_64& rng) {
    MotionClip c = zero_clip(sk, frames);
    std::uniform_real_distribution<double> ang(-std::numbers::pi, std::numbers::pi);
    std::normal_distribution<double> n;
    for (int f = 0; f < frames; ++f) {
        for (int k = 0; k < c.rotations.cols(); ++k) c.rotations(f, k) = ang(rng);
        c.root.row(f) << 2 * n(rng), 2 * n(rng), 1.0 + 0.1 * n(rng), 3 * n(rng);
    }
    return c;
}

}  // namespace

TEST_SUITE("motion") {

TEST_CASE("elementary rotations and Euler round trip") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> ang(-3.0, 3.0), pitch(-1.5, 1.5);
    for (int i = 0; i < 200; ++i) {
        const double z = ang(rng), x = pitch(rng), y = ang(rng);
        const Mat3 r = euler_zxy_to_matrix(z, x, y);
        CHECK((r * r.transpose() - Mat3::Identity()).norm() < 1e-12);
        CHECK(r.determinant() == doctest::Approx(1.0));
        const Vec3 e = matrix_to_euler_zxy(r);
        CHECK((euler_zxy_to_matrix(e(0), e(1), e(2)) - r).norm() < 1e-10);
        CHECK(std::abs(e(0) - z) < 1e-9);
        CHECK(std::abs(e(1) - x) < 1e-9);
        CHECK(std::abs(e(2) - y) < 1e-9);
    }
    CHECK((rot_y(0.3) * Vec3::UnitZ() - Vec3(std::sin(0.3), 0, std::cos(0.3))).norm() < 1e-15);
    CHECK(heading_of(rot_y(0.7)) == doctest::Approx(0.7));
    CHECK(wrap_angle(3 * std::numbers::pi / 2) == doctest::Approx(-std::numbers::pi / 2));
    CHECK(wrap_angle(-0.25) == doctest::Approx(-0.25));
}

TEST_CASE("synthetic skeleton satisfies its invariants") {
    const SkeletonDef sk = make_synthetic_skeleton();
    CHECK_NOTHROW(sk.validate());
    CHECK(sk.num_feet() == 2);
    for (int f : sk.foot_joint_indices) {
        const auto chain = sk.leg_chain(f);
        CHECK(sk.parent_index[static_cast<std::size_t>(chain[2])] == chain[1]);
        CHECK(sk.parent_index[static_cast<std::size_t>(chain[1])] == chain[0]);
    }
}

TEST_CASE("skeleton validation rejects broken hierarchies") {
    SkeletonDef sk = make_synthetic_skeleton();
    SkeletonDef bad = sk;
    bad.parent_index[0] = 0;
    CHECK_THROWS_AS(bad.validate(), DataError);
    bad = sk;
    bad.parent_index[3] = 5;
    CHECK_THROWS_AS(bad.validate(), DataError);
    bad = sk;
    bad.foot_joint_indices.push_back(99);
    CHECK_THROWS_AS(bad.validate(), DataError);
    bad = sk;
    bad.offsets.pop_back();
    CHECK_THROWS_AS(bad.validate(), DataError);
    CHECK_THROWS_AS(sk.leg_chain(0), DataError);
}

TEST_CASE("zero pose places every joint at its rest offset chain") {
    const SkeletonDef sk = make_synthetic_skeleton();
    const MotionClip c = zero_clip(sk, 3);
    const Matrix p = forward_kinematics(sk, c);
    for (int j = 0; j < sk.num_joints(); ++j) {
        Vec3 rest = Vec3::Zero();
        for (int k = j; k >= 0; k = sk.parent_index[static_cast<std::size_t>(k)]) rest += sk.offsets[static_cast<std::size_t>(k)];
        for (int f = 0; f < 3; ++f) CHECK((p.row(f).segment(3 * j, 3).transpose() - rest).norm() < 1e-12);
    }
}

TEST_CASE("FK preserves bone lengths under random rotations and headings") {
    const SkeletonDef sk = make_synthetic_skeleton();
    std::mt19937_64 rng(2);
    const MotionClip c = random_clip(sk, 40, rng);
    const Matrix p = forward_kinematics(sk, c);
    double worst = 0.0;
    for (int f = 0; f < 40; ++f)
        for (int j = 1; j < sk.num_joints(); ++j) {
            const int par = sk.parent_index[static_cast<std::size_t>(j)];
            const double d = (p.row(f).segment(3 * j, 3) - p.row(f).segment(3 * par, 3)).norm();
            worst = std::max(worst, std::abs(d - sk.bone_length(j)));
        }
    CHECK(worst < 1e-6);
}

TEST_CASE("constant planar velocity integrates linearly") {
    SkeletonDef sk = make_synthetic_skeleton();
    sk.offsets[0] = Vec3::Zero();
    MotionClip c = zero_clip(sk, 10);
    c.root.col(0).setConstant(0.5);
    c.root.col(1).setConstant(1.5);
    const Matrix p = forward_kinematics(sk, c);
    for (int k = 0; k < 10; ++k) {
        CHECK(p(k, 0) == doctest::Approx(k * 0.5 * c.frame_time));
        CHECK(p(k, 2) == doctest::Approx(k * 1.5 * c.frame_time));
    }
}

TEST_CASE("turning rate integrates into heading and rotates the velocity") {
    SkeletonDef sk = make_synthetic_skeleton();
    MotionClip c = zero_clip(sk, 31);
    c.root.col(1).setConstant(1.0);
    c.root.col(3).setConstant(std::numbers::pi / (30 * c.frame_time));  // half a turn over 30 frames
    const auto roots = integrate_root(c);
    CHECK(roots[30].heading == doctest::Approx(std::numbers::pi));
    // Explicit Euler: step k moves dt along heading k * pi / 30.
    double x = 0.0, z = 0.0;
    for (int k = 0; k < 30; ++k) {
        x += std::sin(k * std::numbers::pi / 30) * c.frame_time;
        z += std::cos(k * std::numbers::pi / 30) * c.frame_time;
    }
    CHECK(roots[30].position.x() == doctest::Approx(x).epsilon(1e-12));
    CHECK(roots[30].position.z() == doctest::Approx(z).epsilon(1e-12));
}

TEST_CASE("contact detection thresholds") {
    const SkeletonDef sk = make_synthetic_skeleton();
    const int frames = 6;
    Matrix pos = Matrix::Zero(frames, 3 * sk.num_joints());
    Matrix c = detect_foot_contacts(sk, pos, 1.0 / 30, 0.05, 0.5);
    CHECK(c.sum() == frames * sk.num_feet());
    pos.setConstant(0.5);  // ten times the height threshold
    c = detect_foot_contacts(sk, pos, 1.0 / 30, 0.05, 0.5);
    CHECK(c.sum() == 0.0);
    pos.setZero();
    const int foot = sk.foot_joint_indices[0];
    for (int k = 0; k < frames; ++k) pos(k, 3 * foot) = 0.1 * k;  // 3 units/s
    c = detect_foot_contacts(sk, pos, 1.0 / 30, 0.05, 0.5);
    CHECK(c.col(0).sum() == 0.0);
    CHECK(c.col(1).sum() == frames);
}

TEST_CASE("walk cycles alternate feet with each foot planted 40-70% of the time") {
    const SkeletonDef sk = make_synthetic_skeleton();
    std::vector<MotionClip> walks;
    for (auto& c : generate_synthetic(60, 3, 3, 5, 64))
        if (c.content == 0) walks.push_back(c);
    const ContactThresholds th = calibrate_contact_thresholds(sk, walks);
    CHECK(th.height > 0.0);
    CHECK(th.speed > 0.0);
    double left = 0.0, right = 0.0, both_off = 0.0, n = 0.0;
    for (const auto& c : walks) {
        const Matrix d = detect_foot_contacts(sk, forward_kinematics(sk, c), c.frame_time, th.height, th.speed);
        left += d.col(0).sum();
        right += d.col(1).sum();
        for (int k = 0; k < d.rows(); ++k) both_off += (d(k, 0) + d(k, 1) == 0.0);
        n += static_cast<double>(d.rows());
    }
    CHECK(left / n > 0.4);
    CHECK(left / n < 0.7);
    CHECK(right / n > 0.4);
    CHECK(right / n < 0.7);
    // A walk always has a supporting foot.
    CHECK(both_off / n < 0.1);
}

TEST_CASE("two-bone IK reaches reachable targets and keeps segment lengths") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n;
    for (int i = 0; i < 100; ++i) {
        const Vec3 a(n(rng), 1.0 + n(rng), n(rng));
        const Vec3 b = a + Vec3(0.1 * n(rng), -0.45, 0.1 * n(rng));
        const Vec3 c = b + Vec3(0.1 * n(rng), -0.4, 0.1 * n(rng));
        const double l1 = (b - a).norm(), l2 = (c - b).norm();
        Vec3 dir(n(rng), n(rng), n(rng));
        dir.normalize();
        const double reach = std::uniform_real_distribution<double>(std::abs(l1 - l2) + 0.02, l1 + l2 - 0.02)(rng);
        const Vec3 target = a + reach * dir;
        const Mat3 aw = Mat3::Identity(), bw = Mat3::Identity();
        const auto sol = solve_two_bone_ik(a, b, c, aw, bw, target, Vec3::UnitX());
        // Child offsets are expressed in the parent's world frame, so the new
        // chain is a -> a + R_hip (b - a) -> that + R_knee (c - b).
        const Vec3 b1 = a + sol.hip_world * (b - a);
        const Vec3 c1 = b1 + sol.knee_world * (c - b);
        CHECK((c1 - target).norm() < 1e-9);
        CHECK((b1 - a).norm() == doctest::Approx(l1).epsilon(1e-12));
        CHECK((c1 - b1).norm() == doctest::Approx(l2).epsilon(1e-12));
        CHECK_FALSE(sol.clamped);
    }
}

TEST_CASE("two-bone IK clamps out-of-reach targets and flags them") {
    const Vec3 a(0, 1, 0), b(0, 0.5, 0.01), c(0, 0, 0);
    const auto sol = solve_two_bone_ik(a, b, c, Mat3::Identity(), Mat3::Identity(), Vec3(0, -5, 0), Vec3::UnitX());
    CHECK(sol.clamped);
    const Vec3 b1 = a + sol.hip_world * (b - a);
    const Vec3 c1 = b1 + sol.knee_world * (c - b);
    CHECK((b1 - a).norm() == doctest::Approx((b - a).norm()).epsilon(1e-12));
    CHECK((c1 - b1).norm() == doctest::Approx((c - b).norm()).epsilon(1e-12));
    CHECK((c1 - a).norm() == doctest::Approx((b - a).norm() + (c - b).norm()).epsilon(1e-6));
    CHECK(c1.y() < a.y());
}

TEST_CASE("two-bone IK bends a straight leg about the hint axis") {
    const Vec3 a(0, 1, 0), b(0, 0.5, 0), c(0, 0, 0);
    const auto sol = solve_two_bone_ik(a, b, c, Mat3::Identity(), Mat3::Identity(), Vec3(0, 0.2, 0), Vec3::UnitX());
    const Vec3 b1 = a + sol.hip_world * (b - a);
    const Vec3 c1 = b1 + sol.knee_world * (c - b);
    CHECK((c1 - Vec3(0, 0.2, 0)).norm() < 1e-9);
    CHECK(std::abs(b1.x()) < 1e-12);  // bend stays in the plane normal to the hint
}

}
