#include "motiondiff/postprocess.hpp"

#include <cmath>
#include <optional>

#include "motiondiff/error.hpp"

namespace motiondiff {

namespace {

// Maps any integer index onto [0, n) by half-sample symmetric reflection.
int reflect_index(int i, int n) {
    const int period = 2 * n;
    int m = i % period;
    if (m < 0) m += period;
    return m < n ? m : period - 1 - m;
}

struct Run {
    int begin = 0;  // inclusive
    int end = 0;    // exclusive
};

std::vector<Run> contact_runs(const Matrix& contacts, int foot) {
    std::vector<Run> runs;
    const int frames = static_cast<int>(contacts.rows());
    for (int f = 0; f < frames;) {
        if (contacts(f, foot) > 0.5) {
            Run r{f, f};
            while (r.end < frames && contacts(r.end, foot) > 0.5) ++r.end;
            runs.push_back(r);
            f = r.end;
        } else {
            ++f;
        }
    }
    return runs;
}

void check_contacts(const MotionClip& clip, const SkeletonDef& skeleton, const Matrix& contacts) {
    if (contacts.rows() != clip.num_frames() || contacts.cols() != skeleton.num_feet()) {
        throw DataError("contact matrix must be frames x feet");
    }
    if (clip.num_joints() != skeleton.num_joints()) throw DataError("clip joint count does not match skeleton");
}

}  // namespace

std::vector<double> gaussian_kernel(double sigma) {
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw UsageError("filter sigma must be finite and non-negative");
    if (sigma == 0.0) return {1.0};
    const int radius = static_cast<int>(std::ceil(4.0 * sigma));
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
        k[static_cast<std::size_t>(i + radius)] = v;
        sum += v;
    }
    for (double& v : k) v /= sum;
    return k;
}

MotionClip gaussian_filter(const MotionClip& clip, double sigma) {
    const std::vector<double> k = gaussian_kernel(sigma);
    MotionClip out = clip;
    const int n = clip.num_frames();
    if (k.size() == 1 || n == 0) return out;
    const int radius = static_cast<int>(k.size() / 2);
    for (int f = 0; f < n; ++f) {
        RowVector acc = RowVector::Zero(clip.rotations.cols());
        for (int i = -radius; i <= radius; ++i) {
            acc += k[static_cast<std::size_t>(i + radius)] * clip.rotations.row(reflect_index(f + i, n));
        }
        out.rotations.row(f) = acc;
    }
    return out;
}

IkResult ik_foot_cleanup(const MotionClip& clip, const SkeletonDef& skeleton, const Matrix& contacts) {
    check_contacts(clip, skeleton, contacts);
    IkResult result{clip, {}};
    const int frames = clip.num_frames();
    if (frames == 0) return result;
    const auto poses = world_poses(skeleton, clip);
    const auto roots = integrate_root(clip);
    constexpr double kWeights[kIkBlendFrames] = {0.75, 0.5, 0.25};

    for (int foot = 0; foot < skeleton.num_feet(); ++foot) {
        const int foot_joint = skeleton.foot_joint_indices[static_cast<std::size_t>(foot)];
        const auto [hip, knee, ankle] = skeleton.leg_chain(foot_joint);
        const auto at = [](int j) { return static_cast<std::size_t>(j); };
        const auto runs = contact_runs(contacts, foot);
        result.report.runs += static_cast<int>(runs.size());

        std::vector<std::optional<Vec3>> delta(static_cast<std::size_t>(frames));
        for (const Run& r : runs) {
            Vec3 mean = Vec3::Zero();
            for (int f = r.begin; f < r.end; ++f) mean += poses[at(f)].position[at(ankle)];
            mean /= static_cast<double>(r.end - r.begin);
            for (int f = r.begin; f < r.end; ++f) delta[at(f)] = mean - poses[at(f)].position[at(ankle)];
        }
        // Fade the edge corrections into neighbouring free frames; the nearer run wins.
        std::vector<int> fade_distance(static_cast<std::size_t>(frames), kIkBlendFrames + 1);
        std::vector<Vec3> fade(static_cast<std::size_t>(frames), Vec3::Zero());
        for (const Run& r : runs) {
            for (int d = 1; d <= kIkBlendFrames; ++d) {
                for (const auto& [f, edge] : {std::pair{r.begin - d, r.begin}, std::pair{r.end - 1 + d, r.end - 1}}) {
                    if (f < 0 || f >= frames || delta[at(f)] || d >= fade_distance[at(f)]) continue;
                    fade_distance[at(f)] = d;
                    fade[at(f)] = kWeights[d - 1] * *delta[at(edge)];
                }
            }
        }
        for (int f = 0; f < frames; ++f) {
            if (!delta[at(f)] && fade_distance[at(f)] <= kIkBlendFrames) delta[at(f)] = fade[at(f)];
        }

        for (int f = 0; f < frames; ++f) {
            const auto& d = delta[at(f)];
            if (!d || d->norm() < 1e-12) continue;
            const WorldPose& p = poses[at(f)];
            const Vec3 bend_hint = p.rotation[at(hip)].col(0);
            const TwoBoneSolution s = solve_two_bone_ik(p.position[at(hip)], p.position[at(knee)], p.position[at(ankle)],
                                                        p.rotation[at(hip)], p.rotation[at(knee)],
                                                        p.position[at(ankle)] + *d, bend_hint);
            const Mat3 parent_world = hip == 0 ? rot_y(roots[at(f)].heading)
                                               : p.rotation[at(skeleton.parent_index[at(hip)])];
            set_joint_rotation(result.clip, f, hip, parent_world.transpose() * s.hip_world);
            set_joint_rotation(result.clip, f, knee, s.hip_world.transpose() * s.knee_world);
            ++result.report.solved_frames;
            if (s.clamped) ++result.report.clamped_frames;
        }
    }
    return result;
}

double contact_foot_drift(const MotionClip& clip, const SkeletonDef& skeleton, const Matrix& contacts) {
    check_contacts(clip, skeleton, contacts);
    const Matrix pos = forward_kinematics(skeleton, clip);
    double total = 0.0;
    int count = 0;
    for (int foot = 0; foot < skeleton.num_feet(); ++foot) {
        const int j = skeleton.foot_joint_indices[static_cast<std::size_t>(foot)];
        for (Eigen::Index f = 1; f < pos.rows(); ++f) {
            if (contacts(f, foot) <= 0.5 || contacts(f - 1, foot) <= 0.5) continue;
            total += (pos.row(f).segment(3 * j, 3) - pos.row(f - 1).segment(3 * j, 3)).norm();
            ++count;
        }
    }
    return count ? total / count : 0.0;
}

}  // namespace motiondiff
