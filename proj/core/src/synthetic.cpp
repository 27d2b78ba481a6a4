#include "motiondiff/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include "motiondiff/error.hpp"

namespace motiondiff {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kAnkleHeight = 0.08;
constexpr double kThigh = 0.45;
constexpr double kShin = 0.43;
constexpr double kHipWidth = 0.09;

enum Joint { hips, l_up_leg, l_leg, l_foot, r_up_leg, r_leg, r_foot, spine, chest, neck, head, l_arm, l_fore, r_arm, r_fore };

struct Gait {
    const char* name;
    double speed;      // m/s
    double cadence;    // gait cycles per second
    double duty;       // stance fraction of a cycle
    double height;     // pelvis height
    double bob;        // pelvis vertical amplitude
    double clearance;  // swing foot apex
    double arm;        // shoulder swing amplitude
    double elbow;      // resting elbow flexion
    double knee_lift;  // extra forward reach of the swing foot
    bool in_phase;     // both feet share one phase
};

// walk, run, jump, kick, punch, march
constexpr std::array<Gait, 6> kGaits{{
    {"walk", 1.1, 0.9, 0.58, 0.92, 0.020, 0.08, 0.35, 0.25, 0.0, false},
    {"run", 2.4, 1.4, 0.35, 0.88, 0.040, 0.18, 0.55, 1.30, 0.0, false},
    {"jump", 0.5, 1.2, 0.50, 0.90, 0.110, 0.12, 0.80, 0.40, 0.0, true},
    {"kick", 0.4, 0.7, 0.65, 0.92, 0.015, 0.10, 0.25, 0.50, 0.35, false},
    {"punch", 0.0, 1.2, 1.00, 0.88, 0.015, 0.00, 0.00, 1.60, 0.0, false},
    {"march", 0.9, 0.8, 0.60, 0.93, 0.015, 0.25, 0.65, 0.10, 0.0, false},
}};

struct Style {
    const char* name;
    double speed, cadence, arm, lean, head, clearance, bob, spread, sway;
};

constexpr std::array<Style, 8> kStyles{{
    {"neutral", 1.00, 1.00, 1.0, 0.00, 0.00, 1.0, 1.0, 1.0, 0.00},
    {"angry", 1.15, 1.10, 1.5, 0.15, 0.10, 1.2, 1.3, 1.2, 0.00},
    {"childlike", 0.90, 1.30, 1.3, -0.05, 0.05, 1.5, 1.6, 0.8, 0.05},
    {"depressed", 0.70, 0.80, 0.3, 0.30, 0.45, 0.5, 0.5, 0.9, 0.00},
    {"old", 0.60, 0.90, 0.4, 0.25, 0.20, 0.5, 0.4, 1.3, 0.00},
    {"proud", 1.00, 0.95, 1.1, -0.15, -0.20, 1.0, 0.8, 1.1, 0.00},
    {"sexy", 0.90, 1.00, 0.8, -0.05, 0.00, 0.9, 1.0, 0.5, 0.15},
    {"strutting", 1.05, 1.00, 1.4, -0.10, -0.10, 1.3, 1.2, 1.0, 0.10},
}};

double smoothstep(double s) { return s * s * (3.0 - 2.0 * s); }

double frac(double x) { return x - std::floor(x); }

struct ClipParams {
    Gait g;
    double lean, head, spread, sway;
    double yaw_rate;
    double phase;
    double arm_phase;
};

// Planar body trajectory integrated with the same forward-Euler rule the
// kinematics use, extended `pad` frames on both sides.
struct Trajectory {
    int pad = 0;
    double dt = kDefaultFrameTime;
    std::vector<Vec3> pos;  // ground-plane position (y = 0)
    std::vector<double> heading;

    Trajectory(int frames, int pad_frames, double speed, double yaw_rate, double frame_time)
        : pad(pad_frames), dt(frame_time) {
        const int n = frames + 2 * pad;
        pos.assign(static_cast<std::size_t>(n), Vec3::Zero());
        heading.assign(static_cast<std::size_t>(n), 0.0);
        auto step = [&](double h) -> Vec3 { return Vec3(std::sin(h), 0.0, std::cos(h)) * (speed * dt); };
        for (int k = pad + 1; k < n; ++k) {
            const auto i = static_cast<std::size_t>(k);
            heading[i] = heading[i - 1] + yaw_rate * dt;
            pos[i] = pos[i - 1] + step(heading[i - 1]);
        }
        for (int k = pad - 1; k >= 0; --k) {
            const auto i = static_cast<std::size_t>(k);
            heading[i] = heading[i + 1] - yaw_rate * dt;
            pos[i] = pos[i + 1] - step(heading[i]);
        }
    }

    // Linear interpolation at a (possibly fractional) frame index.
    std::pair<Vec3, double> at(double frame) const {
        const double q = std::clamp(frame + pad, 0.0, static_cast<double>(pos.size() - 1));
        const auto i = static_cast<std::size_t>(std::min(std::floor(q), static_cast<double>(pos.size() - 2)));
        const double w = q - static_cast<double>(i);
        return {pos[i] * (1.0 - w) + pos[i + 1] * w, heading[i] * (1.0 - w) + heading[i + 1] * w};
    }
};

struct FootState {
    Vec3 target;
    double heading = 0.0;
    bool contact = false;
};

// `t` is gait time; trajectory frame k sits at gait time t0 + k * dt.
FootState foot_state(const ClipParams& p, const Trajectory& traj, double t, double t0, double offset, double side,
                     bool kicking) {
    const Gait& g = p.g;
    const double u = g.cadence * t + offset;
    const double n = std::floor(u);
    const double phi = u - n;
    auto anchor = [&](double cycle) {
        const double tm = (cycle + g.duty / 2.0 - offset) / g.cadence;
        auto [pos, h] = traj.at((tm - t0) / traj.dt);
        const Vec3 lateral = rot_y(h) * Vec3(side * kHipWidth * p.spread, 0.0, 0.0);
        return std::pair<Vec3, double>{pos + lateral + Vec3(0.0, kAnkleHeight, 0.0), h};
    };
    FootState fs;
    if (phi < g.duty) {
        auto [a, h] = anchor(n);
        fs.target = a;
        fs.heading = h;
        fs.contact = true;
        return fs;
    }
    const double s = (phi - g.duty) / (1.0 - g.duty);
    auto [a0, h0] = anchor(n);
    auto [a1, h1] = anchor(n + 1.0);
    const double w = smoothstep(s);
    const double arc = std::sin(std::numbers::pi * s);
    fs.heading = h0 * (1.0 - w) + h1 * w;
    fs.target = a0 * (1.0 - w) + a1 * w + Vec3(0.0, g.clearance * arc, 0.0);
    if (kicking) fs.target += rot_y(fs.heading) * Vec3(0.0, 0.6 * g.knee_lift * arc, g.knee_lift * arc);
    return fs;
}

struct LegPose {
    Vec3 hip, knee, ankle;  // euler (z, x, y)
};

// Hip rotation Rz(a) Rx(b) and knee flexion about x put the ankle at `d`, the
// ankle target expressed in the pelvis frame relative to the hip joint.
LegPose solve_leg(const Vec3& d_raw, const Mat3& pelvis_world, const Mat3& foot_world) {
    Vec3 d = d_raw;
    const double reach = kThigh + kShin - 1e-6;
    if (d.norm() > reach) d *= reach / d.norm();
    const double c = std::clamp((d.squaredNorm() - kThigh * kThigh - kShin * kShin) / (2.0 * kThigh * kShin), -1.0, 1.0);
    const double knee = std::acos(c);
    const double uy = -kThigh - kShin * std::cos(knee);
    const double uz = -kShin * std::sin(knee);
    const double yp = -std::hypot(d.x(), d.y());
    const double a = std::atan2(d.x(), -d.y());
    const double b = std::atan2(d.z(), yp) - std::atan2(uz, uy);
    LegPose lp;
    lp.hip = Vec3(a, b, 0.0);
    lp.knee = Vec3(0.0, knee, 0.0);
    const Mat3 shin_world = pelvis_world * euler_zxy_to_matrix(a, b, 0.0) * rot_x(knee);
    lp.ankle = matrix_to_euler_zxy(shin_world.transpose() * foot_world);
    return lp;
}

void put(MotionClip& clip, int frame, int joint, const Vec3& zxy) {
    clip.rotations.row(frame).segment(3 * joint, 3) = zxy.transpose();
}

MotionClip synthesize(const ClipParams& p, int frames, std::mt19937_64& rng) {
    const Gait& g = p.g;
    const double dt = kDefaultFrameTime;
    MotionClip clip;
    clip.frame_time = dt;
    clip.rotations = Matrix::Zero(frames, 3 * 15);
    clip.root = Matrix::Zero(frames, kRootChannels);
    clip.foot_contact = Matrix::Zero(frames, 2);

    const int pad = static_cast<int>(std::ceil(2.0 / (std::max(g.cadence, 0.1) * dt))) + 2;
    const Trajectory traj(frames, pad, g.speed, p.yaw_rate, dt);
    std::normal_distribution<double> jitter(0.0, 0.01);
    const double t0 = p.phase / g.cadence;

    for (int k = 0; k < frames; ++k) {
        const double t = t0 + k * dt;
        const double cyc = g.cadence * t;
        auto [ground, heading] = traj.at(k);

        double height = g.height;
        if (g.in_phase) {
            const double phi = frac(cyc);
            height += phi < g.duty ? -g.bob * std::sin(std::numbers::pi * phi / g.duty)
                                   : g.bob * std::sin(std::numbers::pi * (phi - g.duty) / (1.0 - g.duty));
        } else {
            height += g.bob * std::cos(2.0 * kTwoPi * cyc);
        }

        const double sway = p.sway * std::sin(kTwoPi * cyc);
        const double twist = 0.08 * std::sin(kTwoPi * cyc) * (g.in_phase ? 0.0 : 1.0);
        const Mat3 pelvis_local = euler_zxy_to_matrix(sway, 0.3 * p.lean, twist);
        const Mat3 pelvis_world = rot_y(heading) * pelvis_local;
        const Vec3 pelvis_pos = ground + Vec3(0.0, height, 0.0);

        clip.root(k, 0) = 0.0;
        clip.root(k, 1) = g.speed;
        clip.root(k, 2) = height;
        clip.root(k, 3) = p.yaw_rate;
        put(clip, k, hips, matrix_to_euler_zxy(pelvis_local));

        const double offsets[2] = {0.0, g.in_phase ? 0.0 : 0.5};
        const int foot_joint[2] = {l_foot, r_foot};
        const int hip_joint[2] = {l_up_leg, r_up_leg};
        const double side[2] = {1.0, -1.0};
        for (int i = 0; i < 2; ++i) {
            const FootState fs = foot_state(p, traj, t, t0, offsets[i], side[i], g.knee_lift > 0.0 && i == 1);
            const Vec3 hip_pos = pelvis_pos + pelvis_world * Vec3(side[i] * kHipWidth, -0.07, 0.0);
            const Vec3 d = pelvis_world.transpose() * (fs.target - hip_pos);
            const LegPose lp = solve_leg(d, pelvis_world, rot_y(fs.heading));
            put(clip, k, hip_joint[i], lp.hip);
            put(clip, k, hip_joint[i] + 1, lp.knee);
            put(clip, k, foot_joint[i], lp.ankle);
            clip.foot_contact(k, i) = fs.contact ? 1.0 : 0.0;
        }

        const double swing = std::sin(kTwoPi * cyc + p.arm_phase);
        put(clip, k, spine, Vec3(0.0, 0.5 * p.lean + jitter(rng), -0.7 * twist + jitter(rng)));
        put(clip, k, chest, Vec3(jitter(rng), 0.3 * p.lean + jitter(rng), -0.5 * twist));
        put(clip, k, neck, Vec3(0.0, 0.5 * p.head + jitter(rng), 0.0));
        put(clip, k, head, Vec3(jitter(rng), 0.5 * p.head - 0.4 * p.lean + jitter(rng), 0.0));

        double l_shoulder = -g.arm * swing;
        double r_shoulder = g.arm * swing;
        double l_elbow = g.elbow, r_elbow = g.elbow;
        if (g.in_phase) {
            const double lift = -g.arm * (0.5 + 0.5 * std::cos(kTwoPi * cyc));
            l_shoulder = r_shoulder = lift;
        }
        if (g.speed == 0.0) {
            // Alternating jabs: shoulder raises forward while the elbow extends.
            const double l_jab = std::pow(std::max(0.0, std::sin(kTwoPi * cyc)), 2.0);
            const double r_jab = std::pow(std::max(0.0, -std::sin(kTwoPi * cyc)), 2.0);
            l_shoulder = -0.4 - 1.1 * l_jab;
            r_shoulder = -0.4 - 1.1 * r_jab;
            l_elbow = g.elbow * (1.0 - 0.9 * l_jab);
            r_elbow = g.elbow * (1.0 - 0.9 * r_jab);
        }
        const double abduct = 0.12 * p.spread;
        put(clip, k, l_arm, Vec3(abduct + jitter(rng), l_shoulder + jitter(rng), 0.0));
        put(clip, k, r_arm, Vec3(-abduct + jitter(rng), r_shoulder + jitter(rng), 0.0));
        put(clip, k, l_fore, Vec3(0.0, -l_elbow + jitter(rng), 0.0));
        put(clip, k, r_fore, Vec3(0.0, -r_elbow + jitter(rng), 0.0));
    }
    return clip;
}

}  // namespace

SkeletonDef make_synthetic_skeleton() {
    SkeletonDef s;
    auto add = [&](const char* name, int parent, Vec3 offset) {
        s.joint_names.emplace_back(name);
        s.parent_index.push_back(parent);
        s.offsets.push_back(offset);
        s.end_sites.emplace_back();
    };
    add("Hips", -1, Vec3(0.0, 0.0, 0.0));
    add("LeftUpLeg", hips, Vec3(kHipWidth, -0.07, 0.0));
    add("LeftLeg", l_up_leg, Vec3(0.0, -kThigh, 0.0));
    add("LeftFoot", l_leg, Vec3(0.0, -kShin, 0.0));
    add("RightUpLeg", hips, Vec3(-kHipWidth, -0.07, 0.0));
    add("RightLeg", r_up_leg, Vec3(0.0, -kThigh, 0.0));
    add("RightFoot", r_leg, Vec3(0.0, -kShin, 0.0));
    add("Spine", hips, Vec3(0.0, 0.12, 0.0));
    add("Chest", spine, Vec3(0.0, 0.20, 0.0));
    add("Neck", chest, Vec3(0.0, 0.22, 0.0));
    add("Head", neck, Vec3(0.0, 0.12, 0.0));
    add("LeftArm", chest, Vec3(0.17, 0.18, 0.0));
    add("LeftForeArm", l_arm, Vec3(0.0, -0.28, 0.0));
    add("RightArm", chest, Vec3(-0.17, 0.18, 0.0));
    add("RightForeArm", r_arm, Vec3(0.0, -0.28, 0.0));
    s.end_sites[l_foot] = Vec3(0.0, -kAnkleHeight, 0.12);
    s.end_sites[r_foot] = Vec3(0.0, -kAnkleHeight, 0.12);
    s.end_sites[head] = Vec3(0.0, 0.15, 0.0);
    s.end_sites[l_fore] = Vec3(0.0, -0.25, 0.0);
    s.end_sites[r_fore] = Vec3(0.0, -0.25, 0.0);
    s.foot_joint_indices = {l_foot, r_foot};
    return s;
}

std::vector<std::string> synthetic_content_names(int content_classes) {
    std::vector<std::string> out;
    for (int c = 0; c < content_classes; ++c) {
        std::string name = kGaits[static_cast<std::size_t>(c) % kGaits.size()].name;
        if (c >= static_cast<int>(kGaits.size())) name += "_" + std::to_string(c / static_cast<int>(kGaits.size()));
        out.push_back(name);
    }
    return out;
}

std::vector<std::string> synthetic_style_names(int style_classes) {
    std::vector<std::string> out;
    for (int s = 0; s < style_classes; ++s) {
        std::string name = kStyles[static_cast<std::size_t>(s) % kStyles.size()].name;
        if (s >= static_cast<int>(kStyles.size())) name += "_" + std::to_string(s / static_cast<int>(kStyles.size()));
        out.push_back(name);
    }
    return out;
}

std::vector<MotionClip> generate_synthetic(int num_clips, int content_classes, int style_classes, std::uint64_t seed,
                                           int frames) {
    if (num_clips < 0) throw UsageError("num_clips must be non-negative");
    if (content_classes < 1 || style_classes < 1) throw UsageError("content and style class counts must be >= 1");
    if (frames < 3) throw UsageError("synthetic clips need at least 3 frames");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);

    std::vector<MotionClip> clips;
    clips.reserve(static_cast<std::size_t>(num_clips));
    for (int i = 0; i < num_clips; ++i) {
        const int content = i % content_classes;
        const int style = (i / content_classes) % style_classes;
        const Style& st = kStyles[static_cast<std::size_t>(style) % kStyles.size()];
        const int repeat_c = content / static_cast<int>(kGaits.size());
        const int repeat_s = style / static_cast<int>(kStyles.size());

        ClipParams p;
        p.g = kGaits[static_cast<std::size_t>(content) % kGaits.size()];
        Gait& g = p.g;
        const double speed_scale = st.speed * (1.0 + 0.15 * repeat_c + 0.1 * repeat_s) * (1.0 + 0.05 * normal(rng));
        const double cadence_scale = st.cadence * (1.0 + 0.05 * normal(rng));
        g.speed *= speed_scale;
        g.cadence *= cadence_scale;
        g.arm *= st.arm * (1.0 + 0.1 * normal(rng));
        g.clearance *= st.clearance;
        g.bob *= st.bob;
        p.lean = st.lean + 0.03 * normal(rng);
        p.head = st.head + 0.03 * normal(rng);
        p.spread = st.spread * (1.0 + 0.05 * normal(rng));
        p.sway = st.sway;
        p.phase = uniform(rng);
        p.arm_phase = 0.1 * normal(rng);
        p.yaw_rate = g.speed > 0.0 ? 0.1 * normal(rng) : 0.0;

        MotionClip clip = synthesize(p, frames, rng);
        clip.content = content;
        clip.style = style;
        clips.push_back(std::move(clip));
    }
    return clips;
}

}  // namespace motiondiff
