#include "motiondiff/dataset.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "binary_io.hpp"
#include "json_io.hpp"
#include "motiondiff/error.hpp"
#include "motiondiff/synthetic.hpp"

namespace motiondiff {

namespace {

constexpr std::uint32_t kDatasetVersion = 1;

RowVector floored_std(const Matrix& m, const RowVector& mean) {
    RowVector var = (m.rowwise() - mean).array().square().colwise().mean();
    return var.array().sqrt().max(kStdFloor);
}

}  // namespace

DatasetStats compute_dataset_stats(const std::vector<MotionClip>& clips) {
    if (clips.empty()) throw DataError("cannot compute statistics of an empty dataset");
    Eigen::Index rows = 0;
    for (const auto& c : clips) rows += c.rotations.rows();
    const Eigen::Index rc = clips.front().rotations.cols();
    Matrix rot(rows, rc), root(rows, kRootChannels);
    Eigen::Index r = 0;
    for (const auto& c : clips) {
        if (c.rotations.cols() != rc) throw DataError("clips have different rotation channel counts");
        rot.middleRows(r, c.rotations.rows()) = c.rotations;
        root.middleRows(r, c.root.rows()) = c.root;
        r += c.rotations.rows();
    }
    DatasetStats st;
    st.rot_mean = rot.colwise().mean();
    st.root_mean = root.colwise().mean();
    st.rot_std = floored_std(rot, st.rot_mean);
    st.root_std = floored_std(root, st.root_mean);
    return st;
}

void normalize_clip(MotionClip& clip, const DatasetStats& stats) {
    if (stats.rot_mean.size() != clip.rotations.cols() || stats.root_mean.size() != clip.root.cols()) {
        throw DataError("statistics do not match clip channel counts");
    }
    clip.rotations = ((clip.rotations.rowwise() - stats.rot_mean).array().rowwise() / stats.rot_std.array()).matrix();
    clip.root = ((clip.root.rowwise() - stats.root_mean).array().rowwise() / stats.root_std.array()).matrix();
}

void denormalize_clip(MotionClip& clip, const DatasetStats& stats) {
    if (stats.rot_mean.size() != clip.rotations.cols() || stats.root_mean.size() != clip.root.cols()) {
        throw DataError("statistics do not match clip channel counts");
    }
    clip.rotations = ((clip.rotations.array().rowwise() * stats.rot_std.array()).rowwise() + stats.rot_mean.array()).matrix();
    clip.root = ((clip.root.array().rowwise() * stats.root_std.array()).rowwise() + stats.root_mean.array()).matrix();
}

WindowResult window_and_normalize(const std::vector<MotionClip>& sequences, const SkeletonDef& skeleton,
                                  const std::optional<DatasetStats>& stats, const WindowOptions& options) {
    if (options.window < 3) throw UsageError("window must be at least 3 frames");
    if (options.stride < 1) throw UsageError("stride must be positive");
    for (const auto& s : sequences) {
        if (s.num_frames() < options.window) {
            throw DataError("sequence has " + std::to_string(s.num_frames()) + " frames, fewer than the window of " +
                            std::to_string(options.window));
        }
        if (s.num_joints() != skeleton.num_joints()) throw DataError("sequence joint count does not match skeleton");
    }

    ContactThresholds th{options.height_thresh, options.speed_thresh};
    if (!options.keep_contacts && (th.height <= 0.0 || th.speed <= 0.0)) {
        const ContactThresholds cal = calibrate_contact_thresholds(skeleton, sequences);
        if (th.height <= 0.0) th.height = cal.height;
        if (th.speed <= 0.0) th.speed = cal.speed;
    }

    WindowResult out;
    for (const auto& s : sequences) {
        Matrix contacts = s.foot_contact;
        if (!options.keep_contacts) {
            contacts = detect_foot_contacts(skeleton, forward_kinematics(skeleton, s), s.frame_time, th.height, th.speed);
        }
        for (int start = 0; start + options.window <= s.num_frames(); start += options.stride) {
            MotionClip w;
            w.rotations = s.rotations.middleRows(start, options.window);
            w.root = s.root.middleRows(start, options.window);
            w.foot_contact = contacts.middleRows(start, options.window);
            w.content = s.content;
            w.style = s.style;
            w.frame_time = s.frame_time;
            out.clips.push_back(std::move(w));
        }
    }
    out.stats = stats ? *stats : compute_dataset_stats(out.clips);
    for (auto& c : out.clips) normalize_clip(c, out.stats);
    return out;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
    const int frames = ds.clips.empty() ? kClipFrames : ds.clips.front().num_frames();
    const int rot = ds.skeleton.rotation_channels();
    const int feet = ds.skeleton.num_feet();
    for (const auto& c : ds.clips) {
        if (c.num_frames() != frames || c.rotations.cols() != rot || c.foot_contact.cols() != feet) {
            throw DataError("dataset clips have inconsistent shapes");
        }
    }
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot write dataset " + path.string());
    io::put_magic(os, "MDL1");
    io::put_u32(os, kDatasetVersion);
    io::put_u32(os, static_cast<std::uint32_t>(ds.clips.size()));
    io::put_u32(os, static_cast<std::uint32_t>(frames));
    io::put_u32(os, static_cast<std::uint32_t>(rot));
    io::put_u32(os, static_cast<std::uint32_t>(kRootChannels));
    io::put_u32(os, static_cast<std::uint32_t>(feet));
    auto put_block = [&](auto member) {
        for (const auto& c : ds.clips) {
            const Matrix& m = c.*member;
            for (Eigen::Index i = 0; i < m.rows(); ++i)
                for (Eigen::Index j = 0; j < m.cols(); ++j) io::put_f32(os, static_cast<float>(m(i, j)));
        }
    };
    put_block(&MotionClip::rotations);
    put_block(&MotionClip::root);
    put_block(&MotionClip::foot_contact);
    for (const auto& c : ds.clips) io::put_i32(os, c.content);
    for (const auto& c : ds.clips) io::put_i32(os, c.style);
    if (!os) throw DataError("failed writing dataset " + path.string());

    nlohmann::json side;
    side["format"] = "MDL1";
    side["version"] = kDatasetVersion;
    side["content_names"] = ds.content_names;
    side["style_names"] = ds.style_names;
    side["frame_time"] = ds.frame_time;
    side["stats"] = jsonio::stats_to_json(ds.stats);
    side["skeleton"] = jsonio::skeleton_to_json(ds.skeleton);
    std::ofstream js(path.string() + ".json", std::ios::trunc);
    if (!js) throw DataError("cannot write dataset sidecar " + path.string() + ".json");
    js << side.dump(2) << '\n';
}

Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open dataset " + path.string());
    const std::string what = "dataset " + path.string();
    io::expect_magic(is, "MDL1", what);
    const std::uint32_t version = io::get_u32(is, what);
    if (version != kDatasetVersion) throw DataError(what + ": unsupported version " + std::to_string(version));
    const auto n = io::get_u32(is, what);
    const auto frames = static_cast<int>(io::get_u32(is, what));
    const auto rot = static_cast<int>(io::get_u32(is, what));
    const auto rootc = static_cast<int>(io::get_u32(is, what));
    const auto feet = static_cast<int>(io::get_u32(is, what));
    if (rootc != kRootChannels) throw DataError(what + ": expected 4 root channels");
    if (frames < 1 || rot < 3 || rot % 3 != 0) throw DataError(what + ": invalid shape header");
    const std::uintmax_t expected = 28ull + 4ull * n * (static_cast<std::uintmax_t>(frames) * (rot + rootc + feet) + 2);
    if (std::filesystem::file_size(path) != expected) throw DataError(what + ": size does not match header");

    Dataset ds;
    ds.clips.resize(n);
    for (auto& c : ds.clips) {
        c.rotations.resize(frames, rot);
        c.root.resize(frames, rootc);
        c.foot_contact.resize(frames, feet);
    }
    auto get_block = [&](auto member) {
        for (auto& c : ds.clips) {
            Matrix& m = c.*member;
            for (Eigen::Index i = 0; i < m.rows(); ++i)
                for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = io::get_f32(is, what);
        }
    };
    get_block(&MotionClip::rotations);
    get_block(&MotionClip::root);
    get_block(&MotionClip::foot_contact);
    for (auto& c : ds.clips) c.content = io::get_i32(is, what);
    for (auto& c : ds.clips) c.style = io::get_i32(is, what);

    std::ifstream js(path.string() + ".json");
    if (!js) throw DataError("missing dataset sidecar " + path.string() + ".json");
    nlohmann::json side;
    try {
        side = nlohmann::json::parse(js);
        ds.content_names = side.at("content_names").get<std::vector<std::string>>();
        ds.style_names = side.at("style_names").get<std::vector<std::string>>();
        ds.frame_time = side.at("frame_time").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(what + ": invalid sidecar: " + e.what());
    }
    ds.stats = jsonio::stats_from_json(side.at("stats"));
    ds.skeleton = jsonio::skeleton_from_json(side.at("skeleton"));
    if (ds.skeleton.rotation_channels() != rot || ds.skeleton.num_feet() != feet) {
        throw DataError(what + ": sidecar skeleton does not match tensor shapes");
    }
    if (ds.stats.rot_mean.size() != rot) throw DataError(what + ": statistics do not match tensor shapes");
    for (auto& c : ds.clips) {
        c.frame_time = ds.frame_time;
        if (c.content < 0 || c.content >= ds.num_contents() || c.style < 0 || c.style >= ds.num_styles()) {
            throw DataError(what + ": clip label out of range");
        }
        if (!c.rotations.allFinite() || !c.root.allFinite()) throw DataError(what + ": non-finite values");
    }
    return ds;
}

Dataset make_synthetic_dataset(int num_clips, int content_classes, int style_classes, std::uint64_t seed) {
    Dataset ds;
    ds.skeleton = make_synthetic_skeleton();
    ds.content_names = synthetic_content_names(content_classes);
    ds.style_names = synthetic_style_names(style_classes);
    WindowOptions opt;
    opt.keep_contacts = true;
    opt.stride = kClipFrames;
    auto result = window_and_normalize(generate_synthetic(num_clips, content_classes, style_classes, seed), ds.skeleton,
                                       std::nullopt, opt);
    ds.clips = std::move(result.clips);
    ds.stats = std::move(result.stats);
    return ds;
}

Batch make_batch(const std::vector<MotionClip>& clips, std::span<const int> indices) {
    if (indices.empty()) throw UsageError("empty batch");
    const MotionClip& first = clips.at(static_cast<std::size_t>(indices[0]));
    Batch b;
    b.frames = first.num_frames();
    const auto rows = static_cast<Eigen::Index>(indices.size()) * b.frames;
    b.x0.resize(rows, first.rotations.cols());
    b.root.resize(rows, first.root.cols());
    b.foot.resize(rows, first.foot_contact.cols());
    Eigen::Index r = 0;
    for (int i : indices) {
        const MotionClip& c = clips.at(static_cast<std::size_t>(i));
        if (c.num_frames() != b.frames || c.rotations.cols() != b.x0.cols()) throw DataError("batch clips differ in shape");
        b.x0.middleRows(r, b.frames) = c.rotations;
        b.root.middleRows(r, b.frames) = c.root;
        b.foot.middleRows(r, b.frames) = c.foot_contact;
        b.content.push_back(c.content);
        b.style.push_back(c.style);
        r += b.frames;
    }
    return b;
}

Batch make_batch(const std::vector<MotionClip>& clips) {
    std::vector<int> idx(clips.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    return make_batch(clips, idx);
}

std::vector<MotionClip> unstack_batch(const Batch& b, double frame_time) {
    std::vector<MotionClip> out(static_cast<std::size_t>(b.size()));
    for (int i = 0; i < b.size(); ++i) {
        MotionClip& c = out[static_cast<std::size_t>(i)];
        c.rotations = b.x0.middleRows(static_cast<Eigen::Index>(i) * b.frames, b.frames);
        c.root = b.root.middleRows(static_cast<Eigen::Index>(i) * b.frames, b.frames);
        c.foot_contact = b.foot.middleRows(static_cast<Eigen::Index>(i) * b.frames, b.frames);
        c.content = b.content[static_cast<std::size_t>(i)];
        c.style = b.style[static_cast<std::size_t>(i)];
        c.frame_time = frame_time;
    }
    return out;
}

Split stratified_split(const std::vector<MotionClip>& clips, double fraction) {
    if (!(fraction >= 0.0 && fraction <= 1.0)) throw UsageError("split fraction must lie in [0, 1]");
    std::map<std::pair<int, int>, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < clips.size(); ++i) groups[{clips[i].content, clips[i].style}].push_back(i);
    std::vector<bool> to_first(clips.size(), false);
    for (const auto& [key, members] : groups) {
        const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(members.size())));
        for (std::size_t i = 0; i < k; ++i) to_first[members[i]] = true;
    }
    Split s;
    for (std::size_t i = 0; i < clips.size(); ++i) (to_first[i] ? s.first : s.second).push_back(clips[i]);
    return s;
}

}  // namespace motiondiff
