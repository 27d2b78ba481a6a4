#include "motiondiff/bvh.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

namespace motiondiff {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr double kRadToDeg = 180.0 / std::numbers::pi;

struct Token {
    std::string_view text;
    int line = 0;
};

std::vector<Token> tokenize(std::string_view text) {
    std::vector<Token> tokens;
    int line = 1;
    std::size_t i = 0;
    while (i < text.size()) {
        const char c = text[i];
        if (c == '\n') {
            ++line;
            ++i;
        } else if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
        } else {
            const std::size_t start = i;
            while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
            tokens.push_back({text.substr(start, i - start), line});
        }
    }
    return tokens;
}

bool is_rotation(BvhChannel c) {
    return c == BvhChannel::x_rotation || c == BvhChannel::y_rotation || c == BvhChannel::z_rotation;
}

const char* channel_name(BvhChannel c) {
    switch (c) {
        case BvhChannel::x_position: return "Xposition";
        case BvhChannel::y_position: return "Yposition";
        case BvhChannel::z_position: return "Zposition";
        case BvhChannel::x_rotation: return "Xrotation";
        case BvhChannel::y_rotation: return "Yrotation";
        case BvhChannel::z_rotation: return "Zrotation";
    }
    return "";
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    return out;
}

class Parser {
public:
    explicit Parser(std::string_view text) : tokens_(tokenize(text)) {}

    RawMotion run() {
        RawMotion m;
        expect("HIERARCHY");
        expect("ROOT");
        parse_joint(m, -1);
        expect("MOTION");
        expect("Frames:");
        const Token& count_tok = next("frame count");
        const double declared_d = number(count_tok);
        if (declared_d < 0 || declared_d > 1e9 || declared_d != std::floor(declared_d)) {
            fail(count_tok.line, "frame count must be a non-negative integer");
        }
        const auto declared = static_cast<long>(declared_d);
        expect("Frame");
        expect("Time:");
        const Token& dt_tok = next("frame time");
        m.frame_time = number(dt_tok);
        if (!(m.frame_time > 0.0)) fail(dt_tok.line, "frame time must be positive");

        const int width = m.total_channels();
        std::vector<std::vector<double>> rows;
        while (pos_ < tokens_.size()) {
            const int line = tokens_[pos_].line;
            std::vector<double> row;
            while (pos_ < tokens_.size() && tokens_[pos_].line == line) row.push_back(number(tokens_[pos_++]));
            if (static_cast<int>(row.size()) != width) {
                fail(line, "expected " + std::to_string(width) + " channel values, found " + std::to_string(row.size()));
            }
            rows.push_back(std::move(row));
        }
        if (static_cast<long>(rows.size()) != declared) {
            fail(last_line(), "header declares " + std::to_string(declared) + " frames but " + std::to_string(rows.size()) +
                                  " rows are present");
        }
        m.frames.resize(static_cast<Eigen::Index>(rows.size()), width);
        for (std::size_t r = 0; r < rows.size(); ++r) {
            int col = 0;
            for (const auto& jc : m.channels) {
                for (BvhChannel c : jc) {
                    const double v = rows[r][static_cast<std::size_t>(col)];
                    m.frames(static_cast<Eigen::Index>(r), col) = is_rotation(c) ? v * kDegToRad : v;
                    ++col;
                }
            }
        }
        for (int j = 0; j < m.skeleton.num_joints(); ++j) {
            const std::string n = lower(m.skeleton.joint_names[static_cast<std::size_t>(j)]);
            const bool foot = n.find("foot") != std::string::npos || n.find("ankle") != std::string::npos;
            if (foot && n.find("toe") == std::string::npos && j > 0 && m.skeleton.parent_index[static_cast<std::size_t>(j)] > 0) {
                m.skeleton.foot_joint_indices.push_back(j);
            }
        }
        m.skeleton.validate();
        return m;
    }

private:
    [[noreturn]] void fail(int line, const std::string& msg) const { throw BvhParseError(line, msg); }

    int last_line() const { return tokens_.empty() ? 1 : tokens_.back().line; }

    const Token& next(const char* what) {
        if (pos_ >= tokens_.size()) fail(last_line(), std::string("unexpected end of file, expected ") + what);
        return tokens_[pos_++];
    }

    void expect(std::string_view word) {
        const Token& t = next(std::string(word).c_str());
        if (t.text != word) fail(t.line, "expected '" + std::string(word) + "', found '" + std::string(t.text) + "'");
    }

    double number(const Token& t) const {
        double v = 0.0;
        const char* first = t.text.data();
        const char* last = first + t.text.size();
        if (first != last && *first == '+') ++first;
        auto [ptr, ec] = std::from_chars(first, last, v);
        if (ec != std::errc() || ptr != last || !std::isfinite(v)) {
            fail(t.line, "expected a number, found '" + std::string(t.text) + "'");
        }
        return v;
    }

    Vec3 offset() {
        expect("OFFSET");
        Vec3 o;
        for (int i = 0; i < 3; ++i) o(i) = number(next("offset component"));
        return o;
    }

    void parse_joint(RawMotion& m, int parent) {
        const Token& name = next("joint name");
        if (++depth_ > 512) fail(name.line, "hierarchy nested too deeply");
        const int index = m.skeleton.num_joints();
        m.skeleton.joint_names.emplace_back(name.text);
        m.skeleton.parent_index.push_back(parent);
        m.skeleton.end_sites.emplace_back();
        expect("{");
        m.skeleton.offsets.push_back(offset());
        expect("CHANNELS");
        const Token& count_tok = next("channel count");
        const double count = number(count_tok);
        if (count < 0 || count > 6 || count != std::floor(count)) fail(count_tok.line, "channel count must be 0..6");
        std::vector<BvhChannel> chans;
        for (int i = 0; i < static_cast<int>(count); ++i) {
            const Token& c = next("channel name");
            static const std::pair<std::string_view, BvhChannel> names[] = {
                {"Xposition", BvhChannel::x_position}, {"Yposition", BvhChannel::y_position},
                {"Zposition", BvhChannel::z_position}, {"Xrotation", BvhChannel::x_rotation},
                {"Yrotation", BvhChannel::y_rotation}, {"Zrotation", BvhChannel::z_rotation}};
            auto it = std::find_if(std::begin(names), std::end(names), [&](const auto& p) { return p.first == c.text; });
            if (it == std::end(names)) fail(c.line, "unknown channel '" + std::string(c.text) + "'");
            if (std::find(chans.begin(), chans.end(), it->second) != chans.end()) {
                fail(c.line, "duplicate channel '" + std::string(c.text) + "'");
            }
            chans.push_back(it->second);
        }
        m.channels.push_back(std::move(chans));
        for (;;) {
            const Token& t = next("'JOINT', 'End Site' or '}'");
            if (t.text == "JOINT") {
                parse_joint(m, index);
            } else if (t.text == "End") {
                expect("Site");
                expect("{");
                m.skeleton.end_sites[static_cast<std::size_t>(index)] = offset();
                expect("}");
            } else if (t.text == "}") {
                break;
            } else {
                fail(t.line, "unexpected token '" + std::string(t.text) + "' in joint '" + std::string(name.text) + "'");
            }
        }
        --depth_;
    }

    std::vector<Token> tokens_;
    std::size_t pos_ = 0;
    int depth_ = 0;
};

Mat3 rotation_from_channels(const std::vector<BvhChannel>& chans, const Matrix& frames, int frame, int first_col) {
    Mat3 r = Mat3::Identity();
    for (std::size_t i = 0; i < chans.size(); ++i) {
        const double v = frames(frame, first_col + static_cast<int>(i));
        switch (chans[i]) {
            case BvhChannel::x_rotation: r = r * rot_x(v); break;
            case BvhChannel::y_rotation: r = r * rot_y(v); break;
            case BvhChannel::z_rotation: r = r * rot_z(v); break;
            default: break;
        }
    }
    return r;
}

Vec3 translation_from_channels(const std::vector<BvhChannel>& chans, const Matrix& frames, int frame, int first_col) {
    Vec3 p = Vec3::Zero();
    for (std::size_t i = 0; i < chans.size(); ++i) {
        const double v = frames(frame, first_col + static_cast<int>(i));
        if (chans[i] == BvhChannel::x_position) p.x() = v;
        if (chans[i] == BvhChannel::y_position) p.y() = v;
        if (chans[i] == BvhChannel::z_position) p.z() = v;
    }
    return p;
}

void write_vec(std::ostream& os, const Vec3& v) { os << v.x() << ' ' << v.y() << ' ' << v.z(); }

}  // namespace

int RawMotion::total_channels() const {
    int n = 0;
    for (const auto& c : channels) n += static_cast<int>(c.size());
    return n;
}

RawMotion parse_bvh(std::string_view text) { return Parser(text).run(); }

RawMotion read_bvh_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open bvh file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return parse_bvh(ss.str());
    } catch (const BvhParseError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

std::string write_bvh(const RawMotion& motion) {
    const SkeletonDef& sk = motion.skeleton;
    sk.validate();
    const int joints = sk.num_joints();
    std::vector<std::vector<int>> children(static_cast<std::size_t>(joints));
    for (int j = 1; j < joints; ++j) children[static_cast<std::size_t>(sk.parent_index[static_cast<std::size_t>(j)])].push_back(j);

    std::vector<int> column_start(static_cast<std::size_t>(joints));
    int col = 0;
    for (int j = 0; j < joints; ++j) {
        column_start[static_cast<std::size_t>(j)] = col;
        col += static_cast<int>(motion.channels[static_cast<std::size_t>(j)].size());
    }

    std::ostringstream os;
    os << std::fixed << std::setprecision(6);
    os << "HIERARCHY\n";
    std::vector<int> order;
    auto emit = [&](auto&& self, int j, int depth) -> void {
        order.push_back(j);
        const std::string ind(static_cast<std::size_t>(depth), '\t');
        os << ind << (j == 0 ? "ROOT " : "JOINT ") << sk.joint_names[static_cast<std::size_t>(j)] << '\n';
        os << ind << "{\n";
        os << ind << "\tOFFSET ";
        write_vec(os, sk.offsets[static_cast<std::size_t>(j)]);
        os << '\n';
        const auto& chans = motion.channels[static_cast<std::size_t>(j)];
        os << ind << "\tCHANNELS " << chans.size();
        for (BvhChannel c : chans) os << ' ' << channel_name(c);
        os << '\n';
        for (int c : children[static_cast<std::size_t>(j)]) self(self, c, depth + 1);
        const auto& end = sk.end_sites.empty() ? std::optional<Vec3>() : sk.end_sites[static_cast<std::size_t>(j)];
        if (end) {
            os << ind << "\tEnd Site\n" << ind << "\t{\n" << ind << "\t\tOFFSET ";
            write_vec(os, *end);
            os << '\n' << ind << "\t}\n";
        }
        os << ind << "}\n";
    };
    emit(emit, 0, 0);

    os << "MOTION\n";
    os << "Frames: " << motion.num_frames() << '\n';
    os << std::setprecision(8) << "Frame Time: " << motion.frame_time << '\n';
    os << std::setprecision(6);
    for (int f = 0; f < motion.num_frames(); ++f) {
        bool first = true;
        for (int j : order) {
            const auto& chans = motion.channels[static_cast<std::size_t>(j)];
            for (std::size_t i = 0; i < chans.size(); ++i) {
                double v = motion.frames(f, column_start[static_cast<std::size_t>(j)] + static_cast<int>(i));
                if (is_rotation(chans[i])) v *= kRadToDeg;
                if (!first) os << ' ';
                os << v;
                first = false;
            }
        }
        os << '\n';
    }
    return os.str();
}

RawMotion raw_from_clip(const SkeletonDef& skeleton, const MotionClip& clip) {
    skeleton.validate();
    if (clip.num_joints() != skeleton.num_joints()) {
        throw DataError("clip has " + std::to_string(clip.num_joints()) + " joints, skeleton has " +
                        std::to_string(skeleton.num_joints()));
    }
    RawMotion m;
    m.skeleton = skeleton;
    m.frame_time = clip.frame_time;
    const int joints = skeleton.num_joints();
    m.channels.assign(static_cast<std::size_t>(joints), {BvhChannel::z_rotation, BvhChannel::x_rotation, BvhChannel::y_rotation});
    m.channels[0] = {BvhChannel::x_position, BvhChannel::y_position, BvhChannel::z_position,
                     BvhChannel::z_rotation, BvhChannel::x_rotation, BvhChannel::y_rotation};
    m.frames.resize(clip.num_frames(), 3 + 3 * joints);
    const auto roots = integrate_root(clip);
    for (int f = 0; f < clip.num_frames(); ++f) {
        const RootState& rs = roots[static_cast<std::size_t>(f)];
        m.frames.row(f).head(3) = rs.position.transpose();
        const Mat3 world = rot_y(rs.heading) * joint_rotation(clip, f, 0);
        m.frames.row(f).segment(3, 3) = matrix_to_euler_zxy(world).transpose();
        m.frames.row(f).tail(3 * (joints - 1)) = clip.rotations.row(f).tail(3 * (joints - 1));
    }
    return m;
}

std::string serialize_bvh(const SkeletonDef& skeleton, const MotionClip& clip) {
    return write_bvh(raw_from_clip(skeleton, clip));
}

MotionClip clip_from_raw(const RawMotion& motion) {
    const SkeletonDef& sk = motion.skeleton;
    const int joints = sk.num_joints();
    const int frames = motion.num_frames();
    MotionClip clip;
    clip.frame_time = motion.frame_time;
    clip.rotations.resize(frames, 3 * joints);
    clip.root = Matrix::Zero(frames, kRootChannels);
    clip.foot_contact = Matrix::Zero(frames, sk.num_feet());

    std::vector<int> first_col(static_cast<std::size_t>(joints));
    int col = 0;
    for (int j = 0; j < joints; ++j) {
        first_col[static_cast<std::size_t>(j)] = col;
        col += static_cast<int>(motion.channels[static_cast<std::size_t>(j)].size());
    }

    // Headings are unwrapped relative to frame 0: integrate_root starts at zero
    // heading, so the initial facing is carried by the root joint rotation.
    std::vector<Vec3> pos(static_cast<std::size_t>(frames));
    std::vector<double> heading(static_cast<std::size_t>(frames));
    std::vector<Mat3> root_world(static_cast<std::size_t>(frames));
    double prev = 0.0;
    for (int f = 0; f < frames; ++f) {
        const auto k = static_cast<std::size_t>(f);
        root_world[k] = rotation_from_channels(motion.channels[0], motion.frames, f, 0);
        pos[k] = translation_from_channels(motion.channels[0], motion.frames, f, 0);
        const double h = heading_of(root_world[k]);
        heading[k] = f == 0 ? 0.0 : heading[k - 1] + wrap_angle(h - prev);
        prev = h;
    }
    for (int f = 0; f < frames; ++f) {
        const auto k = static_cast<std::size_t>(f);
        set_joint_rotation(clip, f, 0, rot_y(-heading[k]) * root_world[k]);
        for (int j = 1; j < joints; ++j) {
            set_joint_rotation(clip, f, j, rotation_from_channels(motion.channels[static_cast<std::size_t>(j)], motion.frames, f, first_col[static_cast<std::size_t>(j)]));
        }
        clip.root(f, 2) = pos[k].y();
    }
    for (int f = 0; f + 1 < frames; ++f) {
        const auto k = static_cast<std::size_t>(f);
        // Planar displacement in the heading frame of frame f.
        const Vec3 d = pos[k + 1] - pos[k];
        const double c = std::cos(heading[k]), s = std::sin(heading[k]);
        clip.root(f, 0) = (c * d.x() - s * d.z()) / motion.frame_time;
        clip.root(f, 1) = (s * d.x() + c * d.z()) / motion.frame_time;
        clip.root(f, 3) = (heading[k + 1] - heading[k]) / motion.frame_time;
    }
    if (frames >= 2) {
        clip.root(frames - 1, 0) = clip.root(frames - 2, 0);
        clip.root(frames - 1, 1) = clip.root(frames - 2, 1);
        clip.root(frames - 1, 3) = clip.root(frames - 2, 3);
    }
    return clip;
}

}  // namespace motiondiff
