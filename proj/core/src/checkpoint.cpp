#include "motiondiff/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "binary_io.hpp"
#include "json_io.hpp"
#include "motiondiff/error.hpp"

namespace motiondiff {

using nlohmann::json;

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

struct TensorWriter {
    json index = json::array();
    std::vector<const Matrix*> data;

    void add(const std::string& name, const Matrix& m) {
        index.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
        data.push_back(&m);
    }
    void add_set(const std::string& prefix, const ParameterSet& set) {
        for (const Parameter& p : set) add(prefix + "/" + p.name, p.value);
    }
    void add_adam(const std::string& prefix, const AdamState& s) {
        for (std::size_t i = 0; i < s.m.size(); ++i) add(prefix + ".m/" + std::to_string(i), s.m[i]);
        for (std::size_t i = 0; i < s.v.size(); ++i) add(prefix + ".v/" + std::to_string(i), s.v[i]);
    }
};

void write_container(const std::filesystem::path& path, json header, const TensorWriter& w) {
    header["tensors"] = w.index;
    const std::string text = header.dump();
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot write checkpoint " + path.string());
    io::put_magic(os, "MDCK");
    io::put_u32(os, kCheckpointVersion);
    io::put_u64(os, text.size());
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const Matrix* m : w.data) {
        for (Eigen::Index i = 0; i < m->size(); ++i) io::put_f64(os, m->data()[i]);
    }
    if (!os) throw DataError("failed writing checkpoint " + path.string());
}

struct Container {
    json header;
    std::vector<std::pair<std::string, Matrix>> tensors;
    std::size_t next = 0;

    const Matrix& take(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
        if (next >= tensors.size()) throw DataError("checkpoint is missing tensor '" + name + "'");
        const auto& [n, m] = tensors[next++];
        if (n != name) throw DataError("checkpoint tensor '" + n + "' found where '" + name + "' was expected");
        if (m.rows() != rows || m.cols() != cols) throw DataError("checkpoint tensor '" + name + "' has the wrong shape");
        return m;
    }
    std::uintmax_t scalars() const {
        std::uintmax_t n = 0;
        for (const auto& t : tensors) n += static_cast<std::uintmax_t>(t.second.size());
        return n;
    }
    // Rejects layer shapes that cannot fit in the stored tensors before any
    // model is allocated from a corrupted header.
    void check_layer(std::int64_t in, std::int64_t out) const {
        if (in < 0 || out < 0) return;  // left to config validation
        if (static_cast<std::uintmax_t>(in) * static_cast<std::uintmax_t>(out) > scalars()) {
            throw DataError("checkpoint header declares layers larger than its tensors");
        }
    }
    void take_set(const std::string& prefix, ParameterSet& set) {
        for (Parameter& p : set) p.value = take(prefix + "/" + p.name, p.value.rows(), p.value.cols());
    }
    void take_adam(const std::string& prefix, AdamState& s) {
        for (std::size_t i = 0; i < s.m.size(); ++i) s.m[i] = take(prefix + ".m/" + std::to_string(i), s.m[i].rows(), s.m[i].cols());
        for (std::size_t i = 0; i < s.v.size(); ++i) s.v[i] = take(prefix + ".v/" + std::to_string(i), s.v[i].rows(), s.v[i].cols());
    }
};

Container read_container(const std::filesystem::path& path, const std::string& kind) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint " + path.string());
    const std::string what = "checkpoint " + path.string();
    io::expect_magic(is, "MDCK", what);
    const auto version = io::get_u32(is, what);
    if (version != kCheckpointVersion) throw DataError(what + ": unsupported version " + std::to_string(version));
    const auto len = io::get_u64(is, what);
    const auto size = std::filesystem::file_size(path);
    if (len > size) throw DataError(what + ": header length exceeds file size");
    std::string text(static_cast<std::size_t>(len), '\0');
    if (!is.read(text.data(), static_cast<std::streamsize>(len))) throw DataError("truncated " + what);
    Container c;
    try {
        c.header = json::parse(text);
        if (c.header.at("kind").get<std::string>() != kind) {
            throw DataError(what + ": expected a " + kind + " checkpoint");
        }
        std::uintmax_t expected = 16 + len;
        for (const auto& t : c.header.at("tensors")) {
            const auto rows = t.at("rows").get<Eigen::Index>();
            const auto cols = t.at("cols").get<Eigen::Index>();
            if (rows < 0 || cols < 0) throw DataError(what + ": negative tensor shape");
            if (static_cast<std::uintmax_t>(rows) > size || static_cast<std::uintmax_t>(cols) > size) {
                throw DataError(what + ": tensors exceed file size");
            }
            expected += 8ull * static_cast<std::uintmax_t>(rows) * static_cast<std::uintmax_t>(cols);
            if (expected > size) throw DataError(what + ": tensors exceed file size");
            Matrix m(rows, cols);
            for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = io::get_f64(is, what);
            c.tensors.emplace_back(t.at("name").get<std::string>(), std::move(m));
        }
        if (expected != size) throw DataError(what + ": trailing bytes after tensors");
    } catch (const json::exception& e) {
        throw DataError(what + ": invalid header: " + e.what());
    }
    return c;
}

template <class T>
std::string state_string(const T& v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

template <class T>
void restore_state(T& v, const std::string& text, const char* what) {
    std::istringstream is(text);
    is >> v;
    if (is.fail()) throw DataError(std::string("checkpoint has an invalid ") + what + " state");
}

json denoiser_config_json(const DenoiserConfig& c) {
    return {{"rot_channels", c.rot_channels}, {"feet", c.feet},   {"contents", c.contents},   {"styles", c.styles},
            {"steps", c.steps},               {"width", c.width}, {"levels", c.levels},       {"attention", c.attention}};
}

DenoiserConfig denoiser_config_from(const json& j) {
    DenoiserConfig c;
    c.rot_channels = j.at("rot_channels").get<int>();
    c.feet = j.at("feet").get<int>();
    c.contents = j.at("contents").get<int>();
    c.styles = j.at("styles").get<int>();
    c.steps = j.at("steps").get<int>();
    c.width = j.at("width").get<int>();
    c.levels = j.at("levels").get<int>();
    c.attention = j.at("attention").get<bool>();
    c.validate();
    return c;
}

}  // namespace

void save_checkpoint(const TrainingState& s, const std::filesystem::path& path) {
    json h;
    h["kind"] = "training";
    h["config"] = json::parse(s.config.to_json());
    h["denoiser"] = denoiser_config_json(s.denoiser_config);
    h["discriminator"] = {{"width", s.discriminator.config().width}};
    h["step"] = s.step;
    h["ema_updates"] = s.ema_updates;
    h["gen_opt_step"] = s.gen_opt.step;
    h["disc_opt_step"] = s.disc_opt.step;
    h["rng"] = state_string(s.rng);
    h["normal"] = state_string(s.normal);
    h["order"] = s.order;
    h["cursor"] = s.cursor;
    h["stats"] = jsonio::stats_to_json(s.stats);
    h["skeleton"] = jsonio::skeleton_to_json(s.skeleton);
    h["content_names"] = s.content_names;
    h["style_names"] = s.style_names;
    h["frame_time"] = s.frame_time;

    TensorWriter w;
    w.add_set("denoiser", s.denoiser.params());
    w.add_set("ema", s.ema);
    w.add_set("discriminator", s.discriminator.params());
    w.add_adam("gen_opt", s.gen_opt);
    w.add_adam("disc_opt", s.disc_opt);
    // Write through a temporary so an interrupted save never clobbers the previous checkpoint.
    const std::filesystem::path tmp = path.string() + ".tmp";
    write_container(tmp, std::move(h), w);
    std::filesystem::rename(tmp, path);
}

TrainingState load_checkpoint(const std::filesystem::path& path) {
    Container c = read_container(path, "training");
    const json& h = c.header;
    TrainingState s;
    try {
        s.config = TrainerConfig::from_json(h.at("config").dump(), TrainerConfig::desk());
        s.denoiser_config = denoiser_config_from(h.at("denoiser"));
        s.step = h.at("step").get<std::int64_t>();
        s.ema_updates = h.at("ema_updates").get<std::int64_t>();
        s.order = h.at("order").get<std::vector<int>>();
        s.cursor = h.at("cursor").get<std::size_t>();
        s.content_names = h.at("content_names").get<std::vector<std::string>>();
        s.style_names = h.at("style_names").get<std::vector<std::string>>();
        s.frame_time = h.at("frame_time").get<double>();
        restore_state(s.rng, h.at("rng").get<std::string>(), "random generator");
        restore_state(s.normal, h.at("normal").get<std::string>(), "normal distribution");
        s.skeleton = jsonio::skeleton_from_json(h.at("skeleton"));
        s.stats = jsonio::stats_from_json(h.at("stats"));

        const DenoiserConfig& dc = s.denoiser_config;
        const int disc_width = h.at("discriminator").at("width").get<int>();
        for (int in : {dc.rot_channels, dc.contents, dc.styles, dc.feet, dc.width}) c.check_layer(in, dc.width);
        c.check_layer(dc.rot_channels + dc.feet, disc_width);
        c.check_layer(disc_width, disc_width);
        s.denoiser = Denoiser(dc, 0);
        s.discriminator = Discriminator({dc.rot_channels, dc.feet, disc_width}, 0);
        s.ema = s.denoiser.params();
        s.gen_opt = AdamState::zeros_like(s.denoiser.params());
        s.disc_opt = AdamState::zeros_like(s.discriminator.params());
        s.gen_opt.step = h.at("gen_opt_step").get<std::int64_t>();
        s.disc_opt.step = h.at("disc_opt_step").get<std::int64_t>();
    } catch (const json::exception& e) {
        throw DataError("checkpoint " + path.string() + ": invalid header: " + e.what());
    } catch (const UsageError& e) {
        throw DataError("checkpoint " + path.string() + ": invalid configuration: " + e.what());
    }
    std::vector<char> seen(s.order.size(), 0);
    for (int i : s.order) {
        if (i < 0 || static_cast<std::size_t>(i) >= s.order.size() || seen[static_cast<std::size_t>(i)]++) {
            throw DataError("checkpoint epoch order is not a permutation");
        }
    }
    if (s.skeleton.rotation_channels() != s.denoiser_config.rot_channels) {
        throw DataError("checkpoint skeleton does not match the model");
    }
    if (s.stats.rot_mean.size() != s.denoiser_config.rot_channels) throw DataError("checkpoint statistics do not match the model");
    c.take_set("denoiser", s.denoiser.params());
    c.take_set("ema", s.ema);
    c.take_set("discriminator", s.discriminator.params());
    c.take_adam("gen_opt", s.gen_opt);
    c.take_adam("disc_opt", s.disc_opt);
    if (c.next != c.tensors.size()) throw DataError("checkpoint has unexpected extra tensors");
    return s;
}

void save_classifier(const ClassifierBundle& b, const std::filesystem::path& path) {
    json h;
    h["kind"] = "classifier";
    h["rot_channels"] = b.model.config().rot_channels;
    h["classes"] = b.model.config().classes;
    h["feature_width"] = b.model.config().feature_width;
    h["content_names"] = b.content_names;
    h["seed"] = b.seed;
    h["frames"] = b.frames;
    TensorWriter w;
    w.add_set("classifier", b.model.params());
    write_container(path, std::move(h), w);
}

ClassifierBundle load_classifier(const std::filesystem::path& path) {
    Container c = read_container(path, "classifier");
    ClassifierBundle b;
    try {
        const json& h = c.header;
        const ClassifierConfig cc{h.at("rot_channels").get<int>(), h.at("classes").get<int>(), h.at("feature_width").get<int>()};
        c.check_layer(cc.rot_channels, 32);
        c.check_layer(64, cc.feature_width);
        c.check_layer(cc.feature_width, cc.classes);
        b.model = Classifier(cc, 0);
        b.content_names = h.at("content_names").get<std::vector<std::string>>();
        b.seed = h.at("seed").get<std::uint64_t>();
        b.frames = h.at("frames").get<int>();
    } catch (const json::exception& e) {
        throw DataError("classifier " + path.string() + ": invalid header: " + e.what());
    } catch (const UsageError& e) {
        throw DataError("classifier " + path.string() + ": invalid configuration: " + e.what());
    }
    c.take_set("classifier", b.model.params());
    if (c.next != c.tensors.size()) throw DataError("classifier checkpoint has unexpected extra tensors");
    return b;
}

}  // namespace motiondiff
