// motiondiff: preprocess, train, sample, evaluate and ablate from the shell.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "motiondiff/bvh.hpp"
#include "motiondiff/checkpoint.hpp"
#include "motiondiff/dataset.hpp"
#include "motiondiff/error.hpp"
#include "motiondiff/evaluation.hpp"
#include "motiondiff/postprocess.hpp"
#include "motiondiff/sampler.hpp"
#include "motiondiff/synthetic.hpp"
#include "motiondiff/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace motiondiff;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

void print_error(const std::string& kind, const std::string& message) {
    ordered_json j;
    j["error"] = {{"kind", kind}, {"message", message}};
    std::cerr << j.dump() << std::endl;
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
    if (!out) throw DataError("failed writing " + path.string());
}

void require_file(const fs::path& path, const char* what) {
    if (!fs::exists(path) || fs::is_directory(path)) throw DataError(std::string(what) + " not found: " + path.string());
}

struct SplitData {
    Dataset train;
    std::vector<MotionClip> held_out;
};

SplitData split_dataset(const Dataset& ds, double holdout) {
    if (!(holdout > 0.0 && holdout < 1.0)) throw UsageError("--holdout must lie in (0, 1)");
    Split s = stratified_split(ds.clips, 1.0 - holdout);
    if (s.first.empty()) throw DataError("training split is empty");
    SplitData out{ds, std::move(s.second)};
    out.train.clips = std::move(s.first);
    return out;
}

int resolve_label(const std::string& value, const std::vector<std::string>& names, const char* what) {
    const auto it = std::find(names.begin(), names.end(), value);
    if (it != names.end()) return static_cast<int>(it - names.begin());
    std::string list;
    for (std::size_t i = 0; i < names.size(); ++i) list += (i ? ", " : "") + std::to_string(i) + "=" + names[i];
    int id = -1;
    try {
        std::size_t used = 0;
        id = std::stoi(value, &used);
        if (used != value.size()) id = -1;
    } catch (const std::exception&) {
        id = -1;
    }
    const int n = static_cast<int>(names.size());
    if (id < 0 || id >= n) {
        throw UsageError(std::string(what) + " '" + value + "' out of range [0, " + std::to_string(n - 1) + "] (" + list + ")");
    }
    return id;
}

// ---- preprocess --------------------------------------------------------------

struct PreprocessArgs {
    bool synthetic = false;
    std::string input;
    std::string out;
    std::uint64_t seed = 0;
    int clips = 600;
    int contents = 3;
    int styles = 3;
    int stride = 16;
    double height_thresh = 0.0;
    double speed_thresh = 0.0;
};

// Files are labeled by their stem: "<content>_<style>[_anything].bvh"; a stem
// without an underscore gets style "default".
Dataset dataset_from_bvh_dir(const PreprocessArgs& a) {
    const fs::path dir(a.input);
    if (!fs::is_directory(dir)) throw DataError("input directory not found: " + a.input);
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".bvh") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw DataError("no .bvh files in " + a.input);

    std::vector<std::string> content_names, style_names;
    std::vector<std::pair<std::string, std::string>> labels;
    for (const auto& f : files) {
        const std::string stem = f.stem().string();
        const auto cut = stem.find('_');
        std::string c = stem.substr(0, cut);
        std::string s = "default";
        if (cut != std::string::npos) {
            const auto end = stem.find('_', cut + 1);
            s = stem.substr(cut + 1, end == std::string::npos ? std::string::npos : end - cut - 1);
        }
        if (c.empty() || s.empty()) throw DataError(f.string() + ": empty content or style label in file name");
        labels.emplace_back(c, s);
        content_names.push_back(c);
        style_names.push_back(s);
    }
    for (auto* v : {&content_names, &style_names}) {
        std::sort(v->begin(), v->end());
        v->erase(std::unique(v->begin(), v->end()), v->end());
    }

    std::vector<MotionClip> sequences;
    SkeletonDef skeleton;
    double frame_time = 0.0;
    for (std::size_t i = 0; i < files.size(); ++i) {
        const RawMotion raw = read_bvh_file(files[i]);
        if (i == 0) {
            skeleton = raw.skeleton;
            frame_time = raw.frame_time;
        } else if (raw.skeleton.joint_names != skeleton.joint_names) {
            throw DataError(files[i].string() + ": skeleton differs from " + files[0].string());
        } else if (std::abs(raw.frame_time - frame_time) > 1e-9) {
            throw DataError(files[i].string() + ": frame time differs from " + files[0].string());
        }
        MotionClip clip = clip_from_raw(raw);
        clip.content = static_cast<int>(std::lower_bound(content_names.begin(), content_names.end(), labels[i].first) - content_names.begin());
        clip.style = static_cast<int>(std::lower_bound(style_names.begin(), style_names.end(), labels[i].second) - style_names.begin());
        sequences.push_back(std::move(clip));
    }
    if (skeleton.num_feet() == 0) throw DataError("no foot joints found (expected joint names containing 'foot' or 'ankle')");

    WindowOptions opt;
    opt.stride = a.stride;
    opt.height_thresh = a.height_thresh;
    opt.speed_thresh = a.speed_thresh;
    WindowResult w = window_and_normalize(sequences, skeleton, std::nullopt, opt);
    Dataset ds;
    ds.skeleton = std::move(skeleton);
    ds.content_names = std::move(content_names);
    ds.style_names = std::move(style_names);
    ds.stats = std::move(w.stats);
    ds.clips = std::move(w.clips);
    ds.frame_time = frame_time;
    return ds;
}

int cmd_preprocess(const PreprocessArgs& a) {
    if (a.synthetic == !a.input.empty()) throw UsageError("give exactly one of --synthetic or --input");
    if (a.stride < 1) throw UsageError("--stride must be positive");
    Dataset ds = a.synthetic ? make_synthetic_dataset(a.clips, a.contents, a.styles, a.seed) : dataset_from_bvh_dir(a);
    save_dataset(ds, a.out);
    ordered_json j;
    j["clips"] = ds.num_clips();
    j["frames"] = kClipFrames;
    j["contents"] = ds.content_names;
    j["styles"] = ds.style_names;
    j["out"] = a.out;
    std::cout << j.dump() << std::endl;
    return 0;
}

// ---- train -------------------------------------------------------------------

struct TrainArgs {
    std::string data, out, config, preset = "desk";
    std::optional<std::uint64_t> seed;
    std::optional<int> steps;
    double holdout = 0.2;
    bool resume = false;
    bool verbose = false;
};

TrainerConfig resolve_config(const std::string& preset, const std::string& config_path, std::optional<std::uint64_t> seed,
                             std::optional<int> steps) {
    TrainerConfig c = TrainerConfig::preset_named(preset);
    if (!config_path.empty()) {
        require_file(config_path, "config file");
        c = TrainerConfig::from_json(read_text(config_path), c);
    }
    if (seed) c.seed = *seed;
    if (steps) c.steps = *steps;
    c.validate();
    return c;
}

TrainingState train_run(const TrainerConfig& cfg, const Dataset& train, const fs::path& out, bool resume, bool verbose) {
    RunOptions ro;
    ro.out_dir = out;
    ro.resume = resume;
    if (verbose) {
        ro.on_step = [](std::int64_t step, const LossReport& r) {
            if (step % 100 == 0) std::cerr << metrics_record(step, r) << '\n';
        };
    }
    return run_training(cfg, train, ro);
}

int cmd_train(const TrainArgs& a) {
    const TrainerConfig cfg = resolve_config(a.preset, a.config, a.seed, a.steps);
    std::cout << ordered_json{{"config", ordered_json::parse(cfg.to_json())}}.dump() << std::endl;
    require_file(a.data, "dataset");
    const SplitData split = split_dataset(load_dataset(a.data), a.holdout);
    const TrainingState st = train_run(cfg, split.train, a.out, a.resume, a.verbose);
    ordered_json j;
    j["steps"] = st.step;
    j["checkpoint"] = (fs::path(a.out) / "checkpoint.mdck").string();
    j["metrics"] = (fs::path(a.out) / "metrics.jsonl").string();
    std::cout << j.dump() << std::endl;
    return 0;
}

// ---- train-classifier ----------------------------------------------------------

struct ClassifierArgs {
    std::string data, out;
    std::uint64_t seed = 0;
    int steps = ClassifierTrainConfig{}.steps;
    double holdout = 0.2;
};

int cmd_train_classifier(const ClassifierArgs& a) {
    require_file(a.data, "dataset");
    const Dataset ds = load_dataset(a.data);
    const SplitData split = split_dataset(ds, a.holdout);
    ClassifierTrainConfig cc;
    cc.seed = a.seed;
    cc.steps = a.steps;
    const ClassifierBundle b = train_classifier(split.train.clips, ds.content_names, cc);
    save_classifier(b, a.out);
    ordered_json j;
    j["classifier"] = a.out;
    j["train_accuracy"] = classification_accuracy(b.model, split.train.clips);
    j["held_out_accuracy"] = classification_accuracy(b.model, split.held_out);
    std::cout << j.dump() << std::endl;
    return 0;
}

// ---- sample ------------------------------------------------------------------

struct SampleArgs {
    std::string checkpoint, out, content = "0", style = "0";
    int n = 1;
    std::uint64_t seed = 0;
    bool no_ema = false;
    bool raw = false;
    double filter_sigma = kDefaultFilterSigma;
};

int cmd_sample(const SampleArgs& a) {
    require_file(a.checkpoint, "checkpoint");
    if (a.n < 1) throw UsageError("--n must be positive");
    const TrainingState st = load_checkpoint(a.checkpoint);
    const int content = resolve_label(a.content, st.content_names, "content");
    const int style = resolve_label(a.style, st.style_names, "style");
    std::mt19937_64 rng(a.seed);
    SampleOptions so;
    so.use_ema = !a.no_ema;
    std::vector<MotionClip> clips = sample(st, content, style, a.n, rng, so);

    fs::create_directories(a.out);
    ordered_json files = ordered_json::array();
    int clamped = 0;
    for (std::size_t i = 0; i < clips.size(); ++i) {
        MotionClip clip = clips[i];
        if (!a.raw) {
            clip = gaussian_filter(clip, a.filter_sigma);
            IkResult ik = ik_foot_cleanup(clip, st.skeleton, clip.foot_contact);
            clamped += ik.report.clamped_frames;
            clip = std::move(ik.clip);
        }
        char name[32];
        std::snprintf(name, sizeof name, "_%03zu.bvh", i);
        const std::string file = st.content_names[static_cast<std::size_t>(content)] + "_" +
                                 st.style_names[static_cast<std::size_t>(style)] + name;
        write_text(fs::path(a.out) / file, serialize_bvh(st.skeleton, clip));
        files.push_back(file);
    }
    ordered_json m;
    m["checkpoint"] = a.checkpoint;
    m["content"] = {{"id", content}, {"name", st.content_names[static_cast<std::size_t>(content)]}};
    m["style"] = {{"id", style}, {"name", st.style_names[static_cast<std::size_t>(style)]}};
    m["n"] = a.n;
    m["seed"] = a.seed;
    m["use_ema"] = so.use_ema;
    m["frames"] = kClipFrames;
    m["postprocess"] = a.raw ? ordered_json(nullptr)
                             : ordered_json{{"filter_sigma", a.filter_sigma}, {"ik_clamped_frames", clamped}};
    m["files"] = files;
    write_text(fs::path(a.out) / "manifest.json", m.dump(2) + "\n");
    std::cout << ordered_json{{"files", files.size()}, {"manifest", (fs::path(a.out) / "manifest.json").string()}}.dump()
              << std::endl;
    return 0;
}

// ---- eval --------------------------------------------------------------------

struct EvalArgs {
    std::string checkpoint, data, classifier, out;
    int n = 0;
    std::uint64_t seed = 0;
    double holdout = 0.2;
    bool no_ema = false;
};

ordered_json report_json(const EvalReport& r, double split_fid) {
    ordered_json j = ordered_json::parse(r.to_json());
    j["real_split_fid"] = split_fid;
    return j;
}

int cmd_eval(const EvalArgs& a) {
    require_file(a.checkpoint, "checkpoint");
    require_file(a.data, "dataset");
    require_file(a.classifier, "classifier");
    const TrainingState st = load_checkpoint(a.checkpoint);
    const SplitData split = split_dataset(load_dataset(a.data), a.holdout);
    const ClassifierBundle cls = load_classifier(a.classifier);
    const EvalReport r = evaluate_run(st, split.held_out, cls, {a.n, a.seed, !a.no_ema});
    const std::string text = report_json(r, real_split_fid(split.held_out, cls)).dump(2);
    if (!a.out.empty()) write_text(a.out, text + "\n");
    std::cout << text << std::endl;
    return 0;
}

// ---- ablate ------------------------------------------------------------------

struct AblateArgs {
    std::string data, out, config, classifier, preset = "desk", rows;
    std::optional<std::uint64_t> seed;
    std::optional<int> steps;
    int n = 0;
    double holdout = 0.2;
    bool verbose = false;
};

std::vector<std::string> parse_rows(const std::string& text) {
    std::vector<std::string> rows;
    if (text.empty()) return ablation_rows();
    std::stringstream ss(text);
    for (std::string r; std::getline(ss, r, ',');) {
        if (r.empty()) continue;
        ablation_for_row(r);
        if (std::find(rows.begin(), rows.end(), r) == rows.end()) rows.push_back(r);
    }
    if (rows.empty()) throw UsageError("--rows is empty");
    return rows;
}

int cmd_ablate(const AblateArgs& a) {
    const std::vector<std::string> rows = parse_rows(a.rows);
    const TrainerConfig base = resolve_config(a.preset, a.config, a.seed, a.steps);
    require_file(a.data, "dataset");
    const Dataset ds = load_dataset(a.data);
    const SplitData split = split_dataset(ds, a.holdout);
    const fs::path out(a.out);
    ClassifierBundle cls;
    if (!a.classifier.empty()) {
        require_file(a.classifier, "classifier");
        cls = load_classifier(a.classifier);
    } else {
        ClassifierTrainConfig cc;
        cc.seed = base.seed;
        cls = train_classifier(split.train.clips, ds.content_names, cc);
        fs::create_directories(out);
        save_classifier(cls, out / "classifier.mdck");
    }

    ordered_json table = ordered_json::array();
    std::ostringstream md;
    md << "| row | fid | accuracy | mean joint acceleration |\n|---|---|---|---|\n";
    for (const auto& row : rows) {
        TrainerConfig cfg = base;
        cfg.ablation = ablation_for_row(row);
        const TrainingState st = train_run(cfg, split.train, out / row, false, a.verbose);
        const EvalReport r = evaluate_run(st, split.held_out, cls, {a.n, base.seed, true});
        write_text(out / row / "eval.json", r.to_json() + "\n");
        table.push_back({{"row", row}, {"fid", r.fid}, {"accuracy", r.accuracy},
                         {"mean_joint_acceleration", r.mean_joint_acceleration}});
        char line[160];
        std::snprintf(line, sizeof line, "| %s | %.4f | %.4f | %.4f |\n", row.c_str(), r.fid, r.accuracy,
                      r.mean_joint_acceleration);
        md << line;
    }
    ordered_json j;
    j["seed"] = base.seed;
    j["rows"] = table;
    write_text(out / "ablation.json", j.dump(2) + "\n");
    write_text(out / "ablation.md", md.str());
    std::cout << md.str() << std::flush;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Styled motion synthesis with a multi-task diffusion model"};
    app.require_subcommand(1);

    PreprocessArgs pre;
    auto* p = app.add_subcommand("preprocess", "Build a dataset container from BVH files or the synthetic generator");
    p->add_flag("--synthetic", pre.synthetic, "Use the procedural synthetic generator");
    p->add_option("--input", pre.input, "Directory of <content>_<style>.bvh files");
    p->add_option("--out", pre.out, "Output container path")->required();
    p->add_option("--seed", pre.seed, "Synthetic generator seed");
    p->add_option("--clips", pre.clips, "Synthetic clip count");
    p->add_option("--contents", pre.contents, "Synthetic content classes");
    p->add_option("--styles", pre.styles, "Synthetic style classes");
    p->add_option("--stride", pre.stride, "Window stride in frames for BVH input");
    p->add_option("--height-thresh", pre.height_thresh, "Foot contact height threshold (<= 0: calibrate)");
    p->add_option("--speed-thresh", pre.speed_thresh, "Foot contact speed threshold (<= 0: calibrate)");

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "Train the denoiser and discriminator");
    t->add_option("--data", tr.data, "Dataset container")->required();
    t->add_option("--out", tr.out, "Run directory")->required();
    t->add_option("--config", tr.config, "JSON config overriding the preset");
    t->add_option("--preset", tr.preset, "desk or paper");
    t->add_option("--seed", tr.seed, "Training seed");
    t->add_option("--steps", tr.steps, "Training steps");
    t->add_option("--holdout", tr.holdout, "Held-out fraction per (content, style) group");
    t->add_flag("--resume", tr.resume, "Continue from <out>/checkpoint.mdck");
    t->add_flag("--verbose", tr.verbose, "Log every 100th metrics record to stderr");

    ClassifierArgs ca;
    auto* c = app.add_subcommand("train-classifier", "Train the content classifier used for FID");
    c->add_option("--data", ca.data, "Dataset container")->required();
    c->add_option("--out", ca.out, "Classifier checkpoint path")->required();
    c->add_option("--seed", ca.seed, "Seed");
    c->add_option("--steps", ca.steps, "Optimizer steps");
    c->add_option("--holdout", ca.holdout, "Held-out fraction per (content, style) group");

    SampleArgs sa;
    auto* s = app.add_subcommand("sample", "Generate BVH clips for one (content, style) pair");
    s->add_option("--checkpoint", sa.checkpoint, "Training checkpoint")->required();
    s->add_option("--content", sa.content, "Content id or name");
    s->add_option("--style", sa.style, "Style id or name");
    s->add_option("--n", sa.n, "Number of clips");
    s->add_option("--seed", sa.seed, "Sampling seed");
    s->add_option("--out", sa.out, "Output directory")->required();
    s->add_flag("--no-ema", sa.no_ema, "Sample with the live weights instead of the EMA");
    s->add_flag("--raw", sa.raw, "Skip filtering and foot IK");
    s->add_option("--filter-sigma", sa.filter_sigma, "Temporal Gaussian sigma in frames");

    EvalArgs ea;
    auto* e = app.add_subcommand("eval", "FID and content accuracy of generated clips");
    e->add_option("--checkpoint", ea.checkpoint, "Training checkpoint")->required();
    e->add_option("--data", ea.data, "Dataset container")->required();
    e->add_option("--classifier", ea.classifier, "Classifier checkpoint")->required();
    e->add_option("--n", ea.n, "Generated clips (0: held-out count)");
    e->add_option("--seed", ea.seed, "Sampling seed");
    e->add_option("--holdout", ea.holdout, "Held-out fraction per (content, style) group");
    e->add_option("--out", ea.out, "Also write the report here");
    e->add_flag("--no-ema", ea.no_ema, "Sample with the live weights");

    AblateArgs aa;
    auto* a = app.add_subcommand("ablate", "Train and evaluate ablation rows");
    a->add_option("--data", aa.data, "Dataset container")->required();
    a->add_option("--out", aa.out, "Output directory")->required();
    a->add_option("--rows", aa.rows, "Comma list of foot,root,physical,discriminator,full");
    a->add_option("--config", aa.config, "JSON config overriding the preset");
    a->add_option("--preset", aa.preset, "desk or paper");
    a->add_option("--classifier", aa.classifier, "Classifier checkpoint (trained when omitted)");
    a->add_option("--seed", aa.seed, "Seed for training, classifier and sampling");
    a->add_option("--steps", aa.steps, "Training steps per row");
    a->add_option("--n", aa.n, "Generated clips per row (0: held-out count)");
    a->add_option("--holdout", aa.holdout, "Held-out fraction per (content, style) group");
    a->add_flag("--verbose", aa.verbose, "Log training progress to stderr");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& ok) {
        return app.exit(ok);
    } catch (const CLI::ParseError& err) {
        print_error("usage", err.what());
        return kExitUsage;
    }

    try {
        if (p->parsed()) return cmd_preprocess(pre);
        if (t->parsed()) return cmd_train(tr);
        if (c->parsed()) return cmd_train_classifier(ca);
        if (s->parsed()) return cmd_sample(sa);
        if (e->parsed()) return cmd_eval(ea);
        if (a->parsed()) return cmd_ablate(aa);
    } catch (const Error& err) {
        switch (err.kind()) {
            case ErrorKind::usage: print_error("usage", err.what()); return kExitUsage;
            case ErrorKind::data: print_error("data", err.what()); return kExitData;
            case ErrorKind::numeric: print_error("numeric", err.what()); return kExitNumeric;
        }
    } catch (const std::invalid_argument& err) {
        print_error("usage", err.what());
        return kExitUsage;
    } catch (const fs::filesystem_error& err) {
        print_error("data", err.what());
        return kExitData;
    } catch (const std::exception& err) {
        print_error("internal", err.what());
        return 1;
    }
    return kExitUsage;
}
