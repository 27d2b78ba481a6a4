#include "motiondiff/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "motiondiff/checkpoint.hpp"
#include "motiondiff/error.hpp"

namespace motiondiff {

using nlohmann::json;

namespace {

json weights_json(const LossWeights& w) {
    return {{"noise", w.noise}, {"foot", w.foot}, {"root", w.root}, {"adv", w.adv}, {"vel", w.vel}, {"acc", w.acc}};
}

json ablation_json(const Ablation& a) {
    return {{"foot", a.foot}, {"root", a.root}, {"physical", a.physical}, {"discriminator", a.discriminator}};
}

template <class T>
T typed(const json& v, const std::string& key) {
    try {
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw UsageError("config key '" + key + "' must be a boolean");
        } else if constexpr (std::is_unsigned_v<T>) {
            if (!v.is_number_unsigned()) throw UsageError("config key '" + key + "' must be a non-negative integer");
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) throw UsageError("config key '" + key + "' must be an integer");
            const bool fits = v.is_number_unsigned() ? v.get<std::uint64_t>() <= std::uint64_t(std::numeric_limits<T>::max())
                                                      : v.get<std::int64_t>() >= std::numeric_limits<T>::min() &&
                                                            v.get<std::int64_t>() <= std::numeric_limits<T>::max();
            if (!fits) throw UsageError("config key '" + key + "' is out of range");
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) throw UsageError("config key '" + key + "' must be a number");
        } else {
            if (!v.is_string()) throw UsageError("config key '" + key + "' must be a string");
        }
        return v.get<T>();
    } catch (const json::exception&) {
        throw UsageError("config key '" + key + "' has an invalid value");
    }
}

void fill_weights(LossWeights& w, const json& j, const std::string& prefix) {
    if (!j.is_object()) throw UsageError("config key '" + prefix + "' must be an object");
    for (const auto& [k, v] : j.items()) {
        const std::string key = prefix + "." + k;
        if (k == "noise") w.noise = typed<double>(v, key);
        else if (k == "foot") w.foot = typed<double>(v, key);
        else if (k == "root") w.root = typed<double>(v, key);
        else if (k == "adv") w.adv = typed<double>(v, key);
        else if (k == "vel") w.vel = typed<double>(v, key);
        else if (k == "acc") w.acc = typed<double>(v, key);
        else throw UsageError("unknown config key '" + key + "'");
    }
}

void fill_ablation(Ablation& a, const json& j, const std::string& prefix) {
    if (!j.is_object()) throw UsageError("config key '" + prefix + "' must be an object");
    for (const auto& [k, v] : j.items()) {
        const std::string key = prefix + "." + k;
        if (k == "foot") a.foot = typed<bool>(v, key);
        else if (k == "root") a.root = typed<bool>(v, key);
        else if (k == "physical") a.physical = typed<bool>(v, key);
        else if (k == "discriminator") a.discriminator = typed<bool>(v, key);
        else throw UsageError("unknown config key '" + key + "'");
    }
}

struct DrawState {
    std::mt19937_64 rng;
    std::normal_distribution<double> normal;
    std::vector<int> order;
    std::size_t cursor = 0;
};

void next_epoch(DrawState& s, int n) {
    s.order.resize(static_cast<std::size_t>(n));
    std::iota(s.order.begin(), s.order.end(), 0);
    for (int i = n - 1; i > 0; --i) {
        std::uniform_int_distribution<int> pick(0, i);
        std::swap(s.order[static_cast<std::size_t>(i)], s.order[static_cast<std::size_t>(pick(s.rng))]);
    }
    s.cursor = 0;
}

std::vector<int> next_batch(DrawState& s, int n, int batch) {
    std::vector<int> idx;
    idx.reserve(static_cast<std::size_t>(batch));
    while (static_cast<int>(idx.size()) < batch) {
        if (s.cursor >= s.order.size() || s.order.size() != static_cast<std::size_t>(n)) next_epoch(s, n);
        idx.push_back(s.order[s.cursor++]);
    }
    return idx;
}

struct GlobalWeights {
    std::vector<double> row_sqrt;   // per (clip, frame) row
    std::vector<double> clip_sqrt;  // per clip
    Matrix clip_offset;             // batch x 1, 1 - sqrt(w)
};

GlobalWeights global_weights(std::span<const int> steps, const NoiseSchedule& sched, int frames, bool enabled) {
    GlobalWeights g;
    g.clip_offset.resize(static_cast<Eigen::Index>(steps.size()), 1);
    for (std::size_t i = 0; i < steps.size(); ++i) {
        const double ab = sched.alpha_bar(steps[i]);
        const double w = enabled ? std::min(1.0, ab / (1.0 - ab)) : 1.0;
        const double r = std::sqrt(w);
        g.clip_sqrt.push_back(r);
        g.clip_offset(static_cast<Eigen::Index>(i), 0) = 1.0 - r;
        g.row_sqrt.insert(g.row_sqrt.end(), static_cast<std::size_t>(frames), r);
    }
    return g;
}

void check_finite(const char* name, double v) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite ") + name + " loss");
}

}  // namespace

TrainerConfig TrainerConfig::desk() { return TrainerConfig{}; }

TrainerConfig TrainerConfig::paper() {
    TrainerConfig c;
    c.preset = "paper";
    c.learning_rate = 2e-4;
    c.batch_size = 128;
    c.diffusion_steps = 1000;
    c.sigma_min = 1e-4;
    c.sigma_max = 0.02;
    c.width = 64;
    c.grad_clip = 0.0;
    c.ema_warmup = false;
    return c;
}

TrainerConfig TrainerConfig::preset_named(std::string_view name) {
    if (name == "desk") return desk();
    if (name == "paper") return paper();
    throw UsageError("unknown preset '" + std::string(name) + "' (expected desk or paper)");
}

void TrainerConfig::validate() const {
    AdamConfig{learning_rate, adam_beta1, adam_beta2, adam_eps}.validate();
    if (!(disc_learning_rate > 0.0)) throw UsageError("disc_learning_rate must be positive");
    if (batch_size < 1) throw UsageError("batch_size must be positive");
    if (!(ema_decay > 0.0 && ema_decay < 1.0)) throw UsageError("ema_decay must lie in (0, 1)");
    if (steps < 0) throw UsageError("steps must be non-negative");
    if (checkpoint_every < 1) throw UsageError("checkpoint_every must be positive");
    if (disc_width < 1) throw UsageError("disc_width must be positive");
    weights.validate();
    make_schedule(diffusion_steps, sigma_min, sigma_max);
    DenoiserConfig dc;
    dc.rot_channels = 3;
    dc.steps = diffusion_steps;
    dc.width = width;
    dc.levels = levels;
    dc.validate();
}

std::string TrainerConfig::to_json() const {
    json j;
    j["preset"] = preset;
    j["learning_rate"] = learning_rate;
    j["disc_learning_rate"] = disc_learning_rate;
    j["adam_beta1"] = adam_beta1;
    j["adam_beta2"] = adam_beta2;
    j["adam_eps"] = adam_eps;
    j["batch_size"] = batch_size;
    j["T"] = diffusion_steps;
    j["sigma_min"] = sigma_min;
    j["sigma_max"] = sigma_max;
    j["ema_decay"] = ema_decay;
    j["ema_warmup"] = ema_warmup;
    j["weights"] = weights_json(weights);
    j["ablation"] = ablation_json(ablation);
    j["seed"] = seed;
    j["steps"] = steps;
    j["width"] = width;
    j["levels"] = levels;
    j["attention"] = attention;
    j["disc_width"] = disc_width;
    j["grad_clip"] = grad_clip;
    j["global_snr_weighting"] = global_snr_weighting;
    j["checkpoint_every"] = checkpoint_every;
    return j.dump(2);
}

TrainerConfig TrainerConfig::from_json(std::string_view text, const TrainerConfig& base) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw UsageError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw UsageError("config must be a JSON object");
    TrainerConfig c = base;
    for (const auto& [k, v] : j.items()) {
        if (k == "preset") c.preset = typed<std::string>(v, k);
        else if (k == "learning_rate") c.learning_rate = typed<double>(v, k);
        else if (k == "disc_learning_rate") c.disc_learning_rate = typed<double>(v, k);
        else if (k == "adam_beta1") c.adam_beta1 = typed<double>(v, k);
        else if (k == "adam_beta2") c.adam_beta2 = typed<double>(v, k);
        else if (k == "adam_eps") c.adam_eps = typed<double>(v, k);
        else if (k == "batch_size") c.batch_size = typed<int>(v, k);
        else if (k == "T") c.diffusion_steps = typed<int>(v, k);
        else if (k == "sigma_min") c.sigma_min = typed<double>(v, k);
        else if (k == "sigma_max") c.sigma_max = typed<double>(v, k);
        else if (k == "ema_decay") c.ema_decay = typed<double>(v, k);
        else if (k == "ema_warmup") c.ema_warmup = typed<bool>(v, k);
        else if (k == "weights") fill_weights(c.weights, v, k);
        else if (k == "ablation") fill_ablation(c.ablation, v, k);
        else if (k == "seed") c.seed = typed<std::uint64_t>(v, k);
        else if (k == "steps") c.steps = typed<int>(v, k);
        else if (k == "width") c.width = typed<int>(v, k);
        else if (k == "levels") c.levels = typed<int>(v, k);
        else if (k == "attention") c.attention = typed<bool>(v, k);
        else if (k == "disc_width") c.disc_width = typed<int>(v, k);
        else if (k == "grad_clip") c.grad_clip = typed<double>(v, k);
        else if (k == "global_snr_weighting") c.global_snr_weighting = typed<bool>(v, k);
        else if (k == "checkpoint_every") c.checkpoint_every = typed<int>(v, k);
        else throw UsageError("unknown config key '" + k + "'");
    }
    c.validate();
    return c;
}

TrainingState init_training(const TrainerConfig& config, const Dataset& dataset) {
    config.validate();
    if (dataset.clips.empty()) throw DataError("dataset has no clips");
    TrainingState s;
    s.config = config;
    DenoiserConfig& dc = s.denoiser_config;
    dc.rot_channels = dataset.skeleton.rotation_channels();
    dc.feet = dataset.skeleton.num_feet();
    dc.contents = std::max(1, dataset.num_contents());
    dc.styles = std::max(1, dataset.num_styles());
    dc.steps = config.diffusion_steps;
    dc.width = config.width;
    dc.levels = config.levels;
    dc.attention = config.attention;
    std::uint64_t seeds[3];
    std::mt19937_64 seeder(config.seed ^ 0x9e3779b97f4a7c15ull);
    for (auto& v : seeds) v = seeder();
    s.denoiser = Denoiser(dc, seeds[0]);
    s.discriminator = Discriminator({dc.rot_channels, dc.feet, config.disc_width}, seeds[1]);
    s.ema = s.denoiser.params();
    s.gen_opt = AdamState::zeros_like(s.denoiser.params());
    s.disc_opt = AdamState::zeros_like(s.discriminator.params());
    s.rng.seed(seeds[2]);
    s.stats = dataset.stats;
    s.skeleton = dataset.skeleton;
    s.content_names = dataset.content_names;
    s.style_names = dataset.style_names;
    s.frame_time = dataset.frame_time;
    const int frames = dataset.clips.front().num_frames();
    if (frames % (1 << config.levels) != 0) throw DataError("clip length must be divisible by 2^levels");
    return s;
}

LossReport train_step(TrainingState& s, const std::vector<MotionClip>& clips, const NoiseSchedule& sched) {
    const TrainerConfig& cfg = s.config;
    if (sched.steps() != s.denoiser_config.steps) throw UsageError("schedule length does not match the model");
    const LossWeights w = cfg.effective_weights();
    const bool use_disc = cfg.ablation.discriminator;

    // Draw from a copy of the sampling state; it is committed with the update.
    DrawState draw{s.rng, s.normal, s.order, s.cursor};
    const auto idx = next_batch(draw, static_cast<int>(clips.size()), cfg.batch_size);
    const Batch batch = make_batch(clips, idx);
    const int frames = batch.frames;

    std::vector<int> steps(static_cast<std::size_t>(batch.size()));
    std::uniform_int_distribution<int> pick_t(1, sched.steps());
    for (int& t : steps) t = pick_t(draw.rng);
    Matrix eps(batch.x0.rows(), batch.x0.cols());
    for (Eigen::Index i = 0; i < eps.size(); ++i) eps.data()[i] = draw.normal(draw.rng);

    const Matrix x_t = q_sample_batch(batch.x0, steps, eps, sched, frames);
    const auto coef = reconstruction_coefficients(steps, sched, frames);

    Denoiser& gen = s.denoiser;
    Discriminator& disc = s.discriminator;
    gen.params().zero_grad();
    disc.params().zero_grad();

    Tape tape;
    Var xt = tape.constant_ref(x_t);
    DenoiserOutput out = gen.forward(tape, xt, steps, batch.content, batch.style, frames);
    LossVars lv;
    lv.noise = loss_noise(tape, tape.constant_ref(eps), out.eps_hat);
    lv.root = loss_root(tape, tape.constant_ref(batch.root), out.root_hat);
    Var foot_prob = ag::sigmoid(tape, out.foot_logits);
    lv.foot = loss_foot(tape, tape.constant_ref(batch.foot), foot_prob);
    Var x0_hat = ag::add(tape, ag::scale_rows(tape, xt, coef.x_scale), ag::scale_rows(tape, out.eps_hat, coef.eps_scale));
    const GlobalWeights gw = global_weights(steps, sched, frames, cfg.global_snr_weighting);
    Var x0_weighted = ag::scale_rows(tape, x0_hat, gw.row_sqrt);
    lv.vel = loss_velocity(tape, x0_weighted, frames);
    lv.acc = loss_acceleration(tape, x0_weighted, frames);
    lv.has_physical = true;
    if (use_disc) {
        Var score = disc.forward(tape, x0_hat, out.root_hat, foot_prob, frames);
        // sqrt(w) (D - 1) + 1 turns the mean of (D - 1)^2 into the w-weighted mean.
        Var shifted = ag::add(tape, ag::scale_rows(tape, score, gw.clip_sqrt), tape.constant(gw.clip_offset));
        lv.adv = loss_generator_adv(tape, shifted);
        lv.has_adv = true;
    }
    Var total = weighted_total(tape, lv, w);

    LossTerms terms;
    terms.noise = tape.value(lv.noise)(0, 0);
    terms.foot = tape.value(lv.foot)(0, 0);
    terms.root = tape.value(lv.root)(0, 0);
    terms.vel = tape.value(lv.vel)(0, 0);
    terms.acc = tape.value(lv.acc)(0, 0);
    terms.adv = lv.has_adv ? tape.value(lv.adv)(0, 0) : 0.0;
    check_finite("noise", terms.noise);
    check_finite("foot", terms.foot);
    check_finite("root", terms.root);
    check_finite("velocity", terms.vel);
    check_finite("acceleration", terms.acc);
    check_finite("adversarial", terms.adv);
    LossReport report = total_loss(terms, w);
    check_finite("total", report.total);

    tape.backward(total);
    report.grad_norm = gen.params().grad_norm();
    if (!std::isfinite(report.grad_norm)) throw NumericError("non-finite generator gradient");

    if (use_disc) {
        // The generator pass also left gradients on the critic; start clean.
        disc.params().zero_grad();
        Tape dt;
        Var real = disc.forward(dt, dt.constant_ref(batch.x0), dt.constant_ref(batch.root), dt.constant_ref(batch.foot), frames);
        Var fake = disc.forward(dt, dt.constant_ref(tape.value(x0_hat)), dt.constant_ref(tape.value(out.root_hat)),
                                dt.constant_ref(tape.value(foot_prob)), frames);
        Var dl = loss_disc(dt, real, fake);
        report.disc = dt.value(dl)(0, 0);
        check_finite("discriminator", report.disc);
        dt.backward(dl);
        if (!std::isfinite(disc.params().grad_norm())) throw NumericError("non-finite discriminator gradient");
    }

    // Every check passed: apply the updates.
    clip_grad_norm(gen.params(), cfg.grad_clip);
    adam_update(gen.params(), s.gen_opt, {cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps});
    if (use_disc) {
        clip_grad_norm(disc.params(), cfg.grad_clip);
        adam_update(disc.params(), s.disc_opt, {cfg.disc_learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps});
    }
    gen.params().zero_grad();
    disc.params().zero_grad();

    double m = cfg.ema_decay;
    if (cfg.ema_warmup) {
        const auto n = static_cast<double>(s.ema_updates);
        m = std::min(m, (1.0 + n) / (10.0 + n));
    }
    ema_update(s.ema, gen.params(), m);
    ++s.ema_updates;
    s.rng = draw.rng;
    s.normal = draw.normal;
    s.order = std::move(draw.order);
    s.cursor = draw.cursor;
    ++s.step;
    return report;
}

std::string metrics_record(std::int64_t step, const LossReport& r) {
    json j;
    j["step"] = step;
    j["noise"] = r.terms.noise;
    j["foot"] = r.terms.foot;
    j["root"] = r.terms.root;
    j["adv"] = r.terms.adv;
    j["vel"] = r.terms.vel;
    j["acc"] = r.terms.acc;
    j["total"] = r.total;
    j["disc"] = r.disc;
    j["grad_norm"] = r.grad_norm;
    return j.dump();
}

TrainingState run_training(const TrainerConfig& config, const Dataset& dataset, const RunOptions& options) {
    namespace fs = std::filesystem;
    if (options.out_dir.empty()) throw UsageError("output directory is required");
    fs::create_directories(options.out_dir);
    const fs::path ckpt = options.out_dir / "checkpoint.mdck";
    const fs::path metrics = options.out_dir / "metrics.jsonl";

    TrainingState state;
    if (options.resume && fs::exists(ckpt)) {
        state = load_checkpoint(ckpt);
        if (state.config.to_json() != config.to_json()) {
            // Only the step budget may change between runs.
            TrainerConfig a = state.config, b = config;
            a.steps = b.steps = 0;
            if (a.to_json() != b.to_json()) throw UsageError("resume config differs from the checkpoint config");
            state.config.steps = config.steps;
        }
        // Keep exactly one metrics record per completed step.
        std::vector<std::string> lines;
        if (std::ifstream in(metrics); in) {
            std::string line;
            while (static_cast<std::int64_t>(lines.size()) < state.step && std::getline(in, line)) lines.push_back(line);
        }
        std::ofstream out(metrics, std::ios::trunc);
        for (const auto& l : lines) out << l << '\n';
    } else {
        state = init_training(config, dataset);
        std::ofstream(metrics, std::ios::trunc);
    }
    {
        std::ofstream cfg(options.out_dir / "config.json", std::ios::trunc);
        cfg << state.config.to_json() << '\n';
    }

    const NoiseSchedule sched = state.config.schedule();
    std::ofstream log(metrics, std::ios::app);
    while (state.step < state.config.steps) {
        const LossReport r = train_step(state, dataset.clips, sched);
        log << metrics_record(state.step, r) << '\n';
        if (options.on_step) options.on_step(state.step, r);
        if (state.step % state.config.checkpoint_every == 0 || state.step == state.config.steps) {
            log.flush();
            save_checkpoint(state, ckpt);
        }
    }
    if (state.config.steps == 0) save_checkpoint(state, ckpt);
    return state;
}

std::vector<std::string> ablation_rows() { return {"foot", "root", "physical", "discriminator", "full"}; }

Ablation ablation_for_row(std::string_view row) {
    Ablation a;
    if (row == "full") return a;
    if (row == "foot") a.foot = false;
    else if (row == "root") a.root = false;
    else if (row == "physical") a.physical = false;
    else if (row == "discriminator") a.discriminator = false;
    else throw UsageError("unknown ablation row '" + std::string(row) + "'");
    return a;
}

}  // namespace motiondiff
