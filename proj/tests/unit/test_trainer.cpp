#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "motiondiff/error.hpp"
#include "motiondiff/trainer.hpp"

using namespace motiondiff;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "motiondiff_unit" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Small enough for many steps in a unit test.
TrainerConfig tiny_config(std::uint64_t seed = 3) {
    TrainerConfig c = TrainerConfig::desk();
    c.seed = seed;
    c.diffusion_steps = 20;
    c.sigma_min = 5e-3;
    c.sigma_max = 0.5;
    c.width = 16;
    c.disc_width = 8;
    c.batch_size = 4;
    c.steps = 6;
    return c;
}

const Dataset& small_dataset() {
    static const Dataset d = make_synthetic_dataset(16, 2, 2, 11);
    return d;
}

bool same_report(const LossReport& a, const LossReport& b) {
    return a.terms.noise == b.terms.noise && a.terms.foot == b.terms.foot && a.terms.root == b.terms.root &&
           a.terms.adv == b.terms.adv && a.terms.vel == b.terms.vel && a.terms.acc == b.terms.acc &&
           a.total == b.total && a.disc == b.disc && a.grad_norm == b.grad_norm;
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("presets") {
    const TrainerConfig d = TrainerConfig::desk();
    CHECK(d.batch_size == 16);
    CHECK(d.diffusion_steps == 200);
    CHECK(d.steps == 2000);
    CHECK(d.grad_clip == 1.0);

    const TrainerConfig p = TrainerConfig::paper();
    CHECK(p.learning_rate == 2e-4);
    CHECK(p.batch_size == 128);
    CHECK(p.diffusion_steps == 1000);
    CHECK(p.sigma_min == 1e-4);
    CHECK(p.sigma_max == 0.02);
    CHECK(p.ema_decay == 0.9999);
    CHECK(p.adam_beta1 == 0.9);
    CHECK(p.adam_beta2 == 0.999);
    CHECK(p.adam_eps == 1e-8);
    CHECK(p.grad_clip <= 0.0);
    CHECK(p.weights.noise == 1.0);
    CHECK(p.weights.vel == 0.01);
    CHECK(p.weights.acc == 0.01);
    CHECK_NOTHROW(p.validate());
    CHECK_NOTHROW(d.validate());

    CHECK(TrainerConfig::preset_named("paper").to_json() == p.to_json());
    CHECK_THROWS_AS(TrainerConfig::preset_named("huge"), UsageError);
}

TEST_CASE("config json round trip and overrides") {
    const TrainerConfig p = TrainerConfig::paper();
    CHECK(TrainerConfig::from_json(p.to_json(), TrainerConfig::desk()).to_json() == p.to_json());

    const TrainerConfig o = TrainerConfig::from_json(R"({"steps": 7, "weights": {"vel": 0.5}, "ablation": {"root": false}})",
                                                     TrainerConfig::desk());
    CHECK(o.steps == 7);
    CHECK(o.weights.vel == 0.5);
    CHECK(o.weights.acc == 0.01);
    CHECK_FALSE(o.ablation.root);
    CHECK(o.effective_weights().root == 0.0);
    CHECK(o.batch_size == 16);
}

TEST_CASE("config errors name the key") {
    const TrainerConfig base = TrainerConfig::desk();
    auto message = [&](const std::string& text) {
        try {
            TrainerConfig::from_json(text, base);
        } catch (const UsageError& e) {
            return std::string(e.what());
        }
        return std::string("no error");
    };
    CHECK(message(R"({"learning_rat": 1})").find("learning_rat") != std::string::npos);
    CHECK(message(R"({"weights": {"velocity": 1}})").find("weights.velocity") != std::string::npos);
    CHECK(message(R"({"batch_size": "16"})").find("batch_size") != std::string::npos);
    CHECK(message(R"({"batch_size": 1.5})").find("batch_size") != std::string::npos);
    CHECK(message(R"({"attention": 1})").find("attention") != std::string::npos);
    CHECK(message(R"({"seed": -1})").find("seed") != std::string::npos);
    CHECK(message(R"({"batch_size": 10000000000})").find("batch_size") != std::string::npos);
    CHECK(message("[1, 2]") != "no error");
    CHECK(message("{not json") != "no error");
    CHECK(message(R"({"batch_size": 0})") != "no error");
    CHECK(message(R"({"ema_decay": 1.0})") != "no error");
    CHECK(message(R"({"weights": {"foot": -1}})") != "no error");
    CHECK(message(R"({"T": 0})") != "no error");
}

TEST_CASE("same seed gives bit-identical loss sequences") {
    const TrainerConfig c = tiny_config();
    const NoiseSchedule sched = c.schedule();
    TrainingState a = init_training(c, small_dataset());
    TrainingState b = init_training(c, small_dataset());
    for (int i = 0; i < 5; ++i) {
        const LossReport ra = train_step(a, small_dataset().clips, sched);
        const LossReport rb = train_step(b, small_dataset().clips, sched);
        CHECK(same_report(ra, rb));
    }
    CHECK(a.denoiser.params().fingerprint() == b.denoiser.params().fingerprint());
    CHECK(a.ema.fingerprint() == b.ema.fingerprint());
    CHECK(a.step == 5);

    TrainingState other = init_training(tiny_config(4), small_dataset());
    CHECK(other.denoiser.params().fingerprint() != init_training(c, small_dataset()).denoiser.params().fingerprint());
}

TEST_CASE("loss report total follows the weights") {
    TrainerConfig c = tiny_config();
    TrainingState s = init_training(c, small_dataset());
    const LossReport r = train_step(s, small_dataset().clips, c.schedule());
    const LossWeights w = c.effective_weights();
    const double expect = w.noise * r.terms.noise + w.foot * r.terms.foot + w.root * r.terms.root +
                          w.adv * r.terms.adv + w.vel * r.terms.vel + w.acc * r.terms.acc;
    CHECK(r.total == doctest::Approx(expect).epsilon(1e-12));
    CHECK(r.terms.adv > 0.0);
    CHECK(r.disc > 0.0);
    CHECK(r.grad_norm > 0.0);

    const auto j = nlohmann::json::parse(metrics_record(1, r));
    for (const char* key : {"step", "noise", "foot", "root", "adv", "vel", "acc", "total", "disc", "grad_norm"})
        CHECK(j.contains(key));
    CHECK(j["total"].get<double>() == r.total);
}

TEST_CASE("discriminator off leaves the discriminator unchanged") {
    TrainerConfig c = tiny_config();
    c.ablation.discriminator = false;
    TrainingState s = init_training(c, small_dataset());
    const auto disc0 = s.discriminator.params().fingerprint();
    const auto gen0 = s.denoiser.params().fingerprint();
    const LossReport r = train_step(s, small_dataset().clips, c.schedule());
    CHECK(s.discriminator.params().fingerprint() == disc0);
    CHECK(s.denoiser.params().fingerprint() != gen0);
    CHECK(r.terms.adv == 0.0);
    CHECK(r.disc == 0.0);
}

TEST_CASE("all weights zero leaves the parameters unchanged") {
    TrainerConfig c = tiny_config();
    c.weights = {0, 0, 0, 0, 0, 0};
    TrainingState s = init_training(c, small_dataset());
    const auto gen0 = s.denoiser.params().fingerprint();
    const auto disc0 = s.discriminator.params().fingerprint();
    const LossReport r = train_step(s, small_dataset().clips, c.schedule());
    CHECK(r.total == 0.0);
    CHECK(s.denoiser.params().fingerprint() == gen0);
    CHECK(s.ema.fingerprint() == gen0);
    // The critic trains on its own objective; only the generator is weighted.
    CHECK(s.discriminator.params().fingerprint() != disc0);

    c.ablation.discriminator = false;
    TrainingState q = init_training(c, small_dataset());
    const auto q_gen = q.denoiser.params().fingerprint();
    const auto q_disc = q.discriminator.params().fingerprint();
    train_step(q, small_dataset().clips, c.schedule());
    CHECK(q.denoiser.params().fingerprint() == q_gen);
    CHECK(q.discriminator.params().fingerprint() == q_disc);
}

TEST_CASE("generator and discriminator updates are isolated") {
    // The critic's step size cannot reach the generator within a step, and the
    // generator's step size cannot reach the critic.
    TrainerConfig a = tiny_config();
    TrainerConfig b = a;
    b.disc_learning_rate = 0.05;
    TrainerConfig g = a;
    g.learning_rate = 0.05;
    TrainingState sa = init_training(a, small_dataset());
    TrainingState sb = init_training(b, small_dataset());
    TrainingState sg = init_training(g, small_dataset());
    train_step(sa, small_dataset().clips, a.schedule());
    train_step(sb, small_dataset().clips, b.schedule());
    train_step(sg, small_dataset().clips, g.schedule());
    CHECK(sa.denoiser.params().fingerprint() == sb.denoiser.params().fingerprint());
    CHECK(sa.discriminator.params().fingerprint() != sb.discriminator.params().fingerprint());
    CHECK(sa.discriminator.params().fingerprint() == sg.discriminator.params().fingerprint());
    CHECK(sa.denoiser.params().fingerprint() != sg.denoiser.params().fingerprint());
}

TEST_CASE("ema follows the warmup-capped decay") {
    TrainerConfig c = tiny_config();
    c.ema_warmup = true;
    TrainingState s = init_training(c, small_dataset());
    ParameterSet shadow = s.ema;
    train_step(s, small_dataset().clips, c.schedule());
    // First update: m = min(0.9999, 1/10).
    const double m = 0.1;
    for (std::size_t p = 0; p < shadow.size(); ++p) {
        const Matrix expect = m * shadow[p].value + (1.0 - m) * s.denoiser.params()[p].value;
        CHECK((expect - s.ema[p].value).cwiseAbs().maxCoeff() < 1e-15);
    }
    CHECK(s.ema_updates == 1);

    c.ema_warmup = false;
    TrainingState q = init_training(c, small_dataset());
    shadow = q.ema;
    train_step(q, small_dataset().clips, c.schedule());
    for (std::size_t p = 0; p < shadow.size(); ++p) {
        const Matrix expect = 0.9999 * shadow[p].value + 0.0001 * q.denoiser.params()[p].value;
        CHECK((expect - q.ema[p].value).cwiseAbs().maxCoeff() < 1e-15);
    }
}

TEST_CASE("non-finite loss aborts the step and names the term") {
    TrainerConfig c = tiny_config();
    Dataset bad = small_dataset();
    for (auto& clip : bad.clips) clip.root(3, 1) = std::numeric_limits<double>::quiet_NaN();
    TrainingState s = init_training(c, bad);
    const auto gen0 = s.denoiser.params().fingerprint();
    const auto disc0 = s.discriminator.params().fingerprint();
    try {
        train_step(s, bad.clips, c.schedule());
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("root") != std::string::npos);
    }
    CHECK(s.step == 0);
    CHECK(s.ema_updates == 0);
    CHECK(s.denoiser.params().fingerprint() == gen0);
    CHECK(s.discriminator.params().fingerprint() == disc0);
}

TEST_CASE("mismatched inputs are rejected") {
    TrainerConfig c = tiny_config();
    TrainingState s = init_training(c, small_dataset());
    CHECK_THROWS_AS(train_step(s, small_dataset().clips, make_schedule(10, 1e-3, 0.1)), UsageError);
    Dataset empty = small_dataset();
    empty.clips.clear();
    CHECK_THROWS_AS(init_training(c, empty), DataError);
    Dataset odd = small_dataset();
    for (auto& clip : odd.clips) {
        clip.rotations.conservativeResize(24, Eigen::NoChange);
        clip.root.conservativeResize(24, Eigen::NoChange);
        clip.foot_contact.conservativeResize(24, Eigen::NoChange);
    }
    c.levels = 4;
    CHECK_THROWS_AS(init_training(c, odd), DataError);
    c.levels = 6;
    CHECK_THROWS_AS(init_training(c, small_dataset()), UsageError);
}

TEST_CASE("noise loss halves over 200 desk steps on 64 clips") {
    // Held for three seeds.
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const Dataset data = make_synthetic_dataset(64, 3, 3, 100 + seed);
        TrainerConfig c = TrainerConfig::desk();
        c.seed = seed;
        TrainingState s = init_training(c, data);
        const NoiseSchedule sched = c.schedule();
        double first = 0.0, last = 0.0;
        for (int i = 0; i < 200; ++i) {
            const LossReport r = train_step(s, data.clips, sched);
            if (i < 10) first += r.terms.noise / 10.0;
            if (i >= 190) last += r.terms.noise / 10.0;
        }
        INFO("seed " << seed << ": first " << first << " last " << last);
        CHECK(last < 0.5 * first);
    }
}

TEST_CASE("run writes one metrics record per step and resumes exactly") {
    TrainerConfig c = tiny_config();
    c.steps = 8;
    c.checkpoint_every = 3;

    const fs::path whole = scratch("run_whole");
    std::vector<LossReport> seen;
    const TrainingState full = run_training(c, small_dataset(), {whole, false, [&](std::int64_t, const LossReport& r) {
                                                                     seen.push_back(r);
                                                                 }});
    CHECK(full.step == 8);
    CHECK(seen.size() == 8);
    std::ifstream in(whole / "metrics.jsonl");
    std::string line;
    std::int64_t n = 0;
    while (std::getline(in, line)) {
        const auto j = nlohmann::json::parse(line);
        CHECK(j["step"].get<std::int64_t>() == ++n);
    }
    CHECK(n == 8);
    CHECK(fs::exists(whole / "checkpoint.mdck"));
    CHECK(TrainerConfig::from_json(slurp(whole / "config.json"), TrainerConfig::desk()).to_json() == c.to_json());

    // Interrupted at step 5 (last checkpoint 3) and resumed.
    const fs::path split = scratch("run_split");
    TrainerConfig shorter = c;
    shorter.steps = 5;
    run_training(shorter, small_dataset(), {split, false, {}});
    {
        // Simulate a crash after step 5: checkpoint holds step 5, metrics has an extra stray line.
        std::ofstream(split / "metrics.jsonl", std::ios::app) << "{\"step\": 99}\n";
    }
    std::vector<LossReport> resumed;
    const TrainingState tail = run_training(c, small_dataset(), {split, true, [&](std::int64_t, const LossReport& r) {
                                                                     resumed.push_back(r);
                                                                 }});
    REQUIRE(resumed.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) CHECK(same_report(resumed[i], seen[5 + i]));
    CHECK(tail.denoiser.params().fingerprint() == full.denoiser.params().fingerprint());
    CHECK(tail.ema.fingerprint() == full.ema.fingerprint());
    CHECK(slurp(split / "metrics.jsonl") == slurp(whole / "metrics.jsonl"));
    CHECK(slurp(split / "checkpoint.mdck") == slurp(whole / "checkpoint.mdck"));

    TrainerConfig changed = c;
    changed.learning_rate = 5e-4;
    CHECK_THROWS_AS(run_training(changed, small_dataset(), {split, true, {}}), UsageError);
    CHECK_THROWS_AS(run_training(c, small_dataset(), {fs::path(), false, {}}), UsageError);
}

TEST_CASE("ablation rows") {
    const auto rows = ablation_rows();
    REQUIRE(rows.size() == 5);
    for (const char* name : {"full", "foot", "root", "physical", "discriminator"})
        CHECK(std::find(rows.begin(), rows.end(), name) != rows.end());

    const LossWeights w;
    CHECK(apply_ablation(w, ablation_for_row("full")).foot == 1.0);
    CHECK(apply_ablation(w, ablation_for_row("foot")).foot == 0.0);
    CHECK(apply_ablation(w, ablation_for_row("root")).root == 0.0);
    const LossWeights phys = apply_ablation(w, ablation_for_row("physical"));
    CHECK(phys.vel == 0.0);
    CHECK(phys.acc == 0.0);
    CHECK(phys.noise == 1.0);
    CHECK(apply_ablation(w, ablation_for_row("discriminator")).adv == 0.0);
    CHECK_FALSE(ablation_for_row("discriminator").discriminator);
    CHECK_THROWS_AS(ablation_for_row("everything"), UsageError);
}

}  // TEST_SUITE
