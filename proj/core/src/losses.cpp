#include "motiondiff/losses.hpp"

#include <cmath>
#include <string>

#include "motiondiff/error.hpp"

namespace motiondiff {

namespace {

Var smoothness(Tape& t, Var x0_hat, int frames, int order, const char* name) {
    const Matrix& x = t.value(x0_hat);
    if (frames <= order) throw UsageError(std::string(name) + " needs more than " + std::to_string(order) + " frames");
    if (x.cols() % 3 != 0) throw UsageError(std::string(name) + " expects three angles per joint");
    const Eigen::Index batch = x.rows() / frames;
    const double count = static_cast<double>(batch) * (frames - order) * static_cast<double>(x.cols() / 3);
    Var d = ag::temporal_difference(t, x0_hat, frames, order);
    return ag::scale(t, ag::sum_squares(t, d), 1.0 / count);
}

}  // namespace

void LossWeights::validate() const {
    for (double v : {noise, foot, root, adv, vel, acc}) {
        if (!std::isfinite(v) || v < 0.0) throw UsageError("loss weights must be finite and non-negative");
    }
}

LossWeights apply_ablation(LossWeights w, const Ablation& a) {
    if (!a.foot) w.foot = 0.0;
    if (!a.root) w.root = 0.0;
    if (!a.physical) w.vel = w.acc = 0.0;
    if (!a.discriminator) w.adv = 0.0;
    return w;
}

LossReport total_loss(const LossTerms& terms, const LossWeights& w) {
    LossReport r;
    r.terms = terms;
    r.total = w.noise * terms.noise + w.foot * terms.foot + w.root * terms.root + w.adv * terms.adv +
              w.vel * terms.vel + w.acc * terms.acc;
    return r;
}

Var loss_noise(Tape& t, Var eps, Var eps_hat) { return ag::mean_squared_error(t, eps_hat, eps); }
Var loss_foot(Tape& t, Var f, Var f_hat) { return ag::mean_squared_error(t, f_hat, f); }
Var loss_root(Tape& t, Var r, Var r_hat) { return ag::mean_squared_error(t, r_hat, r); }

Var loss_velocity(Tape& t, Var x0_hat, int frames) { return smoothness(t, x0_hat, frames, 1, "velocity loss"); }
Var loss_acceleration(Tape& t, Var x0_hat, int frames) { return smoothness(t, x0_hat, frames, 2, "acceleration loss"); }

Var loss_disc(Tape& t, Var d_real, Var d_fake) {
    // Copy shapes first: recording nodes may reallocate the tape's storage.
    const Eigen::Index rr = t.value(d_real).rows(), rc = t.value(d_real).cols();
    const Eigen::Index fr = t.value(d_fake).rows(), fc = t.value(d_fake).cols();
    Var real = ag::mean_squared_error(t, d_real, t.constant(Matrix::Ones(rr, rc)));
    Var fake = ag::mean_squared_error(t, d_fake, t.constant(Matrix::Zero(fr, fc)));
    return ag::add(t, real, fake);
}

Var loss_generator_adv(Tape& t, Var d_fake) {
    const Eigen::Index fr = t.value(d_fake).rows(), fc = t.value(d_fake).cols();
    return ag::mean_squared_error(t, d_fake, t.constant(Matrix::Ones(fr, fc)));
}

Var weighted_total(Tape& t, const LossVars& v, const LossWeights& w) {
    Var total = ag::scale(t, v.noise, w.noise);
    auto add = [&](Var term, double weight) {
        if (weight != 0.0) total = ag::add(t, total, ag::scale(t, term, weight));
    };
    add(v.foot, w.foot);
    add(v.root, w.root);
    if (v.has_adv) add(v.adv, w.adv);
    if (v.has_physical) {
        add(v.vel, w.vel);
        add(v.acc, w.acc);
    }
    return total;
}

}  // namespace motiondiff
