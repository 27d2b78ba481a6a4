#pragma once

// Training objectives. Squared-error terms are means over every element of
// the batch; the velocity and acceleration terms sum the squared difference
// over the three angles of a joint and average over clips, frame pairs (or
// triples) and joints.

#include "motiondiff/autograd.hpp"

namespace motiondiff {

struct LossWeights {
    double noise = 1.0;  // lambda_1
    double foot = 1.0;   // lambda_2
    double root = 1.0;   // lambda_3
    double adv = 1.0;    // lambda_4
    double vel = 0.01;   // lambda_5
    double acc = 0.01;   // lambda_6

    void validate() const;
};

struct Ablation {
    bool foot = true;
    bool root = true;
    bool physical = true;
    bool discriminator = true;
};

// Zeroes the weights of disabled terms.
LossWeights apply_ablation(LossWeights w, const Ablation& a);

struct LossTerms {
    double noise = 0.0, foot = 0.0, root = 0.0, adv = 0.0, vel = 0.0, acc = 0.0;
};

struct LossReport {
    LossTerms terms;
    double total = 0.0;
    double disc = 0.0;  // discriminator objective, reported separately
    double grad_norm = 0.0;
};

LossReport total_loss(const LossTerms& terms, const LossWeights& weights);

Var loss_noise(Tape& t, Var eps, Var eps_hat);
Var loss_foot(Tape& t, Var f, Var f_hat);
Var loss_root(Tape& t, Var r, Var r_hat);
Var loss_velocity(Tape& t, Var x0_hat, int frames);
Var loss_acceleration(Tape& t, Var x0_hat, int frames);
// mean (D(real) - 1)^2 + mean D(fake)^2 over clips.
Var loss_disc(Tape& t, Var d_real, Var d_fake);
// mean (D(fake) - 1)^2 over clips.
Var loss_generator_adv(Tape& t, Var d_fake);

// Differentiable weighted sum; terms with zero weight are skipped entirely.
struct LossVars {
    Var noise, foot, root, adv, vel, acc;
    bool has_adv = false, has_physical = false;
};
Var weighted_total(Tape& t, const LossVars& v, const LossWeights& w);

}  // namespace motiondiff
