#pragma once

// Procedural motion generator used as the default, fully reproducible dataset.
//
// Content selects the gait (walk, run, jump, kick, punch, march) and style
// scales speed, cadence, arm swing, posture and bounce. Leg poses are solved
// by analytic IK from planted foot trajectories, so the foot-contact labels
// come straight from the gait phase.

#include <cstdint>
#include <string>
#include <vector>

#include "motiondiff/motion.hpp"

namespace motiondiff {

SkeletonDef make_synthetic_skeleton();

std::vector<std::string> synthetic_content_names(int content_classes);
std::vector<std::string> synthetic_style_names(int style_classes);

// Clip i gets content i % C and style (i / C) % S, so labels are balanced.
std::vector<MotionClip> generate_synthetic(int num_clips, int content_classes, int style_classes, std::uint64_t seed,
                                           int frames = kClipFrames);

}  // namespace motiondiff
