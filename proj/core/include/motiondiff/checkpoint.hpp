#pragma once

// Versioned checkpoint container:
//   magic "MDCK" | u32 version | u64 header bytes | JSON header | f64 tensors
// The header records the kind ("training" or "classifier"), the metadata of
// the run and the name and shape of every tensor in storage order.

#include <filesystem>
#include <string>
#include <vector>

#include "motiondiff/model.hpp"
#include "motiondiff/trainer.hpp"

namespace motiondiff {

void save_checkpoint(const TrainingState& state, const std::filesystem::path& path);
TrainingState load_checkpoint(const std::filesystem::path& path);

struct ClassifierBundle {
    Classifier model;
    std::vector<std::string> content_names;
    std::uint64_t seed = 0;
    int frames = kClipFrames;
};

void save_classifier(const ClassifierBundle& bundle, const std::filesystem::path& path);
ClassifierBundle load_classifier(const std::filesystem::path& path);

}  // namespace motiondiff
