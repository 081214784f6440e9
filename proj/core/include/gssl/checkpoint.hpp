#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "gssl/model.hpp"

namespace gssl {

struct CheckpointMeta {
    std::uint64_t step = 0;
    std::string config_hash;
    std::string parent_digest;  // digest of the checkpoint this run started from, if any
};

// Directory layout: checkpoint.json plus one GTSR file per entry
// (parameters and prototype bank in f32, flags in u8, thresholds in f64).
void save_checkpoint(const std::filesystem::path& dir, const ModelState& m, const CheckpointMeta& meta);

struct LoadedCheckpoint {
    ModelState model;
    CheckpointMeta meta;
};
LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);

// FNV-1a 64 over every file (sorted by name, content and name), as hex.
std::string checkpoint_digest(const std::filesystem::path& dir);

}  // namespace gssl
