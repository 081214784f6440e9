#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gssl/config.hpp"
#include "gssl/data.hpp"
#include "gssl/model.hpp"
#include "gssl/training.hpp"

namespace gssl {

struct DomainData {
    Dataset train;  // labelled only for the source domain
    Dataset test;   // always labelled
};

using Benchmark = std::map<std::string, DomainData>;

Benchmark generate_benchmark(const DataConfig& cfg);
void save_benchmark(const Benchmark& bench, const std::filesystem::path& root);
// <root>/<domain>/<split>
std::filesystem::path dataset_dir(const std::filesystem::path& root, const std::string& domain,
                                  const std::string& split);
// Checks every required directory before loading any of them.
Benchmark load_benchmark(const std::filesystem::path& root, std::span<const std::string> domains);

// Names of every domain a config touches (source, curriculum, evaluation).
std::vector<std::string> required_domains(const ExperimentConfig& cfg);

struct RunArtifacts {
    std::vector<TrainLogRow> pretrain_log;
    std::vector<TrainLogRow> ssl_log;
    std::vector<std::string> checkpoint_digests;  // one per saved phase, in order
};

// Pretraining from a fresh initialization. When out_dir is set, writes
// out_dir/checkpoints/pretrain and out_dir/pretrain_log.csv.
ModelState run_pretrain(const ExperimentConfig& cfg, const Dataset& source,
                        RunArtifacts* artifacts = nullptr,
                        const std::optional<std::filesystem::path>& out_dir = std::nullopt);

// SSL through the given unlabelled stages in order. Each stage starts from the
// previous phase's stored (f32) state; with out_dir it is reloaded from disk.
ModelState run_ssl(const ExperimentConfig& cfg, const ModelState& start, const Dataset& source,
                   std::span<const Dataset* const> stages, RunArtifacts* artifacts = nullptr,
                   const std::optional<std::filesystem::path>& out_dir = std::nullopt);

// Pretraining (or `pretrained`, if given) followed by the configured curriculum.
ModelState run_training(const ExperimentConfig& cfg, const Benchmark& bench,
                        const std::optional<ModelState>& pretrained = std::nullopt,
                        RunArtifacts* artifacts = nullptr,
                        const std::optional<std::filesystem::path>& out_dir = std::nullopt);

void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace gssl
