#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gssl/augment.hpp"
#include "gssl/data.hpp"
#include "gssl/model.hpp"
#include "gssl/training.hpp"

namespace gssl {

// Schema violation; the message starts with the offending JSON path.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct DomainEntry {
    std::string name;
    DomainStyle style;
    bool include_ood = false;
};

struct DataConfig {
    std::string root = "data";  // relative paths resolve against the output directory
    std::size_t extent = 32;
    std::size_t n_train = 48;
    std::size_t n_test = 16;
    std::uint64_t seed = 7;
    std::string source = "A";
    std::vector<DomainEntry> domains;
};

struct EvalConfig {
    double beta = 0.5;
    std::string test_domain = "C";
    std::string cross_domain_from = "B";
    std::vector<std::size_t> validation_sizes{1, 2, 5, 10};
    std::size_t trials = 20;
    std::size_t batch = 8;
};

struct ExperimentConfig {
    DataConfig data;
    ModelConfig model;
    AugmentConfig augment;
    TrainConfig train;
    EvalConfig eval;
};

// Three-domain synthetic benchmark (A source, B intermediate, C shifted with
// unknown objects) with curriculum [B, C] evaluated on C.
ExperimentConfig default_config();

// Parses a JSON document layered over the defaults, then applies dotted
// `path=value` overrides. Unknown keys and type errors throw ConfigError.
ExperimentConfig parse_config(const std::string& json_text,
                              std::span<const std::string> overrides = {});
ExperimentConfig load_config(const std::filesystem::path& path,
                             std::span<const std::string> overrides = {});

// Fully resolved document (every field present), pretty-printed.
std::string config_to_json(const ExperimentConfig& cfg);

// FNV-1a 64 over the compact resolved document.
std::uint64_t config_hash(const ExperimentConfig& cfg);
std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

}  // namespace gssl
