#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gssl/tensor.hpp"

namespace gssl {

struct ModelConfig {
    std::size_t in_channels = 3;
    std::size_t encoder_width1 = 32;
    std::size_t encoder_width2 = 64;
    std::size_t feature_dim = 64;
    std::size_t projection_hidden = 64;
    std::size_t num_classes = 4;
    double tau = 0.07;       // prototype branch
    double head_tau = 1.0;   // head branch
};

// Spatial reduction of the encoder (two stride-2 convolutions).
inline constexpr std::size_t kDownsample = 4;

struct Parameter {
    std::string name;
    Tensor value;
};

// Unit-norm class prototypes as the columns of an F×K matrix. A class that has
// never been seen is unavailable and its column is zero.
struct PrototypeBank {
    Tensor vectors;
    Tensor history;
    std::vector<bool> fresh;
    std::vector<bool> available;

    static PrototypeBank empty(std::size_t feature_dim, std::size_t num_classes);
    std::size_t num_classes() const { return fresh.size(); }
    bool all_available() const;
    // Throws naming the first unavailable class.
    void require_available() const;
};

struct ModelState {
    ModelConfig config;
    std::vector<Parameter> params;
    PrototypeBank bank;
    std::optional<double> gamma;
    std::vector<double> class_gamma;

    Tensor& param(const std::string& name);
    const Tensor& param(const std::string& name) const;
    std::vector<Tensor> trainable() const;
    ModelState clone() const;
};

ModelState init_model(const ModelConfig& config, std::uint64_t seed);

// N×3×H×W → N×F×(H/4)×(W/4).
Tensor encode(const Tensor& x, const ModelState& m);
// Per-pixel perceptron followed by L2 normalization over channels.
Tensor project(const Tensor& features, const ModelState& m);
// 1×1 convolution to K logits. With frozen=true the head parameters take no gradient.
Tensor head_scores(const Tensor& features, const ModelState& m, bool frozen = false);

struct PrototypeUpdate {
    Tensor prototypes;  // F×K, differentiable in the embeddings
    PrototypeBank bank;
};

// z: N×F×h×w unit embeddings; labels: N×h×w with −1 void and ids ≥ K ignored.
// Classes without pixels fall back to the bank history and are marked stale.
PrototypeUpdate compute_prototypes(const Tensor& z, std::span<const std::int32_t> labels,
                                   const PrototypeBank& bank);

// Cosine scores N×K×h×w of embeddings against prototype columns.
Tensor prototype_scores(const Tensor& z, const Tensor& prototypes);
Tensor prototype_scores(const Tensor& z, const PrototypeBank& bank);

// Bilinear upsampling to H×W followed by a channel softmax at temperature tau.
Tensor segment_probs(const Tensor& scores, std::size_t height, std::size_t width, double tau);

// Nearest-neighbour label downsampling consistent with align-corners upsampling.
std::vector<std::int32_t> downsample_labels(std::span<const std::int32_t> labels, std::size_t n,
                                            std::size_t height, std::size_t width,
                                            std::size_t out_h, std::size_t out_w);

}  // namespace gssl
