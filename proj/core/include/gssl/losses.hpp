#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gssl/tensor.hpp"

namespace gssl {

inline constexpr double kLogFloor = 1e-12;

struct LossWeights {
    double consistency = 1.0;
    double uniformity = 1.0;
    double prototype = 1.0;
    double supervised = 1.0;
};

struct LossReport {
    double l_c = 0.0;
    double l_u = 0.0;
    double l_p = 0.0;
    double l_s = 0.0;
    double total = 0.0;
    LossWeights weights;
    std::size_t n_certain = 0;
};

// Weighted mean over pixels of −Σ_k target_k log(pred_k). Inputs are N×K×H×W
// probability maps; weights is N×H×W (binary mask or soft weights). Returns 0
// when all weights are zero. Both maps stay in the graph.
Tensor loss_consistency(const Tensor& target, const Tensor& pred, std::span<const double> weights);

// Mean over pooled features of Σ_{j≠i} exp(−t‖z_i − z_j‖²), pooling N×F×h×w
// embeddings by `pool`. Fewer than two pooled features give 0.
Tensor loss_uniformity(const Tensor& z, std::size_t pool = 4, double t = 2.0);

// (1/K) Σ_i max_j [PᵀP − 2I]_ij for an F×K prototype matrix; needs K ≥ 2.
Tensor loss_prototype(const Tensor& prototypes);

struct SupervisedLoss {
    Tensor value;
    bool all_void = false;
};

// Mean −log p(label) over pixels with a known label; labels: N×H×W, −1 void,
// ids ≥ K skipped.
SupervisedLoss loss_supervised(const Tensor& probs, std::span<const std::int32_t> labels);

// Weighted sum; rejects non-finite components by name.
LossReport total_loss(double l_c, double l_u, double l_p, double l_s, const LossWeights& weights);

}  // namespace gssl
