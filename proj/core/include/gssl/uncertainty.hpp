#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gssl/tensor.hpp"

namespace gssl {

// Per-pixel boolean map over N×H×W, stored as 0/1 bytes.
struct PixelMask {
    std::size_t n = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> values;

    std::size_t size() const { return values.size(); }
    std::size_t count() const;
    double fraction() const;
    Tensor as_tensor() const;
};

struct MaskPair {
    PixelMask consistency;
    PixelMask certainty;
    double gamma_used = 0.0;
    double p_consistent = 0.0;
    double p_certain = 0.0;
};

// Argmax over channel 1 of an N×K×H×W map; ties go to the lowest class index.
std::vector<std::size_t> argmax_classes(const Tensor& scores);
// Per-pixel maximum over channel 1.
std::vector<double> max_scores(const Tensor& scores);

// 1 where both views agree on the argmax class.
PixelMask consistency_mask(const Tensor& first, const Tensor& second);

// Order statistic solving mean(certain) = mean(consistent): ascending max
// scores indexed at (count − consistent), clamped to the last element.
double calculate_gamma(const PixelMask& consistency, const Tensor& scores);

// Certain iff max score ≥ gamma.
PixelMask certainty_mask(const Tensor& scores, double gamma);

// Per-batch min-max normalization of the per-pixel max of a probability map;
// a constant batch maps to 0.5 everywhere.
std::vector<double> soft_certainty_mask(const Tensor& probs);

// Per-class thresholds; pixels are grouped by argmax. Classes claiming no
// pixels keep their entry from `previous` (or −1 when previous is empty).
std::vector<double> calculate_gamma_per_class(const PixelMask& consistency, const Tensor& scores,
                                              std::span<const double> previous = {});

// Certain iff max score ≥ gammas[argmax].
PixelMask certainty_mask_per_class(const Tensor& scores, std::span<const double> gammas);

}  // namespace gssl
