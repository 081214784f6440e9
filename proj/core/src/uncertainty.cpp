#include "gssl/uncertainty.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace gssl {

std::size_t PixelMask::count() const {
    std::size_t c = 0;
    for (auto v : values) c += v;
    return c;
}

double PixelMask::fraction() const {
    if (values.empty()) return 0.0;
    return static_cast<double>(count()) / static_cast<double>(values.size());
}

Tensor PixelMask::as_tensor() const {
    std::vector<double> v(values.begin(), values.end());
    return Tensor::from_vector({n, height, width}, std::move(v));
}

namespace {

void require_map(const Tensor& scores, const char* op) {
    if (scores.rank() != 4 || scores.dim(1) == 0) {
        throw std::invalid_argument(std::string(op) + ": expected NxKxHxW scores, got " +
                                    shape_to_string(scores.shape()));
    }
    if (scores.numel() == 0) throw std::invalid_argument(std::string(op) + ": empty input");
}

PixelMask blank_mask(const Tensor& scores) {
    PixelMask m;
    m.n = scores.dim(0);
    m.height = scores.dim(2);
    m.width = scores.dim(3);
    m.values.assign(m.n * m.height * m.width, 0);
    return m;
}

// R = (1 − p_c)·count is taken in integer form as the number of inconsistent
// pixels, so int(R) carries no rounding error.
double order_statistic(std::vector<double> maxima, std::size_t consistent) {
    std::sort(maxima.begin(), maxima.end());
    const std::size_t index = std::min(maxima.size() - consistent, maxima.size() - 1);
    return maxima[index];
}

}  // namespace

std::vector<std::size_t> argmax_classes(const Tensor& scores) {
    require_map(scores, "argmax_classes");
    const std::size_t n = scores.dim(0), k = scores.dim(1), hw = scores.dim(2) * scores.dim(3);
    const auto s = scores.data();
    std::vector<std::size_t> out(n * hw, 0);
    for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t p = 0; p < hw; ++p) {
            std::size_t best = 0;
            double best_v = s[b * k * hw + p];
            for (std::size_t c = 1; c < k; ++c) {
                const double v = s[(b * k + c) * hw + p];
                if (v > best_v) {
                    best_v = v;
                    best = c;
                }
            }
            out[b * hw + p] = best;
        }
    }
    return out;
}

std::vector<double> max_scores(const Tensor& scores) {
    require_map(scores, "max_scores");
    const std::size_t n = scores.dim(0), k = scores.dim(1), hw = scores.dim(2) * scores.dim(3);
    const auto s = scores.data();
    std::vector<double> out(n * hw);
    for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t p = 0; p < hw; ++p) {
            double best = s[b * k * hw + p];
            for (std::size_t c = 1; c < k; ++c) best = std::max(best, s[(b * k + c) * hw + p]);
            out[b * hw + p] = best;
        }
    }
    return out;
}

PixelMask consistency_mask(const Tensor& first, const Tensor& second) {
    require_map(first, "consistency_mask");
    if (first.shape() != second.shape()) {
        throw std::invalid_argument("consistency_mask: shape mismatch " +
                                    shape_to_string(first.shape()) + " vs " +
                                    shape_to_string(second.shape()));
    }
    const auto a = argmax_classes(first);
    const auto b = argmax_classes(second);
    PixelMask m = blank_mask(first);
    for (std::size_t i = 0; i < a.size(); ++i) m.values[i] = a[i] == b[i] ? 1 : 0;
    return m;
}

double calculate_gamma(const PixelMask& consistency, const Tensor& scores) {
    require_map(scores, "calculate_gamma");
    auto maxima = max_scores(scores);
    if (consistency.size() != maxima.size()) {
        throw std::invalid_argument("calculate_gamma: mask has " +
                                    std::to_string(consistency.size()) + " pixels, scores " +
                                    shape_to_string(scores.shape()));
    }
    return order_statistic(std::move(maxima), consistency.count());
}

PixelMask certainty_mask(const Tensor& scores, double gamma) {
    const auto maxima = max_scores(scores);
    PixelMask m = blank_mask(scores);
    for (std::size_t i = 0; i < maxima.size(); ++i) m.values[i] = maxima[i] >= gamma ? 1 : 0;
    return m;
}

std::vector<double> soft_certainty_mask(const Tensor& probs) {
    auto maxima = max_scores(probs);
    const auto [lo, hi] = std::minmax_element(maxima.begin(), maxima.end());
    const double min_v = *lo;
    const double range = *hi - *lo;
    for (auto& v : maxima) v = range > 0.0 ? (v - min_v) / range : 0.5;
    return maxima;
}

std::vector<double> calculate_gamma_per_class(const PixelMask& consistency, const Tensor& scores,
                                              std::span<const double> previous) {
    require_map(scores, "calculate_gamma_per_class");
    const std::size_t k = scores.dim(1);
    if (!previous.empty() && previous.size() != k) {
        throw std::invalid_argument("calculate_gamma_per_class: previous thresholds have " +
                                    std::to_string(previous.size()) + " entries for K=" +
                                    std::to_string(k));
    }
    const auto maxima = max_scores(scores);
    const auto classes = argmax_classes(scores);
    if (consistency.size() != maxima.size()) {
        throw std::invalid_argument("calculate_gamma_per_class: mask/score size mismatch");
    }
    std::vector<std::vector<double>> per_class(k);
    std::vector<std::size_t> consistent(k, 0);
    for (std::size_t i = 0; i < maxima.size(); ++i) {
        per_class[classes[i]].push_back(maxima[i]);
        consistent[classes[i]] += consistency.values[i];
    }
    std::vector<double> gammas(k);
    for (std::size_t c = 0; c < k; ++c) {
        if (per_class[c].empty()) {
            gammas[c] = previous.empty() ? -1.0 : previous[c];
            continue;
        }
        gammas[c] = order_statistic(std::move(per_class[c]), consistent[c]);
    }
    return gammas;
}

PixelMask certainty_mask_per_class(const Tensor& scores, std::span<const double> gammas) {
    require_map(scores, "certainty_mask_per_class");
    if (gammas.size() != scores.dim(1)) {
        throw std::invalid_argument("certainty_mask_per_class: threshold count does not match K");
    }
    const auto maxima = max_scores(scores);
    const auto classes = argmax_classes(scores);
    PixelMask m = blank_mask(scores);
    for (std::size_t i = 0; i < maxima.size(); ++i) {
        m.values[i] = maxima[i] >= gammas[classes[i]] ? 1 : 0;
    }
    return m;
}

}  // namespace gssl
