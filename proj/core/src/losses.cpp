#include "gssl/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "gssl/ops.hpp"

namespace gssl {

Tensor loss_consistency(const Tensor& target, const Tensor& pred, std::span<const double> weights) {
    if (target.shape() != pred.shape() || target.rank() != 4) {
        throw std::invalid_argument("loss_consistency: shape mismatch " +
                                    shape_to_string(target.shape()) + " vs " +
                                    shape_to_string(pred.shape()));
    }
    const std::size_t n = target.dim(0), h = target.dim(2), w = target.dim(3);
    if (weights.size() != n * h * w) {
        throw std::invalid_argument("loss_consistency: mask has " + std::to_string(weights.size()) +
                                    " pixels for maps " + shape_to_string(target.shape()));
    }
    for (const Tensor* t : {&target, &pred}) {
        for (double v : t->data()) {
            if (!(v >= -1e-9 && v <= 1.0 + 1e-9)) {
                throw std::invalid_argument("loss_consistency: probability out of [0,1]: " +
                                            std::to_string(v));
            }
        }
    }
    const Tensor per_pixel =
        ops::neg(ops::sum_axis(ops::mul(target, ops::log(pred, kLogFloor)), 1));
    const Tensor mask = Tensor::from_vector({n, h, w}, {weights.begin(), weights.end()});
    return ops::masked_mean(per_pixel, mask);
}

Tensor loss_uniformity(const Tensor& z, std::size_t pool, double t) {
    if (z.rank() != 4) {
        throw std::invalid_argument("loss_uniformity: expected NxFxhxw, got " +
                                    shape_to_string(z.shape()));
    }
    const Tensor pooled = ops::avg_pool2d(z, pool);
    const std::size_t n = pooled.dim(0), f = pooled.dim(1), hu = pooled.dim(2), wu = pooled.dim(3);
    const std::size_t m = n * hu * wu;
    if (m < 2) return Tensor::scalar(0.0);
    const Tensor rows = ops::reshape(ops::permute(pooled, {0, 2, 3, 1}), {m, f});
    const Tensor kernel = ops::exp(ops::scale(ops::pairwise_sq_dist(rows), -t));
    std::vector<double> off_diagonal(m * m, 1.0);
    for (std::size_t i = 0; i < m; ++i) off_diagonal[i * m + i] = 0.0;
    const Tensor total = ops::sum(ops::mul(kernel, Tensor::from_vector({m, m}, std::move(off_diagonal))));
    return ops::scale(total, 1.0 / static_cast<double>(m));
}

Tensor loss_prototype(const Tensor& prototypes) {
    if (prototypes.rank() != 2) {
        throw std::invalid_argument("loss_prototype: expected FxK, got " +
                                    shape_to_string(prototypes.shape()));
    }
    const std::size_t k = prototypes.dim(1);
    if (k < 2) throw std::invalid_argument("loss_prototype: needs at least 2 prototypes");
    std::vector<double> shift(k * k, 0.0);
    for (std::size_t i = 0; i < k; ++i) shift[i * k + i] = 2.0;
    const Tensor gram = ops::matmul(ops::transpose(prototypes), prototypes);
    const Tensor shifted = ops::sub(gram, Tensor::from_vector({k, k}, std::move(shift)));
    return ops::mean(ops::max_axis(shifted, 1));
}

SupervisedLoss loss_supervised(const Tensor& probs, std::span<const std::int32_t> labels) {
    if (probs.rank() != 4) {
        throw std::invalid_argument("loss_supervised: expected NxKxHxW, got " +
                                    shape_to_string(probs.shape()));
    }
    const std::size_t n = probs.dim(0), k = probs.dim(1), hw = probs.dim(2) * probs.dim(3);
    if (labels.size() != n * hw) {
        throw std::invalid_argument("loss_supervised: " + std::to_string(labels.size()) +
                                    " labels for probabilities " + shape_to_string(probs.shape()));
    }
    std::vector<double> select(n * k * hw, 0.0);
    std::size_t counted = 0;
    for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t p = 0; p < hw; ++p) {
            const std::int32_t y = labels[b * hw + p];
            if (y < 0 || static_cast<std::size_t>(y) >= k) continue;
            select[(b * k + static_cast<std::size_t>(y)) * hw + p] = 1.0;
            ++counted;
        }
    }
    if (counted == 0) return {Tensor::scalar(0.0), true};
    const Tensor picked = ops::sum(ops::mul(ops::log(probs, kLogFloor),
                                            Tensor::from_vector(probs.shape(), std::move(select))));
    return {ops::scale(picked, -1.0 / static_cast<double>(counted)), false};
}

LossReport total_loss(double l_c, double l_u, double l_p, double l_s, const LossWeights& weights) {
    const std::pair<const char*, double> parts[] = {
        {"l_c", l_c}, {"l_u", l_u}, {"l_p", l_p}, {"l_s", l_s}};
    for (const auto& [name, v] : parts) {
        if (!std::isfinite(v)) {
            throw std::domain_error(std::string("total_loss: component ") + name +
                                    " is not finite");
        }
    }
    LossReport r;
    r.l_c = l_c;
    r.l_u = l_u;
    r.l_p = l_p;
    r.l_s = l_s;
    r.weights = weights;
    r.total = weights.consistency * l_c + weights.uniformity * l_u + weights.prototype * l_p +
              weights.supervised * l_s;
    return r;
}

}  // namespace gssl
