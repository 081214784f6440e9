#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gssl/tensor.hpp"

namespace gssl {

// Axis-aligned rectangle given by the coordinates of its corner pixel
// centres (inclusive). Resampling maps output corners onto these corners.
struct Rect {
    double top = 0.0;
    double left = 0.0;
    double bottom = 0.0;
    double right = 0.0;

    double height() const { return bottom - top; }
    double width() const { return right - left; }
    bool operator==(const Rect&) const = default;
};

// Rectangle covering a full H×W grid.
inline Rect full_rect(std::size_t height, std::size_t width) {
    return {0.0, 0.0, static_cast<double>(height) - 1.0, static_cast<double>(width) - 1.0};
}

}  // namespace gssl

// Differentiable primitives. All shapes are checked; mismatches throw
// std::invalid_argument naming both shapes. Every op registers a gradient.
namespace gssl::ops {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double factor);
Tensor exp(const Tensor& a);
// Natural log of max(a, floor); entries below the floor get zero gradient.
Tensor log(const Tensor& a, double floor = 0.0);
Tensor relu(const Tensor& a);

// (M×K) · (K×N) → M×N
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
Tensor permute(const Tensor& a, const std::vector<std::size_t>& axes);
Tensor concat(std::span<const Tensor> parts, std::size_t axis);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor sum_axis(const Tensor& a, std::size_t axis);
// Maximum along `axis`; the gradient goes to the first maximal entry.
Tensor max_axis(const Tensor& a, std::size_t axis);

struct Conv2dOptions {
    std::size_t stride = 1;
    std::size_t padding = 0;
};

// x: N×C×H×W, weight: O×C×kh×kw, bias: O (may be undefined). Zero padding.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              Conv2dOptions options = {});

// Softmax along `axis` of a / temperature. temperature must be > 0.
Tensor softmax(const Tensor& a, std::size_t axis, double temperature = 1.0);

// a / max(||a||_2, eps) along `axis`; zero vectors map to zero vectors.
Tensor l2_normalize(const Tensor& a, std::size_t axis, double eps = 1e-12);

// Non-overlapping average pooling with a k×k window over N×C×H×W.
Tensor avg_pool2d(const Tensor& x, std::size_t k);

// Bilinear (align-corners) resampling of rects[n] of image n in an N×C×H×W
// batch onto an out_h×out_w grid.
Tensor crop_resize_bilinear(const Tensor& x, std::span<const Rect> rects,
                            std::size_t out_h, std::size_t out_w);
Tensor upsample_bilinear(const Tensor& x, std::size_t out_h, std::size_t out_w);

// Rows of an M×F matrix → M×M matrix of squared Euclidean distances.
Tensor pairwise_sq_dist(const Tensor& x);

// sum(mask ∘ x) / sum(mask), or 0 when the mask sums to 0. The mask is
// treated as a constant.
Tensor masked_mean(const Tensor& x, const Tensor& mask);

// Inverted dropout: entries are zeroed with probability p, survivors scaled
// by 1/(1-p). The mask for element i is hash_uniform(seed, counter + i) < p.
Tensor dropout(const Tensor& x, double p, std::uint64_t seed, std::uint64_t counter = 0);

}  // namespace gssl::ops
