#include "gssl/augment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "gssl/rng.hpp"

namespace gssl {

namespace {

void check_range(double lo, double hi, const char* what) {
    if (!(lo > 0.0 && lo <= hi && hi <= 1.0)) {
        throw std::invalid_argument(std::string("augment: ") + what + " range must lie in (0,1]");
    }
}

// Rect covering `area` of an H×W grid (continuous pixel-centre extent) at the
// sampled aspect; the area ratio is exact even when one side saturates.
Rect sample_rect(Rng& rng, double area_lo, double area_hi, const AugmentConfig& cfg,
                 std::size_t height, std::size_t width) {
    const double area = rng.uniform(area_lo, area_hi);
    const double aspect = rng.uniform(cfg.aspect_min, cfg.aspect_max);
    double hf = std::sqrt(area * aspect);
    double wf = std::sqrt(area / aspect);
    if (hf > 1.0) {
        hf = 1.0;
        wf = area;
    } else if (wf > 1.0) {
        wf = 1.0;
        hf = area;
    }
    const double full_h = static_cast<double>(height - 1);
    const double full_w = static_cast<double>(width - 1);
    const double rh = hf * full_h;
    const double rw = wf * full_w;
    const double top = rng.uniform() * (full_h - rh);
    const double left = rng.uniform() * (full_w - rw);
    return {top, left, top + rh, left + rw};
}

ColorParams sample_color(Rng& rng, const AugmentConfig& cfg) {
    ColorParams c;
    // Draw all four even when disabled so the stream layout is stable.
    const double b = rng.uniform(cfg.color_min, cfg.color_max);
    const double k = rng.uniform(cfg.color_min, cfg.color_max);
    const double s = rng.uniform(cfg.color_min, cfg.color_max);
    const double h = rng.uniform(-cfg.hue_max, cfg.hue_max);
    if (cfg.color) c = {b, k, s, h};
    return c;
}

Tensor crop_image(const Tensor& image, const Rect& rect, std::size_t out_h, std::size_t out_w) {
    NoGradGuard no_grad;
    const Tensor batch = ops::reshape(image, {1, image.dim(0), image.dim(1), image.dim(2)});
    const Rect rects[1] = {rect};
    const Tensor out = ops::crop_resize_bilinear(batch, rects, out_h, out_w);
    return ops::reshape(out, {image.dim(0), out_h, out_w});
}

}  // namespace

ViewPlan sample_view_plan(std::uint64_t seed, std::size_t height, std::size_t width,
                          const AugmentConfig& cfg) {
    if (height < cfg.min_extent || width < cfg.min_extent) {
        throw std::invalid_argument("sample_view_plan: image " + std::to_string(height) + "x" +
                                    std::to_string(width) + " smaller than minimum crop " +
                                    std::to_string(cfg.min_extent));
    }
    check_range(cfg.global_scale_min, cfg.global_scale_max, "global crop scale");
    check_range(cfg.local_scale_min, cfg.local_scale_max, "local crop scale");
    if (!(cfg.aspect_min > 0.0 && cfg.aspect_min <= cfg.aspect_max)) {
        throw std::invalid_argument("augment: aspect range must be positive and ordered");
    }
    Rng rng(seed);
    ViewPlan plan;
    plan.seed = seed;
    plan.view_h = height;
    plan.view_w = width;
    plan.global_crop = sample_rect(rng, cfg.global_scale_min, cfg.global_scale_max, cfg, height, width);
    plan.local_crop = sample_rect(rng, cfg.local_scale_min, cfg.local_scale_max, cfg, height, width);
    plan.local_on_first = rng.uniform() < 0.5;
    plan.color1 = sample_color(rng, cfg);
    plan.color2 = sample_color(rng, cfg);
    return plan;
}

Rect compose_rect(const Rect& outer, const Rect& inner, std::size_t view_h, std::size_t view_w) {
    const double sy = view_h > 1 ? outer.height() / static_cast<double>(view_h - 1) : 0.0;
    const double sx = view_w > 1 ? outer.width() / static_cast<double>(view_w - 1) : 0.0;
    return {outer.top + inner.top * sy, outer.left + inner.left * sx,
            outer.top + inner.bottom * sy, outer.left + inner.right * sx};
}

Tensor apply_color(const Tensor& image, const ColorParams& color) {
    if (image.rank() != 3 || image.dim(0) != 3) {
        throw std::invalid_argument("apply_color: expected 3xHxW image, got " +
                                    shape_to_string(image.shape()));
    }
    const std::size_t plane = image.dim(1) * image.dim(2);
    std::vector<double> px(image.data().begin(), image.data().end());
    double* r = px.data();
    double* g = r + plane;
    double* b = g + plane;
    auto luma = [&](std::size_t i) { return 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i]; };

    if (color.brightness != 1.0) {
        for (auto& v : px) v *= color.brightness;
    }
    if (color.contrast != 1.0) {
        double mean = 0.0;
        for (std::size_t i = 0; i < plane; ++i) mean += luma(i);
        mean /= static_cast<double>(plane);
        for (auto& v : px) v = mean + color.contrast * (v - mean);
    }
    if (color.saturation != 1.0) {
        for (std::size_t i = 0; i < plane; ++i) {
            const double y = luma(i);
            r[i] = y + color.saturation * (r[i] - y);
            g[i] = y + color.saturation * (g[i] - y);
            b[i] = y + color.saturation * (b[i] - y);
        }
    }
    if (color.hue != 0.0) {
        constexpr double two_pi = 6.283185307179586476925286766559;
        const double c = std::cos(two_pi * color.hue);
        const double s = std::sin(two_pi * color.hue);
        for (std::size_t i = 0; i < plane; ++i) {
            const double y = luma(i);
            const double ci = 0.596 * r[i] - 0.274 * g[i] - 0.322 * b[i];
            const double cq = 0.211 * r[i] - 0.523 * g[i] + 0.312 * b[i];
            const double ri = c * ci - s * cq;
            const double rq = s * ci + c * cq;
            r[i] = y + 0.956 * ri + 0.621 * rq;
            g[i] = y - 0.272 * ri - 0.647 * rq;
            b[i] = y - 1.106 * ri + 1.703 * rq;
        }
    }
    for (auto& v : px) v = std::clamp(v, 0.0, 1.0);
    return Tensor::from_vector(image.shape(), std::move(px));
}

std::pair<Tensor, Tensor> render_views(const Tensor& image, const ViewPlan& plan) {
    if (image.rank() != 3 || image.dim(0) != 3) {
        throw std::invalid_argument("render_views: expected 3xHxW image, got " +
                                    shape_to_string(image.shape()));
    }
    const Tensor full = crop_image(image, plan.global_crop, plan.view_h, plan.view_w);
    const Tensor local =
        crop_image(image, compose_rect(plan.global_crop, plan.local_crop, plan.view_h, plan.view_w),
                   plan.view_h, plan.view_w);
    const Tensor& first = plan.local_on_first ? local : full;
    const Tensor& second = plan.local_on_first ? full : local;
    return {apply_color(first, plan.color1), apply_color(second, plan.color2)};
}

std::pair<Tensor, Tensor> align_scores(const Tensor& first, const Tensor& second,
                                       std::span<const ViewPlan> plans) {
    if (first.shape() != second.shape() || first.rank() != 4) {
        throw std::invalid_argument("align_scores: shape mismatch " +
                                    shape_to_string(first.shape()) + " vs " +
                                    shape_to_string(second.shape()));
    }
    const std::size_t n = first.dim(0), h = first.dim(2), w = first.dim(3);
    if (plans.size() != n) {
        throw std::invalid_argument("align_scores: " + std::to_string(plans.size()) +
                                    " plans for batch of " + std::to_string(n));
    }
    std::vector<Rect> rects_first(n), rects_second(n);
    for (std::size_t i = 0; i < n; ++i) {
        const ViewPlan& p = plans[i];
        if (p.view_h != h || p.view_w != w) {
            throw std::invalid_argument("align_scores: plan extent " + std::to_string(p.view_h) +
                                        "x" + std::to_string(p.view_w) +
                                        " does not match map extent " +
                                        shape_to_string(first.shape()));
        }
        const Rect identity = full_rect(h, w);
        rects_first[i] = p.local_on_first ? identity : p.local_crop;
        rects_second[i] = p.local_on_first ? p.local_crop : identity;
    }
    return {ops::crop_resize_bilinear(first, rects_first, h, w),
            ops::crop_resize_bilinear(second, rects_second, h, w)};
}

AugmentedSample augment_labelled(const Tensor& image, std::span<const std::int32_t> labels,
                                 std::uint64_t seed, const AugmentConfig& cfg) {
    const std::size_t h = image.dim(1), w = image.dim(2);
    if (labels.size() != h * w) {
        throw std::invalid_argument("augment_labelled: label map size does not match image " +
                                    shape_to_string(image.shape()));
    }
    const ViewPlan plan = sample_view_plan(seed, h, w, cfg);
    const Rect rect = compose_rect(plan.global_crop, plan.local_crop, h, w);
    AugmentedSample out;
    out.image = apply_color(crop_image(image, rect, h, w), plan.color1);
    out.labels.resize(h * w);
    for (std::size_t i = 0; i < h; ++i) {
        const double sy = h > 1 ? rect.top + rect.height() * static_cast<double>(i) /
                                                 static_cast<double>(h - 1)
                                : rect.top;
        const auto yi = std::min<std::size_t>(static_cast<std::size_t>(std::lround(sy)), h - 1);
        for (std::size_t j = 0; j < w; ++j) {
            const double sx = w > 1 ? rect.left + rect.width() * static_cast<double>(j) /
                                                      static_cast<double>(w - 1)
                                    : rect.left;
            const auto xi = std::min<std::size_t>(static_cast<std::size_t>(std::lround(sx)), w - 1);
            out.labels[i * w + j] = labels[yi * w + xi];
        }
    }
    return out;
}

}  // namespace gssl
