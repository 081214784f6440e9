#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "gssl/ops.hpp"
#include "gssl/tensor.hpp"

namespace gssl {

struct ColorParams {
    double brightness = 1.0;
    double contrast = 1.0;
    double saturation = 1.0;
    double hue = 0.0;  // turns; 0 leaves hue unchanged
};

struct AugmentConfig {
    // Area ratios relative to the source image (global) and to the global crop (local).
    double global_scale_min = 0.6;
    double global_scale_max = 1.0;
    double local_scale_min = 0.3;
    double local_scale_max = 0.8;
    // Aspect ratio (height/width) range shared by both crops.
    double aspect_min = 0.75;
    double aspect_max = 4.0 / 3.0;
    double color_min = 0.6;
    double color_max = 1.4;
    double hue_max = 0.1;
    bool color = true;
    std::size_t min_extent = 8;
};

// Geometry and appearance for one pair of views. global_crop is in source
// pixel coordinates; local_crop is in coordinates of the rendered view grid.
struct ViewPlan {
    Rect global_crop;
    Rect local_crop;
    bool local_on_first = false;
    ColorParams color1;
    ColorParams color2;
    std::uint64_t seed = 0;
    std::size_t view_h = 0;
    std::size_t view_w = 0;
};

// Deterministic in (seed, extent, cfg). Views are rendered at the source extent.
ViewPlan sample_view_plan(std::uint64_t seed, std::size_t height, std::size_t width,
                          const AugmentConfig& cfg);

// Maps a rect given in view-grid coordinates back into source coordinates.
Rect compose_rect(const Rect& outer, const Rect& inner, std::size_t view_h, std::size_t view_w);

// image: 3×H×W in [0,1]. Returns (first view, second view), each 3×view_h×view_w.
std::pair<Tensor, Tensor> render_views(const Tensor& image, const ViewPlan& plan);

// Photometric transform on a 3×H×W image: brightness, contrast, saturation,
// hue rotation, then clamp to [0,1].
Tensor apply_color(const Tensor& image, const ColorParams& color);

// Aligns N×K×H×W score maps of the two views: the view without the local crop
// is cropped to the local rect and resized; the other passes through.
// Differentiable in both inputs.
std::pair<Tensor, Tensor> align_scores(const Tensor& first, const Tensor& second,
                                       std::span<const ViewPlan> plans);

// Single-view augmentation for labelled images: global crop, local crop and
// color. Labels are resampled by nearest neighbour.
struct AugmentedSample {
    Tensor image;
    std::vector<std::int32_t> labels;
};
AugmentedSample augment_labelled(const Tensor& image, std::span<const std::int32_t> labels,
                                 std::uint64_t seed, const AugmentConfig& cfg);

}  // namespace gssl
