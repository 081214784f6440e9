#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gssl/tensor.hpp"

namespace gssl {

struct DomainStyle {
    double shift = 0.0;    // 0 = source palette and texture, 1 = fully shifted
    double texture = 0.05; // stripe amplitude
    double noise = 0.03;   // per-pixel gaussian noise
    double jitter = 0.04;  // per-image colour jitter
    bool operator==(const DomainStyle&) const = default;
};

struct DomainSpec {
    std::string name = "domain";
    std::size_t k_known = 4;
    bool include_ood = false;
    DomainStyle style;
    std::size_t n_images = 16;
    std::size_t extent = 32;
    std::uint64_t seed = 1;
};

// Class ids: 0 background, 1 rectangles, 2 discs, 3 bottom band, 4 unknown family.
inline constexpr std::int32_t kVoidLabel = -1;

// Scene layout in units of the image side.
struct SceneGeometry {
    struct Box {
        double x0, y0, x1, y1;
        bool operator==(const Box&) const = default;
    };
    struct Disc {
        double cx, cy, r;
        bool operator==(const Disc&) const = default;
    };
    struct Unknown {
        double cx, cy, size;
        int kind;  // 0 triangle, 1 diamond
        bool operator==(const Unknown&) const = default;
    };
    double band_top = 0.8;
    std::vector<Box> boxes;
    std::vector<Disc> discs;
    std::vector<Unknown> unknowns;
    bool operator==(const SceneGeometry&) const = default;
};

struct Dataset {
    std::string name;
    std::size_t k_known = 4;
    std::size_t k_total = 4;
    std::size_t extent = 0;
    std::uint64_t seed = 0;
    bool include_ood = false;
    DomainStyle style;
    std::vector<Tensor> images;                    // 3×H×W, values k/255
    std::vector<std::vector<std::int32_t>> labels; // empty when unlabelled
    std::vector<SceneGeometry> geometry;           // empty when loaded without it

    std::size_t size() const { return images.size(); }
    bool has_labels() const { return !labels.empty(); }
};

Dataset generate_domain(const DomainSpec& spec);

// Label map of a scene; unknown-family pixels get id k_known.
std::vector<std::int32_t> render_labels(const SceneGeometry& scene, std::size_t extent,
                                        std::size_t k_known);

// Writes manifest.json, images/NNNNN.gt (u8) and, if labelled, labels/NNNNN.gt (i32).
void save_dataset(const Dataset& data, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

// Stacks images[indices] into an N×3×H×W batch.
Tensor stack_images(const Dataset& data, std::span<const std::size_t> indices);

}  // namespace gssl
