#include "gssl/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "gssl/rng.hpp"
#include "gssl/tensor_io.hpp"

namespace gssl {

namespace {

using Rgb = std::array<double, 3>;
using json = nlohmann::json;

constexpr double kPi = 3.14159265358979323846;

// Index = class id; the last entry is the unknown family.
constexpr std::array<Rgb, 5> kSourcePalette{{
    {0.25, 0.55, 0.25},
    {0.75, 0.25, 0.20},
    {0.20, 0.35, 0.75},
    {0.50, 0.50, 0.50},
    {0.75, 0.70, 0.25},
}};
constexpr std::array<Rgb, 5> kShiftedPalette{{
    {0.45, 0.50, 0.30},
    {0.70, 0.45, 0.30},
    {0.40, 0.30, 0.65},
    {0.60, 0.55, 0.50},
    {0.75, 0.70, 0.25},
}};
constexpr std::array<double, 5> kStripeCycles{2.0, 4.0, 6.0, 3.0, 5.0};

bool in_triangle(double px, double py, const SceneGeometry::Unknown& u) {
    // Upward isoceles triangle inscribed in the box of side `size` at (cx, cy).
    const double half = u.size / 2.0;
    const double top = u.cy - half, bottom = u.cy + half;
    if (py < top || py > bottom) return false;
    const double t = (py - top) / u.size;
    return std::abs(px - u.cx) <= t * half;
}

bool in_diamond(double px, double py, const SceneGeometry::Unknown& u) {
    return std::abs(px - u.cx) + std::abs(py - u.cy) <= u.size / 2.0;
}

SceneGeometry sample_scene(Rng& rng, bool include_unknown) {
    SceneGeometry s;
    s.band_top = rng.uniform(0.7, 0.85);
    const std::size_t n_boxes = 1 + rng.uniform_index(2);
    for (std::size_t i = 0; i < n_boxes; ++i) {
        const double w = rng.uniform(0.15, 0.35), h = rng.uniform(0.15, 0.35);
        const double x0 = rng.uniform(0.0, 1.0 - w);
        const double y0 = rng.uniform(0.0, std::max(0.0, s.band_top - h * 0.5));
        s.boxes.push_back({x0, y0, x0 + w, y0 + h});
    }
    const std::size_t n_discs = 1 + rng.uniform_index(2);
    for (std::size_t i = 0; i < n_discs; ++i) {
        const double r = rng.uniform(0.08, 0.15);
        s.discs.push_back({rng.uniform(r, 1.0 - r), rng.uniform(r, s.band_top), r});
    }
    if (include_unknown) {
        const double size = rng.uniform(0.18, 0.28);
        const int kind = static_cast<int>(rng.uniform_index(2));
        s.unknowns.push_back({rng.uniform(size / 2, 1.0 - size / 2),
                              rng.uniform(size / 2, 1.0 - size / 2), size, kind});
    }
    return s;
}

std::vector<double> render_image(std::span<const std::int32_t> labels,
                                 std::size_t extent, const DomainStyle& style, Rng& rng) {
    std::array<Rgb, 5> colour{};
    std::array<double, 5> phase{};
    for (std::size_t k = 0; k < colour.size(); ++k) {
        for (std::size_t c = 0; c < 3; ++c) {
            colour[k][c] = kSourcePalette[k][c] + style.shift * (kShiftedPalette[k][c] - kSourcePalette[k][c]) +
                           style.jitter * rng.normal();
        }
        phase[k] = rng.uniform(0.0, 2.0 * kPi);
    }
    const double illumination = 1.0 + 0.5 * style.jitter * rng.normal();
    const double angle = style.shift * kPi / 4.0;
    const double ca = std::cos(angle), sa = std::sin(angle);
    const std::size_t plane = extent * extent;
    std::vector<double> px(3 * plane);
    for (std::size_t y = 0; y < extent; ++y) {
        for (std::size_t x = 0; x < extent; ++x) {
            const std::size_t i = y * extent + x;
            const auto k = static_cast<std::size_t>(std::min<std::int32_t>(labels[i], 4));
            const double u = (static_cast<double>(x) + 0.5) / static_cast<double>(extent);
            const double v = (static_cast<double>(y) + 0.5) / static_cast<double>(extent);
            const double cycles = kStripeCycles[k] * (1.0 + style.shift);
            const double stripe =
                style.texture * std::sin(2.0 * kPi * cycles * (ca * u + sa * v) + phase[k]);
            for (std::size_t c = 0; c < 3; ++c) {
                double value = illumination * colour[k][c] + stripe + style.noise * rng.normal();
                value = std::clamp(value, 0.0, 1.0);
                px[c * plane + i] = std::round(value * 255.0) / 255.0;
            }
        }
    }
    return px;
}

json style_to_json(const DomainStyle& s) {
    return {{"shift", s.shift}, {"texture", s.texture}, {"noise", s.noise}, {"jitter", s.jitter}};
}

DomainStyle style_from_json(const json& j) {
    DomainStyle s;
    s.shift = j.at("shift").get<double>();
    s.texture = j.at("texture").get<double>();
    s.noise = j.at("noise").get<double>();
    s.jitter = j.at("jitter").get<double>();
    return s;
}

json geometry_to_json(const SceneGeometry& g) {
    json boxes = json::array(), discs = json::array(), unknowns = json::array();
    for (const auto& b : g.boxes) boxes.push_back({b.x0, b.y0, b.x1, b.y1});
    for (const auto& d : g.discs) discs.push_back({d.cx, d.cy, d.r});
    for (const auto& u : g.unknowns) unknowns.push_back({u.cx, u.cy, u.size, u.kind});
    return {{"band_top", g.band_top}, {"boxes", boxes}, {"discs", discs}, {"unknowns", unknowns}};
}

SceneGeometry geometry_from_json(const json& j) {
    SceneGeometry g;
    g.band_top = j.at("band_top").get<double>();
    for (const auto& b : j.at("boxes")) g.boxes.push_back({b[0], b[1], b[2], b[3]});
    for (const auto& d : j.at("discs")) g.discs.push_back({d[0], d[1], d[2]});
    for (const auto& u : j.at("unknowns")) {
        g.unknowns.push_back({u[0].get<double>(), u[1].get<double>(), u[2].get<double>(),
                              u[3].get<int>()});
    }
    return g;
}

std::string entry_name(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%05zu.gt", i);
    return buf;
}

}  // namespace

std::vector<std::int32_t> render_labels(const SceneGeometry& scene, std::size_t extent,
                                        std::size_t k_known) {
    std::vector<std::int32_t> out(extent * extent, 0);
    for (std::size_t y = 0; y < extent; ++y) {
        for (std::size_t x = 0; x < extent; ++x) {
            const double u = (static_cast<double>(x) + 0.5) / static_cast<double>(extent);
            const double v = (static_cast<double>(y) + 0.5) / static_cast<double>(extent);
            std::int32_t label = v >= scene.band_top ? 3 : 0;
            for (const auto& b : scene.boxes) {
                if (u >= b.x0 && u <= b.x1 && v >= b.y0 && v <= b.y1) label = 1;
            }
            for (const auto& d : scene.discs) {
                if ((u - d.cx) * (u - d.cx) + (v - d.cy) * (v - d.cy) <= d.r * d.r) label = 2;
            }
            for (const auto& s : scene.unknowns) {
                if (s.kind == 0 ? in_triangle(u, v, s) : in_diamond(u, v, s)) {
                    label = static_cast<std::int32_t>(k_known);
                }
            }
            out[y * extent + x] = label;
        }
    }
    return out;
}

Dataset generate_domain(const DomainSpec& spec) {
    if (spec.extent < 16) {
        throw std::invalid_argument("generate_domain: extent " + std::to_string(spec.extent) +
                                    " below minimum 16");
    }
    if (spec.k_known != 4) {
        throw std::invalid_argument("generate_domain: the synthetic scenes define exactly 4 known classes");
    }
    Dataset d;
    d.name = spec.name;
    d.k_known = spec.k_known;
    d.k_total = spec.k_known + (spec.include_ood ? 1 : 0);
    d.extent = spec.extent;
    d.seed = spec.seed;
    d.include_ood = spec.include_ood;
    d.style = spec.style;
    for (std::size_t i = 0; i < spec.n_images; ++i) {
        Rng rng(derive_seed(spec.seed, i));
        SceneGeometry scene = sample_scene(rng, spec.include_ood);
        auto labels = render_labels(scene, spec.extent, spec.k_known);
        auto px = render_image(labels, spec.extent, spec.style, rng);
        d.images.push_back(Tensor::from_vector({3, spec.extent, spec.extent}, std::move(px)));
        d.labels.push_back(std::move(labels));
        d.geometry.push_back(std::move(scene));
    }
    return d;
}

void save_dataset(const Dataset& data, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "images");
    if (data.has_labels()) fs::create_directories(dir / "labels");
    json entries = json::array();
    for (std::size_t i = 0; i < data.size(); ++i) {
        const std::string name = entry_name(i);
        StoredTensor img = to_stored(data.images[i], DType::u8);
        for (auto& v : img.values) v = std::round(v * 255.0);
        write_tensor(dir / "images" / name, img);
        json e = {{"image", "images/" + name}};
        if (data.has_labels()) {
            StoredTensor lab{DType::i32, {data.extent, data.extent},
                             {data.labels[i].begin(), data.labels[i].end()}};
            write_tensor(dir / "labels" / name, lab);
            e["label"] = "labels/" + name;
        }
        if (i < data.geometry.size()) e["geometry"] = geometry_to_json(data.geometry[i]);
        entries.push_back(std::move(e));
    }
    const json manifest = {{"name", data.name},
                           {"K_known", data.k_known},
                           {"K_total", data.k_total},
                           {"n_images", data.size()},
                           {"extent", data.extent},
                           {"seed", data.seed},
                           {"include_ood", data.include_ood},
                           {"style", style_to_json(data.style)},
                           {"entries", entries}};
    std::ofstream f(dir / "manifest.json", std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + (dir / "manifest.json").string());
    f << manifest.dump(2) << '\n';
}

Dataset load_dataset(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    const fs::path manifest_path = dir / "manifest.json";
    std::ifstream f(manifest_path);
    if (!f) throw std::runtime_error("load_dataset: missing " + manifest_path.string());
    json m;
    try {
        m = json::parse(f);
    } catch (const json::exception& e) {
        throw std::runtime_error("load_dataset: " + manifest_path.string() + ": " + e.what());
    }
    Dataset d;
    try {
        d.name = m.at("name").get<std::string>();
        d.k_known = m.at("K_known").get<std::size_t>();
        d.k_total = m.at("K_total").get<std::size_t>();
        d.extent = m.at("extent").get<std::size_t>();
        d.seed = m.at("seed").get<std::uint64_t>();
        d.include_ood = m.value("include_ood", false);
        d.style = style_from_json(m.at("style"));
    } catch (const json::exception& e) {
        throw std::runtime_error("load_dataset: " + manifest_path.string() + ": " + e.what());
    }
    const json& entries = m.at("entries");
    if (entries.size() != m.at("n_images").get<std::size_t>()) {
        throw std::runtime_error("load_dataset: manifest n_images does not match entries");
    }
    const bool labelled = fs::is_directory(dir / "labels");
    if (labelled) {
        std::size_t files = 0;
        for (const auto& e : fs::directory_iterator(dir / "labels")) files += e.path().extension() == ".gt";
        if (files != entries.size()) {
            throw std::runtime_error("load_dataset: " + std::to_string(files) + " label files for " +
                                     std::to_string(entries.size()) + " images");
        }
    }
    for (const auto& e : entries) {
        StoredTensor img = read_tensor(dir / e.at("image").get<std::string>());
        if (img.shape != Shape{3, d.extent, d.extent}) {
            throw std::runtime_error("load_dataset: image shape " + shape_to_string(img.shape) +
                                     " does not match extent");
        }
        for (auto& v : img.values) v /= 255.0;
        d.images.push_back(from_stored(img));
        if (labelled) {
            if (!e.contains("label")) throw std::runtime_error("load_dataset: entry without label");
            const StoredTensor lab = read_tensor(dir / e.at("label").get<std::string>());
            if (lab.shape != Shape{d.extent, d.extent}) {
                throw std::runtime_error("load_dataset: label shape " + shape_to_string(lab.shape) +
                                         " does not match extent");
            }
            std::vector<std::int32_t> values(lab.values.size());
            for (std::size_t i = 0; i < values.size(); ++i) {
                const double v = lab.values[i];
                if (v != kVoidLabel && !(v >= 0 && v < static_cast<double>(d.k_total))) {
                    throw std::runtime_error("load_dataset: label value " + std::to_string(v) +
                                             " outside {-1} U [0," + std::to_string(d.k_total) + ")");
                }
                values[i] = static_cast<std::int32_t>(v);
            }
            d.labels.push_back(std::move(values));
        }
        if (e.contains("geometry")) d.geometry.push_back(geometry_from_json(e.at("geometry")));
    }
    if (!d.geometry.empty() && d.geometry.size() != d.images.size()) d.geometry.clear();
    return d;
}

Tensor stack_images(const Dataset& data, std::span<const std::size_t> indices) {
    if (indices.empty()) throw std::invalid_argument("stack_images: no indices");
    const std::size_t per = 3 * data.extent * data.extent;
    std::vector<double> out;
    out.reserve(per * indices.size());
    for (auto i : indices) {
        if (i >= data.size()) throw std::out_of_range("stack_images: index out of range");
        out.insert(out.end(), data.images[i].data().begin(), data.images[i].data().end());
    }
    return Tensor::from_vector({indices.size(), 3, data.extent, data.extent}, std::move(out));
}

}  // namespace gssl
