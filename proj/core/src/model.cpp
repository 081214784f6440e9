#include "gssl/model.hpp"

#include <cmath>
#include <stdexcept>

#include "gssl/ops.hpp"
#include "gssl/rng.hpp"

namespace gssl {

PrototypeBank PrototypeBank::empty(std::size_t feature_dim, std::size_t num_classes) {
    PrototypeBank bank;
    bank.vectors = Tensor::zeros({feature_dim, num_classes});
    bank.history = Tensor::zeros({feature_dim, num_classes});
    bank.fresh.assign(num_classes, false);
    bank.available.assign(num_classes, false);
    return bank;
}

bool PrototypeBank::all_available() const {
    for (bool a : available) {
        if (!a) return false;
    }
    return true;
}

void PrototypeBank::require_available() const {
    for (std::size_t k = 0; k < available.size(); ++k) {
        if (!available[k]) {
            throw std::runtime_error("prototype for class " + std::to_string(k) +
                                     " is unavailable (never observed)");
        }
    }
}

Tensor& ModelState::param(const std::string& name) {
    for (auto& p : params) {
        if (p.name == name) return p.value;
    }
    throw std::out_of_range("ModelState: no parameter named " + name);
}

const Tensor& ModelState::param(const std::string& name) const {
    return const_cast<ModelState*>(this)->param(name);
}

std::vector<Tensor> ModelState::trainable() const {
    std::vector<Tensor> out;
    for (const auto& p : params) out.push_back(p.value);
    return out;
}

ModelState ModelState::clone() const {
    ModelState copy = *this;
    for (auto& p : copy.params) {
        p.value = p.value.detach();
        p.value.set_requires_grad(true);
    }
    copy.bank.vectors = bank.vectors.detach();
    copy.bank.history = bank.history.detach();
    return copy;
}

namespace {

Tensor he_normal(Rng& rng, Shape shape, std::size_t fan_in, double gain) {
    const double stddev = gain * std::sqrt(1.0 / static_cast<double>(fan_in));
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = stddev * rng.normal();
    Tensor t = Tensor::from_vector(std::move(shape), std::move(v));
    t.set_requires_grad(true);
    return t;
}

Tensor zero_bias(std::size_t n) {
    Tensor t = Tensor::zeros({n});
    t.set_requires_grad(true);
    return t;
}

}  // namespace

ModelState init_model(const ModelConfig& c, std::uint64_t seed) {
    if (c.num_classes == 0 || c.feature_dim == 0) {
        throw std::invalid_argument("init_model: feature_dim and num_classes must be positive");
    }
    if (!(c.tau > 0.0) || !(c.head_tau > 0.0)) {
        throw std::invalid_argument("init_model: temperatures must be > 0");
    }
    ModelState m;
    m.config = c;
    Rng rng(derive_seed(seed, 0x6d6f64656cULL));
    const double relu_gain = std::sqrt(2.0);
    auto conv = [&](const std::string& name, std::size_t out, std::size_t in, std::size_t k,
                    double gain) {
        m.params.push_back({name + ".weight", he_normal(rng, {out, in, k, k}, in * k * k, gain)});
        m.params.push_back({name + ".bias", zero_bias(out)});
    };
    conv("encoder.conv1", c.encoder_width1, c.in_channels, 3, relu_gain);
    conv("encoder.conv2", c.encoder_width2, c.encoder_width1, 3, relu_gain);
    conv("encoder.conv3", c.feature_dim, c.encoder_width2, 3, 1.0);
    conv("projection.fc1", c.projection_hidden, c.feature_dim, 1, relu_gain);
    conv("projection.fc2", c.projection_hidden, c.projection_hidden, 1, relu_gain);
    conv("projection.fc3", c.feature_dim, c.projection_hidden, 1, 1.0);
    conv("head", c.num_classes, c.feature_dim, 1, 1.0);
    m.bank = PrototypeBank::empty(c.feature_dim, c.num_classes);
    return m;
}

Tensor encode(const Tensor& x, const ModelState& m) {
    if (x.rank() != 4 || x.dim(1) != m.config.in_channels) {
        throw std::invalid_argument("encode: expected Nx" + std::to_string(m.config.in_channels) +
                                    "xHxW input, got " + shape_to_string(x.shape()));
    }
    if (x.dim(2) % kDownsample != 0 || x.dim(3) % kDownsample != 0) {
        throw std::invalid_argument("encode: extent " + shape_to_string(x.shape()) +
                                    " not divisible by " + std::to_string(kDownsample));
    }
    const ops::Conv2dOptions down{2, 1};
    const ops::Conv2dOptions same{1, 1};
    Tensor h = ops::relu(
        ops::conv2d(x, m.param("encoder.conv1.weight"), m.param("encoder.conv1.bias"), down));
    h = ops::relu(
        ops::conv2d(h, m.param("encoder.conv2.weight"), m.param("encoder.conv2.bias"), down));
    return ops::conv2d(h, m.param("encoder.conv3.weight"), m.param("encoder.conv3.bias"), same);
}

Tensor project(const Tensor& features, const ModelState& m) {
    Tensor h = ops::relu(ops::conv2d(features, m.param("projection.fc1.weight"),
                                     m.param("projection.fc1.bias")));
    h = ops::relu(
        ops::conv2d(h, m.param("projection.fc2.weight"), m.param("projection.fc2.bias")));
    h = ops::conv2d(h, m.param("projection.fc3.weight"), m.param("projection.fc3.bias"));
    return ops::l2_normalize(h, 1);
}

Tensor head_scores(const Tensor& features, const ModelState& m, bool frozen) {
    const Tensor& w = m.param("head.weight");
    const Tensor& b = m.param("head.bias");
    if (frozen) return ops::conv2d(features, w.detach(), b.detach());
    return ops::conv2d(features, w, b);
}

PrototypeUpdate compute_prototypes(const Tensor& z, std::span<const std::int32_t> labels,
                                   const PrototypeBank& bank) {
    if (z.rank() != 4) {
        throw std::invalid_argument("compute_prototypes: expected NxFxhxw, got " +
                                    shape_to_string(z.shape()));
    }
    const std::size_t n = z.dim(0), f = z.dim(1), h = z.dim(2), w = z.dim(3);
    const std::size_t k = bank.num_classes();
    if (bank.vectors.dim(0) != f) {
        throw std::invalid_argument("compute_prototypes: shape mismatch " +
                                    shape_to_string(z.shape()) + " vs " +
                                    shape_to_string(bank.vectors.shape()));
    }
    const std::size_t pixels = n * h * w;
    if (labels.size() != pixels) {
        throw std::invalid_argument("compute_prototypes: " + std::to_string(labels.size()) +
                                    " labels for embeddings " + shape_to_string(z.shape()));
    }
    // Labels are given per (image, row, col); embeddings flatten as F×(N·h·w) in the same order.
    std::vector<double> onehot(pixels * k, 0.0);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < pixels; ++i) {
        const std::int32_t y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= k) continue;
        onehot[i * k + static_cast<std::size_t>(y)] = 1.0;
        ++counts[static_cast<std::size_t>(y)];
    }
    const Tensor flat = ops::reshape(ops::permute(z, {1, 0, 2, 3}), {f, pixels});
    const Tensor sums = ops::matmul(flat, Tensor::from_vector({pixels, k}, std::move(onehot)));
    const Tensor normalized = ops::l2_normalize(sums, 0);

    std::vector<double> keep(f * k, 0.0);
    std::vector<double> fallback(f * k, 0.0);
    PrototypeUpdate out;
    out.bank = bank;
    for (std::size_t c = 0; c < k; ++c) {
        out.bank.fresh[c] = counts[c] > 0;
        for (std::size_t i = 0; i < f; ++i) {
            if (counts[c] > 0) {
                keep[i * k + c] = 1.0;
            } else if (bank.available[c]) {
                fallback[i * k + c] = bank.history.data()[i * k + c];
            }
        }
        out.bank.available[c] = counts[c] > 0 || bank.available[c];
    }
    out.prototypes = ops::add(ops::mul(normalized, Tensor::from_vector({f, k}, std::move(keep))),
                              Tensor::from_vector({f, k}, std::move(fallback)));
    out.bank.vectors = out.prototypes.detach();
    out.bank.history = out.bank.vectors.detach();
    return out;
}

Tensor prototype_scores(const Tensor& z, const Tensor& prototypes) {
    if (z.rank() != 4 || prototypes.rank() != 2 || prototypes.dim(0) != z.dim(1)) {
        throw std::invalid_argument("prototype_scores: shape mismatch " +
                                    shape_to_string(z.shape()) + " vs " +
                                    shape_to_string(prototypes.shape()));
    }
    const std::size_t f = prototypes.dim(0), k = prototypes.dim(1);
    const Tensor weight = ops::reshape(ops::transpose(prototypes), {k, f, 1, 1});
    return ops::conv2d(z, weight, Tensor{});
}

Tensor prototype_scores(const Tensor& z, const PrototypeBank& bank) {
    bank.require_available();
    return prototype_scores(z, bank.vectors);
}

Tensor segment_probs(const Tensor& scores, std::size_t height, std::size_t width, double tau) {
    if (!(tau > 0.0)) {
        throw std::invalid_argument("segment_probs: temperature must be > 0");
    }
    return ops::softmax(ops::upsample_bilinear(scores, height, width), 1, tau);
}

std::vector<std::int32_t> downsample_labels(std::span<const std::int32_t> labels, std::size_t n,
                                            std::size_t height, std::size_t width,
                                            std::size_t out_h, std::size_t out_w) {
    if (labels.size() != n * height * width) {
        throw std::invalid_argument("downsample_labels: label count does not match extent");
    }
    auto source_index = [](std::size_t i, std::size_t out, std::size_t in) {
        if (out <= 1) return std::size_t{0};
        const double pos = static_cast<double>(i) * static_cast<double>(in - 1) /
                           static_cast<double>(out - 1);
        return std::min<std::size_t>(static_cast<std::size_t>(std::lround(pos)), in - 1);
    };
    std::vector<std::int32_t> out(n * out_h * out_w);
    for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t i = 0; i < out_h; ++i) {
            const std::size_t y = source_index(i, out_h, height);
            for (std::size_t j = 0; j < out_w; ++j) {
                const std::size_t x = source_index(j, out_w, width);
                out[(b * out_h + i) * out_w + j] = labels[(b * height + y) * width + x];
            }
        }
    }
    return out;
}

}  // namespace gssl
