#include "gssl/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "gssl/ops.hpp"
#include "gssl/tensor_io.hpp"
#include "gssl/uncertainty.hpp"

namespace gssl {

namespace {

using json = nlohmann::json;

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json point_json(const CurvePoint& p) {
    return {{"threshold", std::isfinite(p.threshold) ? json(p.threshold) : json(p.threshold > 0 ? "inf" : "-inf")},
            {"tp", p.counts.tp},
            {"fp", p.counts.fp},
            {"tn", p.counts.tn},
            {"fn", p.counts.fn},
            {"precision", p.precision},
            {"recall", p.recall},
            {"f_beta", p.f_beta},
            {"a_md", p.a_md},
            {"p_ac", p.p_ac}};
}

}  // namespace

PrototypeBank source_prototypes(const ModelState& m, const Dataset& source, std::size_t batch) {
    if (!source.has_labels()) throw std::invalid_argument("source_prototypes: source set has no labels");
    NoGradGuard no_grad;
    const std::size_t f = m.config.feature_dim, k = m.config.num_classes, e = source.extent;
    std::vector<double> sums(f * k, 0.0);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t start = 0; start < source.size(); start += batch) {
        std::vector<std::size_t> idx;
        for (std::size_t i = start; i < std::min(start + batch, source.size()); ++i) idx.push_back(i);
        const Tensor z = project(encode(stack_images(source, idx), m), m);
        const std::size_t h = z.dim(2), w = z.dim(3), hw = h * w;
        std::vector<std::int32_t> labels;
        for (auto i : idx) labels.insert(labels.end(), source.labels[i].begin(), source.labels[i].end());
        const auto down = downsample_labels(labels, idx.size(), e, e, h, w);
        const auto zd = z.data();
        for (std::size_t b = 0; b < idx.size(); ++b) {
            for (std::size_t p = 0; p < hw; ++p) {
                const std::int32_t y = down[b * hw + p];
                if (y < 0 || static_cast<std::size_t>(y) >= k) continue;
                ++counts[static_cast<std::size_t>(y)];
                for (std::size_t c = 0; c < f; ++c) {
                    sums[c * k + static_cast<std::size_t>(y)] += zd[(b * f + c) * hw + p];
                }
            }
        }
    }
    // Normalization reuses the autodiff primitive so results match training.
    const Tensor normalized = ops::l2_normalize(Tensor::from_vector({f, k}, sums), 0);
    PrototypeBank bank = m.bank;
    auto vec = bank.vectors.detach();
    auto out = vec.mutable_data();
    for (std::size_t c = 0; c < k; ++c) {
        bank.fresh[c] = counts[c] > 0;
        if (counts[c] == 0) continue;
        bank.available[c] = true;
        for (std::size_t i = 0; i < f; ++i) out[i * k + c] = normalized.data()[i * k + c];
    }
    bank.vectors = vec;
    bank.history = vec.detach();
    return bank;
}

namespace {

// Upsampled prototype scores for consecutive batches of `images`.
template <typename Visit>
void for_each_scored_batch(const ModelState& m, const PrototypeBank& prototypes, const Dataset& images,
                           std::size_t batch, Visit visit) {
    NoGradGuard no_grad;
    const std::size_t e = images.extent;
    for (std::size_t start = 0; start < images.size(); start += batch) {
        std::vector<std::size_t> idx;
        for (std::size_t i = start; i < std::min(start + batch, images.size()); ++i) idx.push_back(i);
        const Tensor z = project(encode(stack_images(images, idx), m), m);
        visit(idx, ops::upsample_bilinear(prototype_scores(z, prototypes), e, e));
    }
}

}  // namespace

std::vector<PixelRecord> evaluate_records(const ModelState& m, const PrototypeBank& prototypes,
                                          const Dataset& test, std::size_t batch) {
    if (!test.has_labels()) throw std::invalid_argument("evaluate_records: test set has no labels");
    const std::size_t e = test.extent, k = m.config.num_classes;
    std::vector<PixelRecord> records;
    for_each_scored_batch(m, prototypes, test, batch, [&](const std::vector<std::size_t>& idx, const Tensor& scores) {
        const auto maxima = max_scores(scores);
        const auto classes = argmax_classes(scores);
        for (std::size_t b = 0; b < idx.size(); ++b) {
            const auto& labels = test.labels[idx[b]];
            for (std::size_t p = 0; p < e * e; ++p) {
                const std::int32_t y = labels[p];
                if (y == kVoidLabel) continue;
                const std::size_t i = b * e * e + p;
                const bool accurate = static_cast<std::size_t>(y) < k &&
                                      classes[i] == static_cast<std::size_t>(y);
                records.push_back({-maxima[i], accurate, static_cast<std::uint32_t>(idx[b])});
            }
        }
    });
    return records;
}

double dominant_class_fraction(const ModelState& m, const PrototypeBank& prototypes, const Dataset& images,
                               std::size_t batch) {
    if (images.size() == 0) throw std::invalid_argument("dominant_class_fraction: empty dataset");
    std::vector<std::size_t> counts(m.config.num_classes, 0);
    std::size_t total = 0;
    for_each_scored_batch(m, prototypes, images, batch, [&](const std::vector<std::size_t>&, const Tensor& scores) {
        for (auto c : argmax_classes(scores)) ++counts[c];
        total += scores.numel() / scores.dim(1);
    });
    return static_cast<double>(*std::max_element(counts.begin(), counts.end())) / static_cast<double>(total);
}

void write_records(const std::filesystem::path& path, const std::vector<PixelRecord>& records) {
    StoredTensor t{DType::f64, {records.size(), 3}, {}};
    t.values.reserve(records.size() * 3);
    for (const auto& r : records) {
        t.values.push_back(r.score);
        t.values.push_back(r.accurate ? 1.0 : 0.0);
        t.values.push_back(static_cast<double>(r.image));
    }
    write_tensor(path, t);
}

std::vector<PixelRecord> read_records(const std::filesystem::path& path) {
    const StoredTensor t = read_tensor(path);
    if (t.shape.size() != 2 || t.shape[1] != 3) {
        throw std::runtime_error(path.string() + ": expected an n x 3 record dump, got " +
                                 shape_to_string(t.shape));
    }
    std::vector<PixelRecord> out(t.shape[0]);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = {t.values[3 * i], t.values[3 * i + 1] != 0.0,
                  static_cast<std::uint32_t>(t.values[3 * i + 2])};
    }
    return out;
}

std::string sweep_summary_json(const SweepSummary& s, std::span<const PixelRecord> records,
                               std::optional<double> gamma) {
    std::size_t accurate = 0;
    for (const auto& r : records) accurate += r.accurate ? 1 : 0;
    json doc = {{"n_pixels", records.size()},
                {"accuracy", records.empty() ? 0.0 : static_cast<double>(accurate) / static_cast<double>(records.size())},
                {"beta", s.beta},
                {"auroc", optional_number(s.auroc)},
                {"aupr", optional_number(s.aupr)},
                {"max_f05", s.best_fbeta.f_beta},
                {"max_f05_p_ac", s.best_fbeta.p_ac},
                {"max_f05_threshold", point_json(s.best_fbeta)["threshold"]},
                {"max_amd", s.best_amd.a_md},
                {"max_amd_p_ac", s.best_amd.p_ac},
                {"max_amd_threshold", point_json(s.best_amd)["threshold"]},
                {"degenerate", s.degenerate}};
    if (gamma) {
        json row = point_json(evaluate_threshold(records, threshold_from_gamma(*gamma), s.beta));
        row["gamma"] = *gamma;
        doc["trained_gamma"] = row;
    } else {
        doc["trained_gamma"] = nullptr;
    }
    return doc.dump(2) + "\n";
}

std::string protocol_report_json(const ProtocolReport& r) {
    json sizes = json::array();
    for (const auto& v : r.by_size) {
        sizes.push_back({{"validation_images", v.validation_images},
                         {"trials", v.achieved_amd.size()},
                         {"a_md_mean", mean_of(v.achieved_amd)},
                         {"a_md_std", stddev_of(v.achieved_amd)},
                         {"f05_mean", mean_of(v.achieved_fbeta)},
                         {"f05_std", stddev_of(v.achieved_fbeta)},
                         {"optimal_a_md_mean", mean_of(v.optimal_amd)},
                         {"optimal_f05_mean", mean_of(v.optimal_fbeta)},
                         {"a_md", v.achieved_amd},
                         {"f05", v.achieved_fbeta}});
    }
    json doc = {{"beta", r.beta}, {"validation_sizes", sizes}};
    if (r.zero_validation) {
        const auto& z = *r.zero_validation;
        json row = point_json(z.at_gamma);
        row["gamma"] = z.gamma;
        row["max_a_md"] = z.max_amd;
        row["max_f05"] = z.max_fbeta;
        row["f05_gap"] = z.max_fbeta - z.at_gamma.f_beta;
        doc["zero_validation"] = row;
    } else {
        doc["zero_validation"] = nullptr;
    }
    return doc.dump(2) + "\n";
}

std::string cross_domain_json(const CrossDomainReport& r, const std::string& from, const std::string& to) {
    const json doc = {{"from", from},
                      {"to", to},
                      {"threshold", r.threshold},
                      {"f05_applied", r.fbeta_applied},
                      {"f05_optimal", r.fbeta_optimal},
                      {"delta_f05", r.delta}};
    return doc.dump(2) + "\n";
}

}  // namespace gssl
